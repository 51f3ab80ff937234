#pragma once

#include "ldb/skeleton.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace ldb {

struct InitialControl {
    Control control;
    bool fell_back = false;  // zero control used because sigma sigma^* degenerates on the segment
    std::string note;
};

// Least-norm control of the constant-velocity straight path from x0 to y,
// evaluated at the midpoint of each of `pieces` equal pieces.
[[nodiscard]] InitialControl init_control(const DiffusionModel& model, const Vector& x0,
                                          const Vector& y, double t_end, int pieces);

enum class InnerMethod { PatternSearch, GradientDescent };

struct OptimizerConfig {
    int outer_iterations = 8;
    double initial_penalty = 10.0;
    double penalty_growth = 10.0;
    int inner_iterations = 200;   // sweeps per outer iteration
    int restarts = 3;
    std::uint64_t seed = 0;
    double violation_tol = 1e-4;
    double perturbation = 0.3;    // relative size of restart perturbations
    int substeps = 4;             // integrator steps per control piece
    double endpoint_tol = -1.0;   // < 0: 1e-6 (1 + |y|)
    InnerMethod method = InnerMethod::PatternSearch;
    unsigned threads = 0;
};

struct DistanceResult {
    // Upper estimate of the control-energy infimum; infinity when no
    // admissible control was found.
    double d_theta_upper = std::numeric_limits<double>::infinity();
    std::optional<Control> witness;
    std::optional<SkeletonPath> path;
    AdmissibilityReport report;
    int iterations = 0;         // objective evaluations over all restarts
    int feasible_restarts = 0;
    bool init_fell_back = false;
    std::string diagnostics;

    [[nodiscard]] bool feasible() const noexcept { return witness.has_value(); }
};

// Penalized minimization of |phi|_T^2 over piecewise-constant controls with
// `pieces` equal pieces. The returned value is always the norm of a control
// that passes check_admissible, hence an upper estimate of the infimum.
[[nodiscard]] DistanceResult minimize_energy(const DiffusionModel& model, const Vector& x0,
                                             const Vector& y, const ThetaParams& theta,
                                             int pieces, const OptimizerConfig& cfg = {});

}  // namespace ldb
