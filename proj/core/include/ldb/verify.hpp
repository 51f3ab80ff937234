#pragma once

#include "ldb/bounds.hpp"
#include "ldb/model.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ldb {

struct McConfig {
    std::size_t n_paths = 10000;
    double steps_per_unit = 200.0;  // Euler steps per unit time; at least 10 steps per run
    std::uint64_t seed = 0;
    // Per-axis KDE bandwidth; empty means sample sd * n^{-1/(q+4)}.
    std::vector<double> bandwidth;
    double confidence = 0.99;
    std::size_t batches = 20;
    unsigned threads = 0;

    void validate() const;
    [[nodiscard]] std::size_t steps_for(double horizon) const;
};

struct EulerResult {
    std::vector<Vector> terminal;  // finite terminal states, in path order
    std::size_t excluded = 0;      // paths that became non-finite
    std::size_t steps = 0;
    // Full trajectories when requested (excluded paths omitted).
    std::vector<std::vector<Vector>> paths;
};

[[nodiscard]] EulerResult euler_maruyama(const DiffusionModel& model, const Vector& x0, double T,
                                         const McConfig& cfg, bool keep_paths = false);

struct KdeEstimate {
    double estimate = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    std::vector<double> bandwidth;
    std::size_t batches = 0;
    std::size_t n = 0;
};

// Product-kernel estimate at y with the one-dimensional mollifier as kernel;
// confidence interval from batch means with Student-t quantiles.
[[nodiscard]] KdeEstimate kde_at_point(const std::vector<Vector>& samples, const Vector& y,
                                       const std::vector<double>& bandwidth = {},
                                       double confidence = 0.99, std::size_t batches = 20);

struct RemainderScaling {
    std::vector<double> deltas;
    std::vector<double> norms;  // (E |Gamma_delta|^p)^{1/p}
    double slope = 0.0;
    double intercept = 0.0;
    bool degenerate = false;
    // Largest |X_{t+delta} - X_t - sigma(X_t) dB - Gamma| over all paths.
    double max_identity_residual = 0.0;
    std::size_t excluded = 0;
};

// Simulates to time t, then over [t, t + delta] with 32 Euler substeps, and
// fits the log-log slope of the L^p norm of the remainder
// Gamma = sum (sigma(X_j) - sigma(X_t)) dB_j + sum b(X_j) ds.
[[nodiscard]] RemainderScaling remainder_scaling(const DiffusionModel& model, const Vector& x0,
                                                 double t, const std::vector<double>& deltas,
                                                 int p, const McConfig& cfg);

enum class Verdict { Pass, Vacuous, Fail };

[[nodiscard]] std::string to_string(Verdict v);

struct VerifyResult {
    Verdict verdict = Verdict::Vacuous;
    double log_bound = 0.0;
    double bound = 0.0;
    KdeEstimate kde;
    std::size_t excluded = 0;
};

// ln(1e-300): bounds below this are reported as vacuous.
inline constexpr double kVacuousLogBound = -690.77552789821368;

[[nodiscard]] Verdict classify_bound(double log_bound, const KdeEstimate& kde);

[[nodiscard]] VerifyResult verify_bound(const DiffusionModel& model, const Vector& x0,
                                        const Vector& y, double T, const BoundReport& report,
                                        const McConfig& cfg);

}  // namespace ldb
