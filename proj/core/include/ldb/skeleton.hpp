#pragma once

#include "ldb/grid.hpp"
#include "ldb/model.hpp"

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ldb {

// Piecewise-constant control: phi_t = values[k] on [grid[k], grid[k+1]).
class Control {
public:
    Control(std::vector<double> grid, std::vector<Vector> values);

    // `pieces` equal pieces on [0, T], all equal to v.
    [[nodiscard]] static Control constant(const Vector& v, double t_end, int pieces = 1);
    // Equal pieces on [0, T] with the given values.
    [[nodiscard]] static Control uniform(std::vector<Vector> values, double t_end);

    [[nodiscard]] const std::vector<double>& grid() const noexcept { return grid_; }
    [[nodiscard]] const std::vector<Vector>& values() const noexcept { return values_; }
    [[nodiscard]] std::size_t pieces() const noexcept { return values_.size(); }
    [[nodiscard]] int dim() const noexcept { return static_cast<int>(values_.front().size()); }
    [[nodiscard]] double horizon() const noexcept { return grid_.back(); }
    // Right-continuous value; the last piece at t = T.
    [[nodiscard]] const Vector& at(double t) const;
    [[nodiscard]] std::size_t piece_index(double t) const;

private:
    std::vector<double> grid_;
    std::vector<Vector> values_;
};

// sqrt(sum_k |values[k]|^2 (s_{k+1} - s_k)), exact.
[[nodiscard]] double control_norm(const Control& control);

// Sampled skeleton path. derivs[i] is the right-limit of d/dt x at times[i]
// (the left limit at the final time).
struct SkeletonPath {
    std::vector<double> times;
    std::vector<Vector> states;
    std::vector<Vector> derivs;

    [[nodiscard]] std::size_t size() const noexcept { return times.size(); }
    [[nodiscard]] const Vector& terminal() const { return states.back(); }
    [[nodiscard]] double horizon() const { return times.back(); }
};

// Classical RK4 restarted at every control breakpoint; each piece is split
// into ceil(length / step) equal substeps.
[[nodiscard]] SkeletonPath integrate_skeleton(const DiffusionModel& model, const Control& control,
                                              const Vector& x0, double step);

// Least-norm control sigma^*(sigma sigma^*)^{-1} v at x. Throws DegenerateError
// (with the given time) when sigma sigma^*(x) is numerically singular.
[[nodiscard]] Vector least_norm_control(const DiffusionModel& model, const Vector& x,
                                        const Vector& v, double time = 0.0);

// Piecewise-constant control on the path's sample cells, recovered from the
// derivative at the left end of each cell.
[[nodiscard]] Control recover_control(const DiffusionModel& model, const SkeletonPath& path);

struct ThetaParams {
    double mu = 1.0;      // rho(x_t) >= 1/mu
    double chi = 1.0;     // sqrt(lambda_*(x_t)) >= 1/chi
    double nu_ctl = 1.0;  // |phi_t| <= nu
    double eta_ctl = 1.0; // |phi_t| <= eta |phi_s| for |s - t| <= h
    double h_ctl = 1.0;
    double T = 1.0;

    void validate() const;
};

struct AdmissibilityReport {
    bool endpoint_ok = false;
    double endpoint_miss = 0.0;
    double endpoint_tol = 0.0;
    bool rho_ok = false;
    double rho_margin = 0.0;     // min rho - 1/mu
    bool lambda_ok = false;
    double lambda_margin = 0.0;  // min sqrt(lambda_*) - 1/chi
    bool ratio_ok = false;
    double ratio_margin = 0.0;   // min eta |phi_s| - |phi_t| over in-window pairs
    bool sup_ok = false;
    double sup_margin = 0.0;     // nu - max |phi|
    // Alternative ellipticity predicate lambda_* / lambda^* >= 1/mu; reported
    // only, never part of feasible().
    bool eigen_ratio_ok = false;
    double eigen_ratio_margin = 0.0;
    double max_control_norm = 0.0;
    double observed_eta = 1.0;   // smallest eta that would pass the ratio check

    [[nodiscard]] bool feasible() const noexcept {
        return endpoint_ok && rho_ok && lambda_ok && ratio_ok && sup_ok;
    }
};

// Endpoint tolerance defaults to 1e-6 (1 + |y|) when endpoint_tol < 0.
[[nodiscard]] AdmissibilityReport check_admissible(const DiffusionModel& model,
                                                   const Control& control,
                                                   const SkeletonPath& path,
                                                   const ThetaParams& theta, const Vector& y,
                                                   double endpoint_tol = -1.0);

struct GrowthWindow {
    bool found = false;
    double h_g = 0.0;
    // M as a step function on the path cells: M_t = cell_values[i] on
    // [times[i], times[i+1]).
    std::vector<double> times;
    std::vector<double> cell_values;
    double eta_m = 1.0;   // envelope constant of M for window h_m
    double h_m = 0.0;
    double integral_m2 = 0.0;           // integral_0^T M^2
    std::vector<double> probe_values;   // sorted probes
    std::vector<double> probe_worst;    // max_t h int_t^{t+h} M^2 per probe
    double max_growth_ratio = 0.0;      // max N(x_s)/N(x_t) over |s-t| <= h_G
    bool conclusion_ok = false;         // max_growth_ratio <= 4
    std::string diagnostics;
};

// Step-function M from the path: |d/dt x| / N(x) at the left end of each cell.
[[nodiscard]] std::vector<double> path_growth_rates(const DiffusionModel& model,
                                                    const SkeletonPath& path);

// M_t = C0 |phi_t| on the path cells.
[[nodiscard]] std::vector<double> control_growth_rates(const DiffusionModel& model,
                                                       const Control& control,
                                                       const SkeletonPath& path);

// Largest probe h with h * int_t^{t+h} M^2 <= 1/(4q) for all t. M defaults to
// path_growth_rates; window integrals are exact for the step function and the
// supremum over t is taken at every alignment of the window with a cell edge.
[[nodiscard]] GrowthWindow growth_window(const DiffusionModel& model, const SkeletonPath& path,
                                         int q, std::span<const double> probe_h,
                                         std::optional<std::vector<double>> cell_values = {});

// CSV with columns t, phi_1..phi_d (one row per piece start).
void write_control_csv(const Control& control, std::ostream& out);
// CSV with columns t, x_1..x_q.
void write_path_csv(const SkeletonPath& path, std::ostream& out);

}  // namespace ldb
