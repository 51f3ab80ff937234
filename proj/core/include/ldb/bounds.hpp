#pragma once

#include "ldb/grid.hpp"
#include "ldb/skeleton.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace ldb {

// Dimension-dependent constants. The five configurable values are never
// given numerically by the theory; the defaults are placeholders and are
// echoed in every report.
struct ConstantOverrides {
    std::optional<double> p_star;
    std::optional<double> c_star;
    std::optional<double> mu_k;
    std::optional<double> c_mp;  // C(q + 2, p_q)
    std::optional<double> k_q;
};

// Sets the field named by key (p_star, c_star, mu_k, C_mp, K_q); throws
// PreconditionError for an unknown key.
void set_override(ConstantOverrides& overrides, const std::string& key, double value);

struct UniversalConstants {
    int q = 1;
    double p_star = 1.0;
    double c_star = 1.0;
    double mu_k = 1.0;
    double c_mp = 1.0;
    double k_q = 1.0;
    // Derived.
    double p_q = 0.0;      // 2^{2(q+2)} p_star
    double log_c_q = 0.0;  // ln(c_star mu_k e^2 (2 pi)^{q/2} 4^{3(q+3)^3} (q+1)^{q+3})
    double log_m_q = 0.0;  // ln(4^{q+3} (q+1)^{q+3})
    double m_q = 0.0;      // exp(log_m_q), may be inf for large q
};

[[nodiscard]] UniversalConstants make_constants(int q, const ConstantOverrides& overrides = {});

// Ellipticity data of a path, sampled at the path times.
struct EllipticParams {
    std::vector<double> times;
    std::vector<Matrix> q_mats;  // Q_t = sigma sigma^*(x_t) / 2
    std::vector<double> r;       // rho^2 / (6 q^{3/2} C0^3)
    std::vector<double> k;       // C_mp (1/rho + 1/sqrt(lambda_*))
    double a = 1.5;
    double nu_exp = 0.5;
};

[[nodiscard]] EllipticParams elliptic_params(const DiffusionModel& model,
                                             const SkeletonPath& path,
                                             const UniversalConstants& constants);

struct TubeCheckReport {
    std::size_t probes = 0;
    std::size_t violations = 0;
    std::size_t upper_violations = 0;
    std::size_t lower_violations = 0;
    double worst_upper_margin = 0.0;  // min eig((3/2) sigma sigma^*(x_t) - sigma sigma^*(X))
    double worst_lower_margin = 0.0;  // min eig(sigma sigma^*(X) - Q_t)
    std::optional<double> first_violation_time;
};

// Draws n_probe points in every tube {|X - x_t|_{Q_t^{-1}} <= r_t} (a quarter
// of them on the boundary) and checks
// (3/2) sigma sigma^*(x_t) >= sigma sigma^*(X) >= Q_t by smallest eigenvalue.
[[nodiscard]] TubeCheckReport tube_ellipticity_check(const DiffusionModel& model,
                                                     const SkeletonPath& path,
                                                     const EllipticParams& params, int n_probe,
                                                     std::uint64_t seed = 0);

struct BoundInputs {
    int q = 1;
    double T = 1.0;
    EnvelopeFn pi = EnvelopeFn::constant(1.0, 1.0);
    EnvelopeFn gamma = EnvelopeFn::constant(0.0, 1.0);
    double m_pi = 1.0;
    double h_pi = kInfiniteWindow;
    double m_gamma = 1.0;
    double h_gamma = kInfiniteWindow;
    double observed_m_gamma = 1.0;  // envelope constant of gamma found by scanning
    double m_Q = 1.0;
    double h_Q = kInfiniteWindow;
    double h = kInfiniteWindow;      // min(h_Q, h_pi, h_gamma)
    double k_diff = 1.0;
    double alpha = 0.0;
    double log_det_q_t = 0.0;        // ln det(sigma sigma^*(y) / 2)
};

// ln(8 e (2 pi q)^{1/4}) + ln m_Q + 4 ln m_gamma + ln m_pi
[[nodiscard]] double grid_alpha(int q, double m_Q, double m_gamma, double m_pi);

// Envelopes for an admissible control: constant pi, gamma = sqrt(2) mu C0 |phi|,
// m_Q = 4 sqrt(q) C0 mu with window 1/(2 sqrt(q) C0 nu).
[[nodiscard]] BoundInputs derive_envelopes(const DiffusionModel& model, const SkeletonPath& path,
                                           const Control& control, const ThetaParams& theta,
                                           const UniversalConstants& constants, const Vector& y);

struct BoundReport {
    std::string formula_id;  // thm15, cor14, thm17, thm21, thm24
    double log_lower_bound = 0.0;
    double prefactor_log = 0.0;
    double exponent_integral = 0.0;
    double exponent = 0.0;  // log_lower_bound = prefactor_log - exponent
    std::vector<std::pair<std::string, double>> trace;
    std::string diagnostics;

    [[nodiscard]] std::optional<double> find(const std::string& key) const;
};

// Density bound 1/(4e^2 (2 pi a_N)^{q/2} sqrt(det M_N)) e^{-N q theta} with
// theta = ln(64 e^2 (2 q pi)^{1/2}) + (1/2N) sum ln a_k + (1/N) sum ln H_k.
// a_list holds a_1..a_{N-1}, h_list holds H_2..H_N. The report also carries
// the tube bound -N q theta and the product of the per-step factors.
[[nodiscard]] BoundReport log_bound_evolution(int n, int q, const std::vector<double>& a_list,
                                              const std::vector<double>& h_list, double a_n,
                                              double det_m_n);

// ln of 1/(8^{q+1} H^q e^2 (2 q a_prev pi)^{q/2}).
[[nodiscard]] double log_tube_step_factor(int q, double a_prev, double h_k);

// Grid-based bound with exponent q (alpha + a/2) times the grid-count integral.
[[nodiscard]] BoundReport log_bound_thm17(const BoundInputs& inputs, double a, int q, double T,
                                          double det_q_t);

// Bound along a path with growth window data; the path must satisfy
// rho >= 1/mu and 1/sqrt(lambda_*) <= chi.
[[nodiscard]] BoundReport log_bound_thm21(const DiffusionModel& model, const SkeletonPath& path,
                                          const GrowthWindow& growth, double mu, double chi,
                                          const UniversalConstants& constants, double T,
                                          const Vector& y);

// Bound in terms of the control distance; d_theta = infinity gives -infinity.
[[nodiscard]] BoundReport log_bound_thm24(const DiffusionModel& model, const ThetaParams& theta,
                                          double d_theta, double T, const Vector& y,
                                          const UniversalConstants& constants);

}  // namespace ldb
