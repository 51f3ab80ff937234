#pragma once

#include "ldb/bounds.hpp"
#include "ldb/linalg.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ldb {

// phi_eta(y) = eta^{-q} c exp(-1 / (1 - |y/eta|^2)) inside the ball of radius
// eta, zero outside. c normalizes phi to unit mass.
class Mollifier {
public:
    Mollifier(int q, double eta);

    [[nodiscard]] int q() const noexcept { return q_; }
    [[nodiscard]] double eta() const noexcept { return eta_; }
    [[nodiscard]] double c() const noexcept { return c_; }
    [[nodiscard]] double operator()(const Vector& y) const;
    // Same for a scalar argument in dimension one.
    [[nodiscard]] double operator()(double y) const;

    // c for dimension q, by adaptive radial quadrature (cached).
    [[nodiscard]] static double normalizing_constant(int q);

private:
    int q_;
    double eta_;
    double c_;
};

// E phi_eta(G - z) for G ~ N(mean, cov). Tensor Gauss-Legendre with `nodes`
// points per axis over the support for q <= 3.
[[nodiscard]] double mollified_gaussian(const Mollifier& phi, const Vector& mean,
                                        const Matrix& cov, const Vector& z, unsigned nodes = 64);

struct MinorizationResult {
    double lhs = 0.0;
    double rhs = 0.0;
    double lhs_se = 0.0;  // Monte Carlo standard error, 0 for quadrature
    bool pass = false;
    std::string method;   // "quadrature" or "monte-carlo"
};

// E(phi_eta(G - z)) >= 1/(e^2 (2 pi a)^{q/2} sqrt(det M)) for G ~ N(V, C) with
// a M >= C >= M, |V - z|_{M^{-1}} <= 1 and 0 < eta < sqrt(lambda_min(M)).
// C defaults to M. Pass uses slack 1e-8; above q = 3 the lhs is estimated by
// Monte Carlo and passes unless its 3-SE upper edge is below the rhs.
[[nodiscard]] MinorizationResult gaussian_minorization_check(
    const Matrix& m, double a, const Vector& v, const Vector& z, double eta,
    const std::optional<Matrix>& c = std::nullopt, std::uint64_t seed = 0);

struct GramResult {
    double lhs = 0.0;
    double rhs = 0.0;
    bool pass = false;
};

// det(Gram(U + W))^{1/q} >= lambda_min(Gram U) / 2 - lambda_max(Gram W) with
// Gram(A) = A A^*, slack 1e-10.
[[nodiscard]] GramResult gram_perturbation_check(const Matrix& u, const Matrix& w);

struct RemainderSpec {
    enum class Kind { Zero, Quadratic };
    Kind kind = Kind::Zero;
    // R^i = epsilon (increment of B^{i mod d} over the step)^2.
    double epsilon = 0.0;
};

// F_k = F_{k-1} + J_k + R_k, F_0 = x_0, J_k = kernel_k (B_{t_k} - B_{t_{k-1}}).
// Per-step vectors (m, a, h_ratio, kernels, remainders) are indexed k - 1.
struct EvolutionConfig {
    int q = 1;
    std::vector<double> times;        // t_0 < ... < t_N
    std::vector<Matrix> m;            // M_k, SPD
    std::vector<double> a;            // a_k >= 1
    std::vector<double> h_ratio;      // H_k >= 1 (H_1 unused)
    std::vector<Vector> x;            // waypoints x_0..x_N
    std::vector<Matrix> kernels;      // q x d_k
    std::vector<RemainderSpec> remainders;
    // Replaces ln(1/(C_q a_k^{4(q+1)^2})) in the remainder condition; reported
    // as relaxed.
    std::optional<double> relaxed_log_threshold;
    UniversalConstants constants = make_constants(1);

    [[nodiscard]] int steps() const noexcept { return static_cast<int>(times.size()) - 1; }
    // Checks sizes, H_k^2 M_k >= M_{k-1}, |x_k - x_{k-1}|_{M_k^{-1}} <= 1/4 and
    // a_k M_k >= C(J_k) >= M_k.
    void validate() const;
};

struct ProportionEstimate {
    std::size_t hits = 0;
    std::size_t n = 0;
    double p = 0.0;
    double se = 0.0;
    double lo = 0.0;  // Wilson interval
    double hi = 0.0;
};

[[nodiscard]] ProportionEstimate wilson_interval(std::size_t hits, std::size_t n, double z);

struct DensityRequest {
    int k = 1;
    Vector z;
};

struct DensityCheck {
    int k = 1;
    Vector z;
    double log_bound = 0.0;   // ln 1/(4 e^2 (2 pi a_k)^{q/2} sqrt(det M_k))
    double min_value = 0.0;   // smallest conditional value over checked paths
    double mean_value = 0.0;
    std::size_t paths_checked = 0;
    bool pass = false;
    std::string method;       // "closed-form" or "nested-monte-carlo"
};

struct StepCheck {
    int k = 2;
    double log_factor = 0.0;  // ln of the per-step factor
    double lhs = 0.0;         // P(A_k)
    double rhs = 0.0;         // factor * P(A_{k-1})
    double tolerance = 0.0;   // 3 combined standard errors
    bool pass = false;
};

struct RemainderCheck {
    int k = 1;
    double log_norm_bound = -std::numeric_limits<double>::infinity();
    double log_threshold = 0.0;
    bool relaxed = false;
    bool ok = true;
};

struct EvolutionStats {
    std::size_t n_paths = 0;
    std::vector<ProportionEstimate> tube;  // P(A_k), k = 1..N, 99% Wilson
    double theta_rate = 0.0;
    double log_tube_bound = 0.0;           // -N q theta
    double log_step_product = 0.0;         // product of per-step factors
    bool tube_pass = false;                // lower CI edge >= e^{-N q theta}
    std::vector<StepCheck> steps;
    std::vector<DensityCheck> densities;
    std::vector<RemainderCheck> remainders;
};

struct EvolutionRunOptions {
    std::size_t n_paths = 100000;
    std::uint64_t seed = 0;
    double eta = 0.1;
    std::size_t max_closed_form_paths = 2000;
    std::size_t max_nested_paths = 200;
    std::size_t nested_samples = 4000;
    unsigned threads = 0;
};

[[nodiscard]] EvolutionStats simulate_evolution(const EvolutionConfig& cfg,
                                                const std::vector<DensityRequest>& requests,
                                                const EvolutionRunOptions& options);

// ln (E (Z^2 + 2)^p)^{1/p} for a standard normal Z and integer p >= 1.
[[nodiscard]] double log_quadratic_moment(int p);

}  // namespace ldb
