#pragma once

#include "ldb/linalg.hpp"

#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace ldb {

// dX = sigma(X) dB + b(X) dt on R^q driven by a d-dimensional Brownian motion,
// together with the growth flags eps and the constant C0 of hypothesis (A).
class DiffusionModel {
public:
    using SigmaFn = std::function<Matrix(const Vector&)>;
    using DriftFn = std::function<Vector(const Vector&)>;
    // Element k holds d sigma / d x_k (q x d).
    using SigmaPartialsFn = std::function<std::vector<Matrix>(const Vector&)>;
    // Column k holds d b / d x_k.
    using DriftJacobianFn = std::function<Matrix(const Vector&)>;

    DiffusionModel(std::string name, int q, int d, SigmaFn sigma, DriftFn drift,
                   std::vector<int> eps, double c0);

    [[nodiscard]] const std::string& name() const noexcept { return name_; }
    [[nodiscard]] int q() const noexcept { return q_; }
    [[nodiscard]] int d() const noexcept { return d_; }
    [[nodiscard]] const std::vector<int>& eps() const noexcept { return eps_; }
    [[nodiscard]] double c0() const noexcept { return c0_; }

    [[nodiscard]] Matrix sigma(const Vector& x) const;
    [[nodiscard]] Vector drift(const Vector& x) const;
    [[nodiscard]] Matrix diffusion_matrix(const Vector& x) const;  // sigma sigma^*

    // Analytic when supplied, otherwise central differences with step
    // 1e-5 * (1 + |x|).
    [[nodiscard]] std::vector<Matrix> sigma_partials(const Vector& x) const;
    [[nodiscard]] Matrix drift_jacobian(const Vector& x) const;
    [[nodiscard]] bool has_analytic_derivatives() const noexcept {
        return static_cast<bool>(sigma_partials_) && static_cast<bool>(drift_jacobian_);
    }

    DiffusionModel& set_sigma_partials(SigmaPartialsFn fn);
    DiffusionModel& set_drift_jacobian(DriftJacobianFn fn);

    [[nodiscard]] DiffusionModel with_c0(double c0) const;
    [[nodiscard]] DiffusionModel with_eps(std::vector<int> eps) const;

    void check_point(const Vector& x, const char* where) const;

private:
    std::string name_;
    int q_;
    int d_;
    SigmaFn sigma_;
    DriftFn drift_;
    SigmaPartialsFn sigma_partials_;
    DriftJacobianFn drift_jacobian_;
    std::vector<int> eps_;
    double c0_;
};

// N(x) = sqrt(eps_0 + sum_i eps_i (x^i)^2).
[[nodiscard]] double growth_norm(const DiffusionModel& model, const Vector& x);

struct SpectralData {
    double lambda_min = 0.0;  // smallest eigenvalue of sigma sigma^*(x)
    double lambda_max = 0.0;  // largest eigenvalue
    double rho = 0.0;         // sqrt(lambda_min) / N(x)
    double det = 0.0;         // det sigma sigma^*(x)
};

[[nodiscard]] SpectralData spectral(const DiffusionModel& model, const Vector& x);

// Outcome of checking hypothesis (A) on one sample pair (x, y).
struct HypothesisSample {
    Vector x;
    Vector y;
    // (A,i) at both x and y: max_i(|sigma^i| + |b^i|) <= C0 N.
    bool growth_ok = true;
    double growth_margin = 0.0;
    // (A,ii) on the pair.
    bool lipschitz_ok = true;
    double lipschitz_margin = 0.0;
    // (A,iii) for derivative orders 1..max_order, at x and y.
    bool derivative_ok = true;
    double derivative_margin = 0.0;
    // Consequences (A,iv)-(A,vi).
    bool lambda_max_ok = true;
    double lambda_max_margin = 0.0;
    bool quadratic_form_ok = true;
    double quadratic_form_margin = 0.0;
    bool determinant_ok = true;
    double determinant_margin = 0.0;

    [[nodiscard]] bool assumptions_ok() const noexcept {
        return growth_ok && lipschitz_ok && derivative_ok;
    }
    [[nodiscard]] bool consequences_ok() const noexcept {
        return lambda_max_ok && quadratic_form_ok && determinant_ok;
    }
};

struct HypothesisReport {
    std::vector<HypothesisSample> samples;
    int max_order_checked = 0;
    // Derivative orders up to q + 2 are required; orders above
    // max_order_checked are accepted as asserted by the model author.
    int declared_order = 0;

    [[nodiscard]] bool growth_ok() const;
    [[nodiscard]] bool lipschitz_ok() const;
    [[nodiscard]] bool derivative_ok() const;
    [[nodiscard]] bool consequences_ok() const;
    [[nodiscard]] bool all_ok() const;
};

[[nodiscard]] HypothesisReport check_hypothesis_A(
    const DiffusionModel& model, std::span<const std::pair<Vector, Vector>> samples,
    int max_order = 2);

}  // namespace ldb
