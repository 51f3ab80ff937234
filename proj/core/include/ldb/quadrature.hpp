#pragma once

#include <functional>
#include <vector>

namespace ldb {

// Gauss-Legendre rule on [-1, 1].
struct GaussLegendreRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

// Cached n-point rule; n >= 1.
[[nodiscard]] const GaussLegendreRule& gauss_legendre(unsigned n);

// Adaptive Gauss-Kronrod integral of f over [a, b] to relative tolerance.
[[nodiscard]] double integrate_adaptive(const std::function<double(double)>& f, double a,
                                        double b, double rel_tol = 1e-12);

}  // namespace ldb
