#include "ldb/quadrature.hpp"

#include "ldb/error.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/legendre.hpp>

#include <map>
#include <mutex>

namespace ldb {

const GaussLegendreRule& gauss_legendre(unsigned n) {
    if (n == 0) {
        throw PreconditionError("gauss_legendre: need at least one node");
    }
    static std::mutex mutex;
    static std::map<unsigned, GaussLegendreRule> cache;
    std::lock_guard lock(mutex);
    auto it = cache.find(n);
    if (it != cache.end()) {
        return it->second;
    }

    // legendre_p_zeros returns the non-negative roots only.
    const std::vector<double> half = boost::math::legendre_p_zeros<double>(static_cast<int>(n));
    GaussLegendreRule rule;
    for (double x : half) {
        const double p = boost::math::legendre_p_prime(static_cast<int>(n), x);
        const double w = 2.0 / ((1.0 - x * x) * p * p);
        rule.nodes.push_back(x);
        rule.weights.push_back(w);
        if (x != 0.0) {
            rule.nodes.push_back(-x);
            rule.weights.push_back(w);
        }
    }
    return cache.emplace(n, std::move(rule)).first->second;
}

double integrate_adaptive(const std::function<double(double)>& f, double a, double b,
                          double rel_tol) {
    double error = 0.0;
    return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 20, rel_tol,
                                                                         &error);
}

}  // namespace ldb
