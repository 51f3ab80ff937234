#include "ldb/evolution.hpp"

#include "ldb/error.hpp"
#include "ldb/parallel.hpp"
#include "ldb/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <random>
#include <sstream>

namespace ldb {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kZ99 = 2.5758293035489004;

double bump(double s2) { return s2 < 1.0 ? std::exp(-1.0 / (1.0 - s2)) : 0.0; }

// Gaussian N(mean, cov) density evaluator.
class GaussianDensity {
public:
    GaussianDensity(const Vector& mean, const Matrix& cov) : mean_(mean), llt_(cov) {
        if (llt_.info() != Eigen::Success) {
            throw PreconditionError("Gaussian covariance is not positive definite");
        }
        const Matrix l = llt_.matrixL();
        const double log_det = 2.0 * l.diagonal().array().log().sum();
        log_norm_ = -0.5 * static_cast<double>(mean.size()) * std::log(2.0 * kPi) - 0.5 * log_det;
    }

    [[nodiscard]] double operator()(const Vector& x) const {
        const Vector w = llt_.matrixL().solve(x - mean_);
        return std::exp(log_norm_ - 0.5 * w.squaredNorm());
    }

private:
    Vector mean_;
    Eigen::LLT<Matrix> llt_;
    double log_norm_ = 0.0;
};

}  // namespace

double Mollifier::normalizing_constant(int q) {
    if (q < 1) {
        throw PreconditionError("Mollifier: q must be >= 1");
    }
    static std::mutex mutex;
    static std::map<int, double> cache;
    std::lock_guard<std::mutex> lock(mutex);
    if (auto it = cache.find(q); it != cache.end()) {
        return it->second;
    }
    const double qd = q;
    const double radial = integrate_adaptive(
        [qd](double r) { return std::pow(r, qd - 1.0) * bump(r * r); }, 0.0, 1.0, 1e-14);
    const double sphere = 2.0 * std::pow(kPi, 0.5 * qd) / std::tgamma(0.5 * qd);
    const double c = 1.0 / (sphere * radial);
    cache.emplace(q, c);
    return c;
}

Mollifier::Mollifier(int q, double eta) : q_(q), eta_(eta), c_(normalizing_constant(q)) {
    if (!(eta > 0.0) || !std::isfinite(eta)) {
        throw PreconditionError("Mollifier: eta must be positive and finite");
    }
}

double Mollifier::operator()(const Vector& y) const {
    if (y.size() != q_) {
        throw DimensionError("Mollifier: argument dimension differs from q");
    }
    return c_ * std::pow(eta_, -q_) * bump(y.squaredNorm() / (eta_ * eta_));
}

double Mollifier::operator()(double y) const {
    if (q_ != 1) {
        throw DimensionError("Mollifier: scalar argument needs q = 1");
    }
    return c_ / eta_ * bump(y * y / (eta_ * eta_));
}

double mollified_gaussian(const Mollifier& phi, const Vector& mean, const Matrix& cov,
                          const Vector& z, unsigned nodes) {
    const int q = phi.q();
    if (q > 3) {
        throw PreconditionError("mollified_gaussian: tensor quadrature is limited to q <= 3");
    }
    if (mean.size() != q || z.size() != q || cov.rows() != q || cov.cols() != q) {
        throw DimensionError("mollified_gaussian: dimensions differ from the mollifier's q");
    }
    const GaussLegendreRule& rule = gauss_legendre(nodes);
    const GaussianDensity density(mean, cov);
    const double eta = phi.eta();
    const auto n = rule.nodes.size();
    std::size_t total = 1;
    for (int j = 0; j < q; ++j) {
        total *= n;
    }
    double sum = 0.0;
    Vector u(q);
    for (std::size_t flat = 0; flat < total; ++flat) {
        std::size_t rest = flat;
        double w = 1.0;
        for (int j = 0; j < q; ++j) {
            const std::size_t i = rest % n;
            rest /= n;
            u[j] = eta * rule.nodes[i];
            w *= rule.weights[i];
        }
        const double f = phi(u);
        if (f > 0.0) {
            sum += w * f * density(z + u);
        }
    }
    return sum * std::pow(eta, q);
}

MinorizationResult gaussian_minorization_check(const Matrix& m, double a, const Vector& v,
                                               const Vector& z, double eta,
                                               const std::optional<Matrix>& c,
                                               std::uint64_t seed) {
    const auto q = m.rows();
    if (m.cols() != q || v.size() != q || z.size() != q || q < 1) {
        throw DimensionError("gaussian_minorization_check: dimension mismatch");
    }
    if (!is_symmetric(m) || min_eigenvalue(m) <= 0.0) {
        throw PreconditionError("gaussian_minorization_check: M must be symmetric positive definite");
    }
    if (!(a >= 1.0)) {
        throw PreconditionError("gaussian_minorization_check: a must be >= 1");
    }
    const double delta = min_eigenvalue(m);
    if (!(eta > 0.0) || !(eta < std::sqrt(delta))) {
        throw PreconditionError("gaussian_minorization_check: need 0 < eta < sqrt(lambda_min(M))");
    }
    if (inverse_norm(m, v - z) > 1.0 + 1e-12) {
        throw PreconditionError("gaussian_minorization_check: need |V - z|_{M^{-1}} <= 1");
    }
    const Matrix cov = c.value_or(m);
    if (cov.rows() != q || cov.cols() != q) {
        throw DimensionError("gaussian_minorization_check: covariance dimension mismatch");
    }
    const double tol = 1e-10 * (1.0 + m.cwiseAbs().maxCoeff() * a);
    if (min_eigenvalue(a * m - cov) < -tol || min_eigenvalue(cov - m) < -tol) {
        throw PreconditionError("gaussian_minorization_check: need a M >= C >= M");
    }

    MinorizationResult r;
    const double qd = static_cast<double>(q);
    r.rhs = std::exp(-2.0 - 0.5 * qd * std::log(2.0 * kPi * a) - 0.5 * std::log(psd_determinant(m)));
    const Mollifier phi(static_cast<int>(q), eta);
    if (q <= 3) {
        r.method = "quadrature";
        r.lhs = mollified_gaussian(phi, v, cov, z);
        r.pass = r.lhs >= r.rhs - 1e-8;
        return r;
    }

    // E phi_eta(G - z) = E_U p_G(z + U) with U drawn from phi_eta by rejection.
    r.method = "monte-carlo";
    const GaussianDensity density(v, cov);
    auto rng = stream_rng(seed, 0);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    constexpr std::size_t kSamples = 20000;
    double sum = 0.0;
    double sum2 = 0.0;
    std::size_t accepted = 0;
    Vector u(q);
    while (accepted < kSamples) {
        for (Eigen::Index j = 0; j < q; ++j) {
            u[j] = normal(rng);
        }
        const double radius = std::pow(uniform(rng), 1.0 / qd);
        u *= radius / u.norm();
        if (uniform(rng) * std::exp(-1.0) > bump(u.squaredNorm())) {
            continue;
        }
        const double f = density(z + eta * u);
        sum += f;
        sum2 += f * f;
        ++accepted;
    }
    const double n = static_cast<double>(kSamples);
    r.lhs = sum / n;
    r.lhs_se = std::sqrt(std::max(0.0, sum2 / n - r.lhs * r.lhs) / n);
    r.pass = r.lhs + 3.0 * r.lhs_se >= r.rhs - 1e-8;
    return r;
}

GramResult gram_perturbation_check(const Matrix& u, const Matrix& w) {
    if (u.rows() != w.rows() || u.cols() != w.cols() || u.rows() < 1 || u.cols() < 1) {
        throw DimensionError("gram_perturbation_check: U and W must have the same non-empty shape");
    }
    const double q = static_cast<double>(u.rows());
    const Matrix sum = u + w;
    GramResult r;
    r.lhs = std::pow(psd_determinant(sum * sum.transpose()), 1.0 / q);
    r.rhs = 0.5 * min_eigenvalue(u * u.transpose()) - symmetric_extremes(w * w.transpose()).max;
    r.pass = r.lhs >= r.rhs - 1e-10;
    return r;
}

void EvolutionConfig::validate() const {
    const int n = steps();
    if (n < 1 || q < 1) {
        throw PreconditionError("evolution: need N >= 1 steps and q >= 1");
    }
    const auto ns = static_cast<std::size_t>(n);
    if (m.size() != ns || a.size() != ns || h_ratio.size() != ns || kernels.size() != ns ||
        remainders.size() != ns || x.size() != ns + 1) {
        throw PreconditionError("evolution: per-step arrays must have N entries and x N + 1");
    }
    if (constants.q != q) {
        throw PreconditionError("evolution: constants were made for a different q");
    }
    for (std::size_t k = 1; k <= ns; ++k) {
        if (!(times[k] > times[k - 1])) {
            throw PreconditionError("evolution: times must be strictly increasing");
        }
    }
    for (const Vector& p : x) {
        if (p.size() != q) {
            throw DimensionError("evolution: waypoint dimension differs from q");
        }
    }
    for (std::size_t k = 0; k < ns; ++k) {
        std::ostringstream at;
        at << " at step " << k + 1;
        const Matrix& mk = m[k];
        if (mk.rows() != q || mk.cols() != q || kernels[k].rows() != q || kernels[k].cols() < 1) {
            throw DimensionError("evolution: matrix dimensions differ from q" + at.str());
        }
        if (!is_symmetric(mk) || min_eigenvalue(mk) <= 0.0) {
            throw PreconditionError("evolution: M_k is not symmetric positive definite" + at.str());
        }
        if (!(a[k] >= 1.0) || !(h_ratio[k] >= 1.0)) {
            throw PreconditionError("evolution: a_k and H_k must be >= 1" + at.str());
        }
        const double tol = 1e-10 * (1.0 + mk.cwiseAbs().maxCoeff());
        if (k > 0 && min_eigenvalue(h_ratio[k] * h_ratio[k] * mk - m[k - 1]) < -tol) {
            throw PreconditionError("evolution: H_k^2 M_k >= M_{k-1} fails" + at.str());
        }
        if (inverse_norm(mk, x[k + 1] - x[k]) > 0.25 + 1e-12) {
            throw PreconditionError("evolution: waypoint step exceeds 1/4 in the M_k^{-1} norm" +
                                    at.str());
        }
        const double delta = times[k + 1] - times[k];
        const Matrix cj = delta * kernels[k] * kernels[k].transpose();
        if (min_eigenvalue(a[k] * mk - cj) < -tol || min_eigenvalue(cj - mk) < -tol) {
            throw PreconditionError("evolution: a_k M_k >= C(J_k) >= M_k fails" + at.str());
        }
        if (remainders[k].kind == RemainderSpec::Kind::Quadratic &&
            !(std::isfinite(remainders[k].epsilon))) {
            throw PreconditionError("evolution: remainder coefficient must be finite" + at.str());
        }
    }
}

ProportionEstimate wilson_interval(std::size_t hits, std::size_t n, double z) {
    ProportionEstimate e;
    e.hits = hits;
    e.n = n;
    if (n == 0) {
        e.hi = 1.0;
        return e;
    }
    const double nd = static_cast<double>(n);
    e.p = static_cast<double>(hits) / nd;
    e.se = std::sqrt(e.p * (1.0 - e.p) / nd);
    const double z2 = z * z;
    const double denom = 1.0 + z2 / nd;
    const double centre = (e.p + z2 / (2.0 * nd)) / denom;
    const double half = z / denom * std::sqrt(e.p * (1.0 - e.p) / nd + z2 / (4.0 * nd * nd));
    e.lo = std::max(0.0, centre - half);
    e.hi = std::min(1.0, centre + half);
    return e;
}

double log_quadratic_moment(int p) {
    if (p < 1) {
        throw PreconditionError("log_quadratic_moment: p must be >= 1");
    }
    // E (Z^2 + 2)^p = sum_j C(p, j) 2^{p-j} (2j - 1)!!, summed in log space.
    std::vector<double> terms;
    double log_double_fact = 0.0;
    for (int j = 0; j <= p; ++j) {
        if (j > 0) {
            log_double_fact += std::log(2.0 * j - 1.0);
        }
        const double log_binom =
            std::lgamma(p + 1.0) - std::lgamma(j + 1.0) - std::lgamma(p - j + 1.0);
        terms.push_back(log_binom + (p - j) * std::log(2.0) + log_double_fact);
    }
    const double top = *std::max_element(terms.begin(), terms.end());
    double acc = 0.0;
    for (double t : terms) {
        acc += std::exp(t - top);
    }
    return (top + std::log(acc)) / p;
}

namespace {

// Upper bound on ln |M^{-1/2} R|_{q+2, p} for R^i = eps (dB^{i mod d})^2 over
// a step of length delta: each component norm is eps delta (E (Z^2+2)^p)^{1/p}
// and the matrix is applied through the triangle inequality.
double log_quadratic_remainder_norm(const Matrix& mk, double eps, double delta, int p) {
    if (eps == 0.0) {
        return -std::numeric_limits<double>::infinity();
    }
    const Matrix inv_root = spd_sqrt(mk).inverse();
    double sum = 0.0;
    for (Eigen::Index i = 0; i < inv_root.rows(); ++i) {
        sum += std::pow(inv_root.row(i).cwiseAbs().sum(), p);
    }
    return std::log(std::abs(eps) * delta) + log_quadratic_moment(p) + std::log(sum) / p;
}

Vector step_increment(const EvolutionConfig& cfg, std::size_t k, std::mt19937_64& rng,
                      std::normal_distribution<double>& normal) {
    const Matrix& kernel = cfg.kernels[k];
    const double delta = cfg.times[k + 1] - cfg.times[k];
    Vector db(kernel.cols());
    for (Eigen::Index j = 0; j < db.size(); ++j) {
        db[j] = std::sqrt(delta) * normal(rng);
    }
    Vector inc = kernel * db;
    if (cfg.remainders[k].kind == RemainderSpec::Kind::Quadratic) {
        for (Eigen::Index i = 0; i < inc.size(); ++i) {
            const double b = db[i % db.size()];
            inc[i] += cfg.remainders[k].epsilon * b * b;
        }
    }
    return inc;
}

}  // namespace

EvolutionStats simulate_evolution(const EvolutionConfig& cfg,
                                  const std::vector<DensityRequest>& requests,
                                  const EvolutionRunOptions& options) {
    cfg.validate();
    if (options.n_paths < 1000) {
        throw PreconditionError("simulate_evolution: need at least 1000 paths");
    }
    const int n = cfg.steps();
    const auto ns = static_cast<std::size_t>(n);
    const Mollifier phi(cfg.q, options.eta);
    for (const DensityRequest& req : requests) {
        if (req.k < 1 || req.k > n || req.z.size() != cfg.q) {
            throw PreconditionError("simulate_evolution: density request has a bad step or point");
        }
        const auto k = static_cast<std::size_t>(req.k - 1);
        if (options.eta > std::sqrt(min_eigenvalue(cfg.m[k]))) {
            throw PreconditionError("simulate_evolution: eta exceeds sqrt(Delta_k)");
        }
        if (inverse_norm(cfg.m[k], cfg.x[k + 1] - req.z) > 0.5 + 1e-12) {
            throw PreconditionError("simulate_evolution: requested z is farther than 1/2 from x_k");
        }
    }

    // Per path: number of leading tube events that hold, and F_{k-1} for the
    // requested steps.
    std::vector<std::size_t> survived(options.n_paths);
    std::vector<std::vector<Vector>> anchors(requests.size(),
                                             std::vector<Vector>(options.n_paths));
    parallel_for(
        options.n_paths,
        [&](std::size_t path) {
            auto rng = stream_rng(options.seed, path);
            std::normal_distribution<double> normal(0.0, 1.0);
            Vector f = cfg.x[0];
            std::size_t held = 0;
            for (std::size_t k = 0; k < ns; ++k) {
                if (held == k && inverse_norm(cfg.m[k], f - cfg.x[k + 1]) < 0.5) {
                    held = k + 1;
                }
                for (std::size_t r = 0; r < requests.size(); ++r) {
                    if (static_cast<std::size_t>(requests[r].k) == k + 1) {
                        anchors[r][path] = f;
                    }
                }
                f += step_increment(cfg, k, rng, normal);
            }
            survived[path] = held;
        },
        options.threads);

    EvolutionStats stats;
    stats.n_paths = options.n_paths;
    for (std::size_t k = 1; k <= ns; ++k) {
        const auto hits = static_cast<std::size_t>(
            std::count_if(survived.begin(), survived.end(), [k](std::size_t s) { return s >= k; }));
        stats.tube.push_back(wilson_interval(hits, options.n_paths, kZ99));
    }

    std::vector<double> a_list(cfg.a.begin(), cfg.a.end() - 1);
    std::vector<double> h_list(cfg.h_ratio.begin() + 1, cfg.h_ratio.end());
    const BoundReport chain = log_bound_evolution(n, cfg.q, a_list, h_list, cfg.a.back(),
                                                  psd_determinant(cfg.m.back()));
    stats.theta_rate = *chain.find("theta_rate");
    stats.log_tube_bound = *chain.find("log_tube_bound");
    stats.log_step_product = *chain.find("log_step_product");
    stats.tube_pass = stats.tube.back().lo >= std::exp(stats.log_tube_bound);

    for (std::size_t k = 2; k <= ns; ++k) {
        StepCheck s;
        s.k = static_cast<int>(k);
        s.log_factor = log_tube_step_factor(cfg.q, cfg.a[k - 2], cfg.h_ratio[k - 1]);
        const double f = std::exp(s.log_factor);
        const ProportionEstimate& now = stats.tube[k - 1];
        const ProportionEstimate& before = stats.tube[k - 2];
        s.lhs = now.p;
        s.rhs = f * before.p;
        s.tolerance = 3.0 * std::sqrt(now.se * now.se + f * f * before.se * before.se);
        s.pass = s.lhs >= s.rhs - s.tolerance;
        stats.steps.push_back(s);
    }

    const int p = static_cast<int>(std::ceil(cfg.constants.p_q));
    for (std::size_t k = 0; k < ns; ++k) {
        RemainderCheck rc;
        rc.k = static_cast<int>(k + 1);
        if (cfg.remainders[k].kind == RemainderSpec::Kind::Quadratic) {
            rc.log_norm_bound = log_quadratic_remainder_norm(
                cfg.m[k], cfg.remainders[k].epsilon, cfg.times[k + 1] - cfg.times[k], p);
        }
        rc.relaxed = cfg.relaxed_log_threshold.has_value();
        rc.log_threshold =
            rc.relaxed ? *cfg.relaxed_log_threshold
                       : -cfg.constants.log_c_q -
                             4.0 * (cfg.q + 1.0) * (cfg.q + 1.0) * std::log(cfg.a[k]);
        rc.ok = rc.log_norm_bound <= rc.log_threshold;
        stats.remainders.push_back(rc);
    }

    for (std::size_t r = 0; r < requests.size(); ++r) {
        const auto k = static_cast<std::size_t>(requests[r].k - 1);
        DensityCheck dc;
        dc.k = requests[r].k;
        dc.z = requests[r].z;
        dc.log_bound = -std::log(4.0) - 2.0 - 0.5 * cfg.q * std::log(2.0 * kPi * cfg.a[k]) -
                       0.5 * std::log(psd_determinant(cfg.m[k]));
        const bool closed = cfg.remainders[k].kind == RemainderSpec::Kind::Zero ||
                            cfg.remainders[k].epsilon == 0.0;
        dc.method = closed ? "closed-form" : "nested-monte-carlo";
        const std::size_t cap = closed ? options.max_closed_form_paths : options.max_nested_paths;
        std::vector<std::size_t> chosen;
        for (std::size_t path = 0; path < options.n_paths && chosen.size() < cap; ++path) {
            if (survived[path] >= k + 1) {
                chosen.push_back(path);
            }
        }
        const double delta = cfg.times[k + 1] - cfg.times[k];
        const Matrix cov = delta * cfg.kernels[k] * cfg.kernels[k].transpose();
        std::vector<double> value(chosen.size());
        std::vector<double> upper(chosen.size());
        parallel_for(
            chosen.size(),
            [&](std::size_t i) {
                const Vector& anchor = anchors[r][chosen[i]];
                if (closed && cfg.q <= 3) {
                    value[i] = mollified_gaussian(phi, anchor, cov, dc.z);
                    upper[i] = value[i];
                    return;
                }
                auto rng = stream_rng(options.seed ^ 0x5bd1e995ULL, chosen[i] * ns + k);
                std::normal_distribution<double> normal(0.0, 1.0);
                double sum = 0.0;
                double sum2 = 0.0;
                for (std::size_t s = 0; s < options.nested_samples; ++s) {
                    const double v = phi(Vector(anchor + step_increment(cfg, k, rng, normal) - dc.z));
                    sum += v;
                    sum2 += v * v;
                }
                const double m = static_cast<double>(options.nested_samples);
                value[i] = sum / m;
                upper[i] = value[i] + 3.0 * std::sqrt(std::max(0.0, sum2 / m - value[i] * value[i]) / m);
            },
            options.threads);
        dc.paths_checked = chosen.size();
        dc.min_value = chosen.empty() ? 0.0 : *std::min_element(value.begin(), value.end());
        double mean = 0.0;
        for (double v : value) {
            mean += v;
        }
        dc.mean_value = chosen.empty() ? 0.0 : mean / static_cast<double>(chosen.size());
        const double bound = std::exp(dc.log_bound);
        dc.pass = !chosen.empty() &&
                  std::all_of(upper.begin(), upper.end(), [&](double u) { return u >= bound * (1.0 - 1e-10); });
        stats.densities.push_back(std::move(dc));
    }
    return stats;
}

}  // namespace ldb
