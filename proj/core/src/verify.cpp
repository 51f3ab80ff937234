#include "ldb/verify.hpp"

#include "ldb/error.hpp"
#include "ldb/evolution.hpp"
#include "ldb/parallel.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <random>

namespace ldb {

void McConfig::validate() const {
    if (n_paths < 1000) {
        throw PreconditionError("Monte Carlo: need at least 1000 paths");
    }
    if (!(steps_per_unit > 0.0)) {
        throw PreconditionError("Monte Carlo: steps per unit time must be positive");
    }
    if (!(confidence > 0.0 && confidence < 1.0)) {
        throw PreconditionError("Monte Carlo: confidence must lie in (0, 1)");
    }
    if (batches < 20) {
        throw PreconditionError("Monte Carlo: need at least 20 batches");
    }
}

std::size_t McConfig::steps_for(double horizon) const {
    return std::max<std::size_t>(10, static_cast<std::size_t>(std::ceil(steps_per_unit * horizon - 1e-9)));
}

namespace {

// Euler step from x over dt with Brownian increment db.
void euler_step(const DiffusionModel& model, Vector& x, const Vector& db, double dt) {
    x += model.sigma(x) * db + model.drift(x) * dt;
}

Vector brownian(std::mt19937_64& rng, std::normal_distribution<double>& normal, int d,
                double dt) {
    Vector db(d);
    const double s = std::sqrt(dt);
    for (int j = 0; j < d; ++j) {
        db[j] = s * normal(rng);
    }
    return db;
}

}  // namespace

EulerResult euler_maruyama(const DiffusionModel& model, const Vector& x0, double T,
                           const McConfig& cfg, bool keep_paths) {
    cfg.validate();
    if (!(T > 0.0)) {
        throw PreconditionError("euler_maruyama: T must be positive");
    }
    model.check_point(x0, "euler_maruyama");
    const std::size_t steps = cfg.steps_for(T);
    const double dt = T / static_cast<double>(steps);

    std::vector<Vector> terminal(cfg.n_paths);
    std::vector<char> finite(cfg.n_paths, 1);
    std::vector<std::vector<Vector>> paths(keep_paths ? cfg.n_paths : 0);
    parallel_for(
        cfg.n_paths,
        [&](std::size_t path) {
            auto rng = stream_rng(cfg.seed, path);
            std::normal_distribution<double> normal(0.0, 1.0);
            Vector x = x0;
            if (keep_paths) {
                paths[path].reserve(steps + 1);
                paths[path].push_back(x);
            }
            for (std::size_t s = 0; s < steps; ++s) {
                euler_step(model, x, brownian(rng, normal, model.d(), dt), dt);
                if (!x.allFinite()) {
                    finite[path] = 0;
                    return;
                }
                if (keep_paths) {
                    paths[path].push_back(x);
                }
            }
            terminal[path] = x;
        },
        cfg.threads);

    EulerResult out;
    out.steps = steps;
    for (std::size_t path = 0; path < cfg.n_paths; ++path) {
        if (!finite[path]) {
            ++out.excluded;
            continue;
        }
        out.terminal.push_back(std::move(terminal[path]));
        if (keep_paths) {
            out.paths.push_back(std::move(paths[path]));
        }
    }
    return out;
}

KdeEstimate kde_at_point(const std::vector<Vector>& samples, const Vector& y,
                         const std::vector<double>& bandwidth, double confidence,
                         std::size_t batches) {
    if (samples.size() < 1000) {
        throw PreconditionError("kde_at_point: need at least 1000 samples");
    }
    if (batches < 20 || batches > samples.size()) {
        throw PreconditionError("kde_at_point: need at least 20 batches");
    }
    const auto q = y.size();
    const double n = static_cast<double>(samples.size());
    KdeEstimate out;
    out.n = samples.size();
    out.batches = batches;
    if (!bandwidth.empty()) {
        if (bandwidth.size() != static_cast<std::size_t>(q)) {
            throw DimensionError("kde_at_point: bandwidth needs one entry per axis");
        }
        out.bandwidth = bandwidth;
    } else {
        Vector mean = Vector::Zero(q);
        for (const Vector& s : samples) {
            mean += s;
        }
        mean /= n;
        Vector var = Vector::Zero(q);
        for (const Vector& s : samples) {
            var += (s - mean).cwiseAbs2();
        }
        var /= (n - 1.0);
        const double factor = std::pow(n, -1.0 / (static_cast<double>(q) + 4.0));
        for (Eigen::Index j = 0; j < q; ++j) {
            out.bandwidth.push_back(std::sqrt(var[j]) * factor);
        }
    }
    for (double b : out.bandwidth) {
        if (!(b > 0.0) || !std::isfinite(b)) {
            throw PreconditionError("kde_at_point: degenerate sample spread (zero bandwidth)");
        }
    }

    const Mollifier kernel(1, 1.0);
    double kernel_max = 1.0;
    for (double b : out.bandwidth) {
        kernel_max *= kernel(0.0) / b;
    }
    const std::size_t per_batch = samples.size() / batches;
    std::vector<double> batch_means(batches, 0.0);
    double total = 0.0;
    std::size_t nonzero = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        double v = 1.0;
        for (Eigen::Index j = 0; j < q && v > 0.0; ++j) {
            const double b = out.bandwidth[static_cast<std::size_t>(j)];
            v *= kernel((samples[i][j] - y[j]) / b) / b;
        }
        total += v;
        nonzero += v > 0.0 ? 1 : 0;
        const std::size_t batch = i / per_batch;
        if (batch < batches) {
            batch_means[batch] += v;
        }
    }
    out.estimate = total / n;
    if (nonzero == 0) {
        out.lo = 0.0;
        out.hi = kernel_max * std::log(1.0 / (1.0 - confidence)) / n;
        return out;
    }
    double mean = 0.0;
    for (double& m : batch_means) {
        m /= static_cast<double>(per_batch);
        mean += m;
    }
    const double bd = static_cast<double>(batches);
    mean /= bd;
    double var = 0.0;
    for (double m : batch_means) {
        var += (m - mean) * (m - mean);
    }
    var /= (bd - 1.0);
    const boost::math::students_t dist(bd - 1.0);
    const double t = boost::math::quantile(dist, 0.5 + 0.5 * confidence);
    const double half = t * std::sqrt(var / bd);
    out.lo = std::max(0.0, out.estimate - half);
    out.hi = out.estimate + half;
    return out;
}

RemainderScaling remainder_scaling(const DiffusionModel& model, const Vector& x0, double t,
                                   const std::vector<double>& deltas, int p,
                                   const McConfig& cfg) {
    cfg.validate();
    if (p != 2 && p != 4) {
        throw PreconditionError("remainder_scaling: p must be 2 or 4");
    }
    if (deltas.size() < 2) {
        throw PreconditionError("remainder_scaling: too few deltas");
    }
    const auto [lo_it, hi_it] = std::minmax_element(deltas.begin(), deltas.end());
    if (!(*lo_it > 0.0) || *hi_it / *lo_it < 10.0 * (1.0 - 1e-12)) {
        throw PreconditionError("remainder_scaling: deltas must be positive and span a decade");
    }
    if (!(t >= 0.0)) {
        throw PreconditionError("remainder_scaling: t must be non-negative");
    }
    constexpr int kSubsteps = 32;
    const int d = model.d();
    const std::size_t nd = deltas.size();
    const std::size_t steps = t > 0.0 ? cfg.steps_for(t) : 0;
    const double dt = steps > 0 ? t / static_cast<double>(steps) : 0.0;

    // Per path and delta: |Gamma|^p, or NaN when the path blew up.
    std::vector<double> powers(cfg.n_paths * nd);
    std::vector<double> residual(cfg.n_paths, 0.0);
    parallel_for(
        cfg.n_paths,
        [&](std::size_t path) {
            auto rng = stream_rng(cfg.seed, path);
            std::normal_distribution<double> normal(0.0, 1.0);
            Vector x = x0;
            for (std::size_t s = 0; s < steps; ++s) {
                euler_step(model, x, brownian(rng, normal, d, dt), dt);
            }
            const Matrix sigma_t = model.sigma(x);
            for (std::size_t i = 0; i < nd; ++i) {
                auto sub_rng = stream_rng(cfg.seed + 1 + i, path);
                const double h = deltas[i] / kSubsteps;
                Vector y = x;
                Vector db_total = Vector::Zero(d);
                Vector gamma = Vector::Zero(x.size());
                for (int j = 0; j < kSubsteps; ++j) {
                    const Vector db = brownian(sub_rng, normal, d, h);
                    const Matrix sj = model.sigma(y);
                    const Vector bj = model.drift(y);
                    gamma += (sj - sigma_t) * db + bj * h;
                    y += sj * db + bj * h;
                    db_total += db;
                }
                if (!y.allFinite() || !gamma.allFinite()) {
                    powers[path * nd + i] = std::numeric_limits<double>::quiet_NaN();
                    continue;
                }
                const double direct = (y - x - sigma_t * db_total - gamma).cwiseAbs().maxCoeff();
                residual[path] = std::max(residual[path], direct);
                powers[path * nd + i] = std::pow(gamma.norm(), p);
            }
        },
        cfg.threads);

    RemainderScaling out;
    out.deltas = deltas;
    std::vector<double> sums(nd, 0.0);
    std::size_t used = 0;
    for (std::size_t path = 0; path < cfg.n_paths; ++path) {
        bool ok = true;
        for (std::size_t i = 0; i < nd; ++i) {
            ok = ok && std::isfinite(powers[path * nd + i]);
        }
        if (!ok) {
            ++out.excluded;
            continue;
        }
        ++used;
        for (std::size_t i = 0; i < nd; ++i) {
            sums[i] += powers[path * nd + i];
        }
        out.max_identity_residual = std::max(out.max_identity_residual, residual[path]);
    }
    for (std::size_t i = 0; i < nd; ++i) {
        out.norms.push_back(used > 0 ? std::pow(sums[i] / static_cast<double>(used), 1.0 / p) : 0.0);
    }
    out.degenerate = used == 0 || std::any_of(out.norms.begin(), out.norms.end(),
                                              [](double v) { return !(v > 1e-15); });
    if (out.degenerate) {
        out.slope = std::numeric_limits<double>::quiet_NaN();
        out.intercept = std::numeric_limits<double>::quiet_NaN();
        return out;
    }
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < nd; ++i) {
        mx += std::log(deltas[i]);
        my += std::log(out.norms[i]);
    }
    mx /= static_cast<double>(nd);
    my /= static_cast<double>(nd);
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t i = 0; i < nd; ++i) {
        const double dx = std::log(deltas[i]) - mx;
        sxy += dx * (std::log(out.norms[i]) - my);
        sxx += dx * dx;
    }
    out.slope = sxy / sxx;
    out.intercept = my - out.slope * mx;
    return out;
}

std::string to_string(Verdict v) {
    switch (v) {
        case Verdict::Pass: return "PASS";
        case Verdict::Vacuous: return "VACUOUS";
        case Verdict::Fail: return "FAIL";
    }
    return "UNKNOWN";
}

Verdict classify_bound(double log_bound, const KdeEstimate& kde) {
    if (std::isnan(log_bound) || log_bound == -std::numeric_limits<double>::infinity() ||
        log_bound < kVacuousLogBound) {
        return Verdict::Vacuous;
    }
    return kde.lo >= std::exp(log_bound) ? Verdict::Pass : Verdict::Fail;
}

VerifyResult verify_bound(const DiffusionModel& model, const Vector& x0, const Vector& y, double T,
                          const BoundReport& report, const McConfig& cfg) {
    model.check_point(y, "verify_bound");
    VerifyResult out;
    out.log_bound = report.log_lower_bound;
    out.bound = std::exp(report.log_lower_bound);
    const EulerResult em = euler_maruyama(model, x0, T, cfg);
    out.excluded = em.excluded;
    out.kde = kde_at_point(em.terminal, y, cfg.bandwidth, cfg.confidence, cfg.batches);
    out.verdict = classify_bound(out.log_bound, out.kde);
    return out;
}

}  // namespace ldb
