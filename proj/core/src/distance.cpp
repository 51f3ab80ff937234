#include "ldb/distance.hpp"

#include "ldb/error.hpp"
#include "ldb/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace ldb {

InitialControl init_control(const DiffusionModel& model, const Vector& x0, const Vector& y,
                            double t_end, int pieces) {
    if (pieces < 1 || !(t_end > 0.0)) {
        throw PreconditionError("init_control: need pieces >= 1 and T > 0");
    }
    model.check_point(x0, "init_control");
    model.check_point(y, "init_control");
    const Vector velocity = (y - x0) / t_end;
    const Vector zero = Vector::Zero(model.d());

    // Probe the whole segment, not only the midpoints used for the values.
    constexpr int kProbes = 64;
    for (int i = 0; i <= kProbes; ++i) {
        const double s = static_cast<double>(i) / kProbes;
        const SpectralData sp = spectral(model, x0 + s * (y - x0));
        if (!(sp.lambda_min > 1e-12 * std::max(1.0, sp.lambda_max))) {
            std::ostringstream note;
            note << "sigma sigma^* degenerates on the straight segment at t = " << s * t_end
                 << "; using the zero control";
            return {Control::constant(zero, t_end, pieces), true, note.str()};
        }
    }
    std::vector<Vector> values;
    values.reserve(static_cast<std::size_t>(pieces));
    for (int k = 0; k < pieces; ++k) {
        const double s = (k + 0.5) / pieces;
        values.push_back(least_norm_control(model, x0 + s * (y - x0), velocity, s * t_end));
    }
    return {Control::uniform(std::move(values), t_end), false, {}};
}

namespace {

constexpr double kInteriorShift = 1e-6;

struct Evaluation {
    double objective = std::numeric_limits<double>::infinity();
    double energy = 0.0;
    double miss = 0.0;
    double violation = 0.0;  // largest inequality violation (unshifted)
    Vector z;                // point after endpoint correction
};

class EnergyProblem {
public:
    EnergyProblem(const DiffusionModel& model, Vector x0, Vector y, const ThetaParams& theta,
                  int pieces, const OptimizerConfig& cfg)
        : model_(model), x0_(std::move(x0)), y_(std::move(y)), theta_(theta), pieces_(pieces),
          d_(model.d()), step_(theta.T / (pieces * std::max(1, cfg.substeps))) {}

    [[nodiscard]] Eigen::Index size() const { return static_cast<Eigen::Index>(pieces_) * d_; }

    [[nodiscard]] Control control(const Vector& z) const {
        std::vector<Vector> values(static_cast<std::size_t>(pieces_));
        for (int k = 0; k < pieces_; ++k) {
            values[static_cast<std::size_t>(k)] = z.segment(static_cast<Eigen::Index>(k) * d_, d_);
        }
        return Control::uniform(std::move(values), theta_.T);
    }

    [[nodiscard]] Vector flatten(const Control& c) const {
        Vector z(size());
        for (int k = 0; k < pieces_; ++k) {
            z.segment(static_cast<Eigen::Index>(k) * d_, d_) = c.values()[static_cast<std::size_t>(k)];
        }
        return z;
    }

    [[nodiscard]] SkeletonPath path(const Vector& z) const {
        return integrate_skeleton(model_, control(z), x0_, step_);
    }

    // Terminal state; throws NonFiniteError on blow-up.
    [[nodiscard]] Vector terminal(const Vector& z) const { return path(z).terminal(); }

    // Endpoint Jacobian pseudo-inverse frozen at z; empty when rank deficient.
    void freeze_jacobian(const Vector& z) {
        pinv_.resize(0, 0);
        try {
            const Vector base = terminal(z);
            Matrix jac(base.size(), size());
            for (Eigen::Index i = 0; i < size(); ++i) {
                Vector zp = z;
                const double h = 1e-6 * (1.0 + std::abs(z[i]));
                zp[i] += h;
                jac.col(i) = (terminal(zp) - base) / h;
            }
            const Matrix jjt = jac * jac.transpose();
            const EigenExtremes ex = symmetric_extremes(jjt);
            if (ex.max > 0.0 && ex.min > 1e-14 * ex.max) {
                pinv_ = jac.transpose() * jjt.ldlt().solve(Matrix::Identity(jjt.rows(), jjt.cols()));
            }
        } catch (const NonFiniteError&) {
            pinv_.resize(0, 0);
        }
    }

    [[nodiscard]] Evaluation evaluate(const Vector& z_in, double weight) const {
        Evaluation e;
        e.z = z_in;
        try {
            SkeletonPath p = path(e.z);
            if (pinv_.size() > 0) {
                const double tol = 1e-13 * (1.0 + y_.norm());
                for (int it = 0; it < 4 && (p.terminal() - y_).norm() > tol; ++it) {
                    e.z -= pinv_ * (p.terminal() - y_);
                    p = path(e.z);
                }
            }
            e.miss = (p.terminal() - y_).norm();
            double shifted = 0.0;
            for (const Vector& x : p.states) {
                const SpectralData sp = spectral(model_, x);
                const double root = std::sqrt(std::max(sp.lambda_min, 0.0));
                e.violation = std::max({e.violation, 1.0 / theta_.mu - sp.rho, 1.0 / theta_.chi - root});
                shifted = std::max({shifted, (1.0 + kInteriorShift) / theta_.mu - sp.rho,
                                    (1.0 + kInteriorShift) / theta_.chi - root});
            }
            std::vector<double> norms(static_cast<std::size_t>(pieces_));
            for (int k = 0; k < pieces_; ++k) {
                const double n = e.z.segment(static_cast<Eigen::Index>(k) * d_, d_).norm();
                norms[static_cast<std::size_t>(k)] = n;
                e.energy += n * n * theta_.T / pieces_;
                e.violation = std::max(e.violation, n - theta_.nu_ctl);
                shifted = std::max(shifted, n - (1.0 - kInteriorShift) * theta_.nu_ctl);
            }
            const double width = theta_.T / pieces_;
            for (std::size_t i = 0; i < norms.size(); ++i) {
                for (std::size_t j = i + 1;
                     j < norms.size() && static_cast<double>(j - i - 1) * width < theta_.h_ctl; ++j) {
                    const double v = std::max(norms[j] - theta_.eta_ctl * norms[i],
                                              norms[i] - theta_.eta_ctl * norms[j]);
                    e.violation = std::max(e.violation, v);
                    shifted = std::max(shifted, v);
                }
            }
            shifted = std::max(shifted, 0.0);
            e.violation = std::max(e.violation, 0.0);
            e.objective = e.energy + weight * (e.miss * e.miss + shifted * shifted);
            if (!std::isfinite(e.objective)) {
                e.objective = std::numeric_limits<double>::infinity();
            }
        } catch (const NonFiniteError&) {
            e.objective = std::numeric_limits<double>::infinity();
        }
        return e;
    }

    [[nodiscard]] const Vector& y() const { return y_; }
    [[nodiscard]] double step() const { return step_; }

private:
    const DiffusionModel& model_;
    Vector x0_;
    Vector y_;
    ThetaParams theta_;
    int pieces_;
    int d_;
    double step_;
    Matrix pinv_;
};

struct RestartOutcome {
    bool feasible = false;
    double norm = std::numeric_limits<double>::infinity();
    Vector z;
    double violation = std::numeric_limits<double>::infinity();
    double miss = std::numeric_limits<double>::infinity();
    int evaluations = 0;
};

// Hooke-Jeeves pattern search on the penalized objective.
Evaluation pattern_search(const EnergyProblem& problem, Evaluation best, double weight,
                          double scale, int sweeps, int& evaluations) {
    const auto n = best.z.size();
    double step = 0.1 * scale;
    const double min_step = 1e-9 * scale;

    auto explore = [&](Evaluation from) {
        for (Eigen::Index i = 0; i < n; ++i) {
            for (double sign : {1.0, -1.0}) {
                Vector trial = from.z;
                trial[i] += sign * step;
                Evaluation e = problem.evaluate(trial, weight);
                ++evaluations;
                if (e.objective < from.objective) {
                    from = std::move(e);
                    break;
                }
            }
        }
        return from;
    };

    for (int sweep = 0; sweep < sweeps && step > min_step; ++sweep) {
        Evaluation moved = explore(best);
        if (moved.objective < best.objective) {
            // Pattern moves along the last successful direction.
            for (int k = 0; k < 32; ++k) {
                const Vector direction = moved.z - best.z;
                best = std::move(moved);
                Evaluation jump = problem.evaluate(best.z + direction, weight);
                ++evaluations;
                moved = explore(jump.objective < best.objective ? jump : best);
                if (!(moved.objective < best.objective)) {
                    break;
                }
            }
        } else {
            step *= 0.5;
        }
    }
    return best;
}

// Forward-difference gradient descent with backtracking.
Evaluation gradient_descent(const EnergyProblem& problem, Evaluation best, double weight,
                            double scale, int iterations, int& evaluations) {
    const auto n = best.z.size();
    double rate = 0.1 * scale;
    for (int it = 0; it < iterations; ++it) {
        Vector grad(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            Vector zp = best.z;
            const double h = 1e-7 * (scale + std::abs(best.z[i]));
            zp[i] += h;
            grad[i] = (problem.evaluate(zp, weight).objective - best.objective) / h;
            ++evaluations;
        }
        const double gnorm = grad.norm();
        if (!std::isfinite(gnorm) || gnorm < 1e-14) {
            break;
        }
        bool improved = false;
        for (int ls = 0; ls < 40; ++ls) {
            Evaluation e = problem.evaluate(best.z - rate * grad / gnorm, weight);
            ++evaluations;
            if (e.objective < best.objective) {
                best = std::move(e);
                rate *= 2.0;
                improved = true;
                break;
            }
            rate *= 0.5;
        }
        if (!improved) {
            break;
        }
    }
    return best;
}

RestartOutcome run_restart(EnergyProblem problem, const Vector& start, const OptimizerConfig& cfg) {
    RestartOutcome out;
    const double scale = std::max(1e-3, start.cwiseAbs().maxCoeff());
    double weight = cfg.initial_penalty;
    problem.freeze_jacobian(start);
    Evaluation best = problem.evaluate(start, weight);
    ++out.evaluations;
    for (int outer = 0; outer < cfg.outer_iterations; ++outer) {
        if (std::isfinite(best.objective)) {
            best = cfg.method == InnerMethod::PatternSearch
                       ? pattern_search(problem, best, weight, scale, cfg.inner_iterations,
                                        out.evaluations)
                       : gradient_descent(problem, best, weight, scale, cfg.inner_iterations,
                                          out.evaluations);
        }
        weight *= cfg.penalty_growth;
        problem.freeze_jacobian(best.z);
        best = problem.evaluate(best.z, weight);
        ++out.evaluations;
    }
    out.z = best.z;
    out.violation = best.violation;
    out.miss = best.miss;
    out.feasible = std::isfinite(best.objective);
    return out;
}

}  // namespace

DistanceResult minimize_energy(const DiffusionModel& model, const Vector& x0, const Vector& y,
                               const ThetaParams& theta, int pieces, const OptimizerConfig& cfg) {
    theta.validate();
    if (pieces < 1 || cfg.restarts < 1 || cfg.outer_iterations < 1 || cfg.substeps < 1) {
        throw PreconditionError("minimize_energy: pieces, restarts, outer iterations and substeps must be >= 1");
    }
    DistanceResult result;
    const InitialControl init = init_control(model, x0, y, theta.T, pieces);
    result.init_fell_back = init.fell_back;
    const EnergyProblem problem(model, x0, y, theta, pieces, cfg);
    const Vector start = problem.flatten(init.control);
    const double spread =
        cfg.perturbation * std::max({1e-3, start.cwiseAbs().maxCoeff(), (y - x0).norm() / std::sqrt(theta.T)});
    const double endpoint_tol = cfg.endpoint_tol >= 0.0 ? cfg.endpoint_tol : 1e-6 * (1.0 + y.norm());

    struct Slot {
        RestartOutcome outcome;
        bool admissible = false;
        AdmissibilityReport report;
        double norm = std::numeric_limits<double>::infinity();
    };
    std::vector<Slot> slots(static_cast<std::size_t>(cfg.restarts));
    parallel_for(
        slots.size(),
        [&](std::size_t r) {
            Vector z = start;
            if (r > 0) {
                auto rng = stream_rng(cfg.seed, r);
                std::normal_distribution<double> normal(0.0, 1.0);
                for (Eigen::Index i = 0; i < z.size(); ++i) {
                    z[i] += spread * normal(rng);
                }
            }
            Slot& slot = slots[r];
            slot.outcome = run_restart(problem, z, cfg);
            if (!slot.outcome.feasible) {
                return;
            }
            const Control c = problem.control(slot.outcome.z);
            try {
                const SkeletonPath p = problem.path(slot.outcome.z);
                slot.report = check_admissible(model, c, p, theta, y, endpoint_tol);
                slot.admissible = slot.report.feasible();
                slot.norm = control_norm(c);
            } catch (const NonFiniteError&) {
                slot.admissible = false;
            }
        },
        cfg.threads);

    std::size_t best = slots.size();
    double worst_violation = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < slots.size(); ++r) {
        result.iterations += slots[r].outcome.evaluations;
        worst_violation = std::min(worst_violation,
                                   std::max(slots[r].outcome.violation, slots[r].outcome.miss));
        if (slots[r].admissible) {
            ++result.feasible_restarts;
            if (best == slots.size() || slots[r].norm < slots[best].norm) {
                best = r;
            }
        }
    }

    std::ostringstream diag;
    if (init.fell_back) {
        diag << init.note << ". ";
    }
    if (best == slots.size()) {
        diag << "no admissible control after " << cfg.restarts
             << " restarts; smallest remaining violation " << worst_violation;
        if (worst_violation <= cfg.violation_tol) {
            diag << " (within the violation tolerance but not certified admissible)";
        }
        result.diagnostics = diag.str();
        if (!slots.empty()) {
            result.report = slots.front().report;
        }
        return result;
    }
    const Control witness = problem.control(slots[best].outcome.z);
    result.d_theta_upper = slots[best].norm;
    result.report = slots[best].report;
    result.path = problem.path(slots[best].outcome.z);
    result.witness = witness;
    diag << result.feasible_restarts << " of " << cfg.restarts << " restarts admissible";
    result.diagnostics = diag.str();
    return result;
}

}  // namespace ldb
