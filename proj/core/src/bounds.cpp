#include "ldb/bounds.hpp"

#include "ldb/error.hpp"
#include "ldb/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace ldb {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kLog4e2 = 1.3862943611198906 + 2.0;  // ln 4 + 2

double positive(std::optional<double> v, double fallback, const char* name) {
    const double x = v.value_or(fallback);
    if (!(x > 0.0) || !std::isfinite(x)) {
        throw PreconditionError(std::string("constants: ") + name + " must be positive and finite");
    }
    return x;
}

double max_mu_term(double mu, double chi) {
    return std::max(std::pow(mu, 4), (mu + chi) * (mu + chi));
}

}  // namespace

void set_override(ConstantOverrides& overrides, const std::string& key, double value) {
    if (key == "p_star") {
        overrides.p_star = value;
    } else if (key == "c_star") {
        overrides.c_star = value;
    } else if (key == "mu_k") {
        overrides.mu_k = value;
    } else if (key == "C_mp" || key == "c_mp") {
        overrides.c_mp = value;
    } else if (key == "K_q" || key == "k_q") {
        overrides.k_q = value;
    } else {
        throw PreconditionError("unknown constant '" + key +
                                "' (expected p_star, c_star, mu_k, C_mp or K_q)");
    }
}

UniversalConstants make_constants(int q, const ConstantOverrides& overrides) {
    if (q < 1) {
        throw PreconditionError("make_constants: q must be >= 1");
    }
    UniversalConstants c;
    c.q = q;
    c.p_star = positive(overrides.p_star, 1.0, "p_star");
    c.c_star = positive(overrides.c_star, 1.0, "c_star");
    c.mu_k = positive(overrides.mu_k, 1.0, "mu_k");
    c.c_mp = positive(overrides.c_mp, 1.0, "C_mp");
    c.k_q = positive(overrides.k_q, 1.0, "K_q");
    const double qd = q;
    c.p_q = std::ldexp(c.p_star, 2 * (q + 2));
    const double cube = (qd + 3.0) * (qd + 3.0) * (qd + 3.0);
    c.log_c_q = std::log(c.c_star) + std::log(c.mu_k) + 2.0 + 0.5 * qd * std::log(2.0 * kPi) +
                3.0 * cube * std::log(4.0) + (qd + 3.0) * std::log(qd + 1.0);
    c.log_m_q = (qd + 3.0) * (std::log(4.0) + std::log(qd + 1.0));
    c.m_q = std::exp(c.log_m_q);
    return c;
}

EllipticParams elliptic_params(const DiffusionModel& model, const SkeletonPath& path,
                               const UniversalConstants& constants) {
    const int q = model.q();
    const double c0 = model.c0();
    const double scale = 6.0 * std::pow(q, 1.5) * c0 * c0 * c0;
    EllipticParams p;
    p.times = path.times;
    for (std::size_t i = 0; i < path.size(); ++i) {
        const SpectralData sp = spectral(model, path.states[i]);
        if (!(sp.lambda_min > 1e-12 * std::max(1.0, sp.lambda_max)) || !(sp.rho > 0.0)) {
            throw DegenerateError("elliptic_params: degenerate point on the path", path.times[i]);
        }
        p.q_mats.push_back(0.5 * model.diffusion_matrix(path.states[i]));
        p.r.push_back(sp.rho * sp.rho / scale);
        p.k.push_back(constants.c_mp * (1.0 / sp.rho + 1.0 / std::sqrt(sp.lambda_min)));
    }
    return p;
}

TubeCheckReport tube_ellipticity_check(const DiffusionModel& model, const SkeletonPath& path,
                                       const EllipticParams& params, int n_probe,
                                       std::uint64_t seed) {
    if (n_probe < 1) {
        throw PreconditionError("tube_ellipticity_check: n_probe must be >= 1");
    }
    if (params.times.size() != path.size()) {
        throw DimensionError("tube_ellipticity_check: params do not match the path");
    }
    const int q = model.q();
    struct Slot {
        std::size_t upper = 0;
        std::size_t lower = 0;
        double worst_upper = std::numeric_limits<double>::infinity();
        double worst_lower = std::numeric_limits<double>::infinity();
    };
    std::vector<Slot> slots(path.size());
    parallel_for(path.size(), [&](std::size_t i) {
        auto rng = stream_rng(seed, i);
        std::normal_distribution<double> normal(0.0, 1.0);
        std::uniform_real_distribution<double> uniform(0.0, 1.0);
        const Matrix root = spd_sqrt(params.q_mats[i]);
        const Matrix anchor = model.diffusion_matrix(path.states[i]);
        Slot& s = slots[i];
        for (int k = 0; k < n_probe; ++k) {
            Vector u(q);
            for (int j = 0; j < q; ++j) {
                u[j] = normal(rng);
            }
            const double n = u.norm();
            if (n == 0.0) {
                continue;
            }
            const double radius = k % 4 == 0 ? 1.0 : std::pow(uniform(rng), 1.0 / q);
            const Vector x = path.states[i] + params.r[i] * radius / n * (root * u);
            const Matrix here = model.diffusion_matrix(x);
            const double upper = min_eigenvalue(params.a * anchor - here);
            const double lower = min_eigenvalue(here - params.q_mats[i]);
            const double tol = 1e-12 * anchor.cwiseAbs().maxCoeff();
            s.worst_upper = std::min(s.worst_upper, upper);
            s.worst_lower = std::min(s.worst_lower, lower);
            s.upper += upper < -tol ? 1 : 0;
            s.lower += lower < -tol ? 1 : 0;
        }
    });
    TubeCheckReport r;
    r.worst_upper_margin = std::numeric_limits<double>::infinity();
    r.worst_lower_margin = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < slots.size(); ++i) {
        r.probes += static_cast<std::size_t>(n_probe);
        r.upper_violations += slots[i].upper;
        r.lower_violations += slots[i].lower;
        r.worst_upper_margin = std::min(r.worst_upper_margin, slots[i].worst_upper);
        r.worst_lower_margin = std::min(r.worst_lower_margin, slots[i].worst_lower);
        if (!r.first_violation_time && slots[i].upper + slots[i].lower > 0) {
            r.first_violation_time = path.times[i];
        }
    }
    r.violations = r.upper_violations + r.lower_violations;
    return r;
}

double grid_alpha(int q, double m_Q, double m_gamma, double m_pi) {
    return std::log(8.0) + 1.0 + 0.25 * std::log(2.0 * kPi * q) + std::log(m_Q) +
           4.0 * std::log(m_gamma) + std::log(m_pi);
}

BoundInputs derive_envelopes(const DiffusionModel& model, const SkeletonPath& path,
                             const Control& control, const ThetaParams& theta,
                             const UniversalConstants& constants, const Vector& y) {
    const AdmissibilityReport adm = check_admissible(model, control, path, theta, y);
    if (!adm.feasible()) {
        throw PreconditionError("derive_envelopes: control is not admissible for theta");
    }
    const int q = model.q();
    const double c0 = model.c0();
    const double sq = std::sqrt(static_cast<double>(q));
    BoundInputs in;
    in.q = q;
    in.T = theta.T;
    in.k_diff = std::pow(c0, 6) * constants.c_mp * constants.c_mp;
    const double pi_value = 1.0 / (constants.k_q * in.k_diff * max_mu_term(theta.mu, theta.chi));
    in.pi = EnvelopeFn::constant(pi_value, theta.T);
    in.m_pi = 1.0;
    in.h_pi = kInfiniteWindow;

    std::vector<double> gamma(control.pieces());
    for (std::size_t k = 0; k < control.pieces(); ++k) {
        gamma[k] = std::sqrt(2.0) * theta.mu * c0 * control.values()[k].norm();
    }
    in.observed_m_gamma = step_envelope_constant(control.grid(), gamma, theta.h_ctl);
    in.m_gamma = theta.eta_ctl;
    in.h_gamma = theta.h_ctl;
    in.gamma = EnvelopeFn(control.grid(), std::move(gamma), in.m_gamma, in.h_gamma,
                          Interpolation::Step);

    in.m_Q = 4.0 * sq * c0 * theta.mu;
    in.h_Q = 1.0 / (2.0 * sq * c0 * theta.nu_ctl);
    in.h = std::min({in.h_Q, in.h_pi, in.h_gamma});
    in.alpha = grid_alpha(q, in.m_Q, in.m_gamma, in.m_pi);
    const double det = psd_determinant(model.diffusion_matrix(y));
    in.log_det_q_t = std::log(det) - q * std::log(2.0);
    return in;
}

std::optional<double> BoundReport::find(const std::string& key) const {
    for (const auto& [k, v] : trace) {
        if (k == key) {
            return v;
        }
    }
    return std::nullopt;
}

double log_tube_step_factor(int q, double a_prev, double h_k) {
    const double qd = q;
    return -(qd + 1.0) * std::log(8.0) - qd * std::log(h_k) - 2.0 -
           0.5 * qd * std::log(2.0 * qd * a_prev * kPi);
}

BoundReport log_bound_evolution(int n, int q, const std::vector<double>& a_list,
                                const std::vector<double>& h_list, double a_n, double det_m_n) {
    if (n < 1 || q < 1) {
        throw PreconditionError("log_bound_evolution: need N >= 1 and q >= 1");
    }
    if (a_list.size() != static_cast<std::size_t>(n - 1) ||
        h_list.size() != static_cast<std::size_t>(n - 1)) {
        throw PreconditionError("log_bound_evolution: need N - 1 values of a_k and of H_k");
    }
    for (double v : a_list) {
        if (!(v >= 1.0)) {
            throw PreconditionError("log_bound_evolution: a_k must be >= 1");
        }
    }
    for (double v : h_list) {
        if (!(v >= 1.0)) {
            throw PreconditionError("log_bound_evolution: H_k must be >= 1");
        }
    }
    if (!(a_n >= 1.0) || !(det_m_n > 0.0)) {
        throw PreconditionError("log_bound_evolution: need a_N >= 1 and det M_N > 0");
    }
    const double qd = q;
    const double nd = n;
    double sum_a = 0.0;
    double sum_h = 0.0;
    double product = 0.0;
    for (std::size_t k = 0; k + 1 < static_cast<std::size_t>(n); ++k) {
        sum_a += std::log(a_list[k]);
        sum_h += std::log(h_list[k]);
        product += log_tube_step_factor(q, a_list[k], h_list[k]);
    }
    const double theta = std::log(64.0) + 2.0 + 0.5 * std::log(2.0 * qd * kPi) +
                         sum_a / (2.0 * nd) + sum_h / nd;
    BoundReport r;
    r.formula_id = "thm15";
    r.prefactor_log = -kLog4e2 - 0.5 * qd * std::log(2.0 * kPi * a_n) - 0.5 * std::log(det_m_n);
    r.exponent_integral = nd;
    r.exponent = nd * qd * theta;
    r.log_lower_bound = r.prefactor_log - r.exponent;
    r.trace = {{"N", nd},
               {"q", qd},
               {"a_N", a_n},
               {"det_M_N", det_m_n},
               {"theta_rate", theta},
               {"sum_log_a", sum_a},
               {"sum_log_H", sum_h},
               {"log_tube_bound", -nd * qd * theta},
               {"log_step_product", product}};
    return r;
}

BoundReport log_bound_thm17(const BoundInputs& inputs, double a, int q, double T, double det_q_t) {
    if (!(a >= 1.0) || q < 1 || !(T > 0.0) || !(det_q_t > 0.0)) {
        throw PreconditionError("log_bound_thm17: need a >= 1, q >= 1, T > 0, det Q_T > 0");
    }
    if (!(inputs.m_pi >= 1.0) || !(inputs.m_gamma >= 1.0) || !(inputs.m_Q >= 1.0) ||
        !(inputs.h > 0.0)) {
        throw PreconditionError("log_bound_thm17: envelope constants must be >= 1 and h > 0");
    }
    const double qd = q;
    const double integral =
        grid_count_bound(inputs.pi, inputs.gamma, inputs.h, inputs.m_Q, inputs.m_pi, T);
    BoundReport r;
    r.formula_id = "thm17";
    r.prefactor_log = -kLog4e2 - 0.5 * qd * std::log(2.0 * kPi * T * inputs.m_Q * a) -
                      0.5 * std::log(det_q_t);
    r.exponent_integral = integral;
    r.exponent = qd * (inputs.alpha + 0.5 * a) * integral;
    r.log_lower_bound = r.prefactor_log - r.exponent;

    // The grid itself and both forms of the per-step rate, for comparison.
    const TimeGrid grid = build_grid(inputs.pi, inputs.gamma, inputs.h, inputs.m_Q, T);
    const double n = static_cast<double>(grid.steps());
    const double log_h = 0.5 * (std::log(inputs.m_Q) +
                                std::max(4.0 * std::log(inputs.m_gamma), std::log(inputs.m_pi)));
    const double base = std::log(64.0) + 2.0 + 0.5 * std::log(2.0 * kPi * qd);
    const double theta_step = 0.5 * base + std::log(a) / (2.0 * qd) + (n - 1.0) / n * log_h;
    const double theta_evolution = base + (n - 1.0) / (2.0 * n) * std::log(a) + (n - 1.0) / n * log_h;
    const double det_m_n = std::pow(inputs.m_Q * T, qd) * det_q_t;
    const double composed = -kLog4e2 - 0.5 * qd * std::log(2.0 * kPi * a) -
                            0.5 * std::log(det_m_n) - n * qd * theta_evolution;
    r.trace = {{"q", qd},
               {"T", T},
               {"a", a},
               {"det_Q_T", det_q_t},
               {"alpha", inputs.alpha},
               {"m_Q", inputs.m_Q},
               {"m_pi", inputs.m_pi},
               {"m_gamma", inputs.m_gamma},
               {"h", inputs.h},
               {"grid_N", n},
               {"log_H", log_h},
               {"theta_rate_evolution", theta_evolution},
               {"theta_rate_step", theta_step},
               {"theta_rate_cap", inputs.alpha + 0.5 * a},
               {"log_bound_composed", composed}};
    return r;
}

BoundReport log_bound_thm21(const DiffusionModel& model, const SkeletonPath& path,
                            const GrowthWindow& growth, double mu, double chi,
                            const UniversalConstants& constants, double T, const Vector& y) {
    if (!(mu >= 1.0) || !(chi > 0.0) || !(T > 0.0)) {
        throw PreconditionError("log_bound_thm21: need mu >= 1, chi > 0, T > 0");
    }
    if (!growth.found) {
        throw HypothesisError("log_bound_thm21: no growth window satisfies the window condition");
    }
    if (!std::isfinite(growth.eta_m)) {
        throw HypothesisError("log_bound_thm21: the growth rate M has no finite envelope constant");
    }
    if ((path.terminal() - y).norm() > 1e-6 * (1.0 + y.norm())) {
        throw HypothesisError("log_bound_thm21: the path does not end at y");
    }
    for (std::size_t i = 0; i < path.size(); ++i) {
        const SpectralData sp = spectral(model, path.states[i]);
        if (sp.rho < (1.0 - 1e-12) / mu || !(sp.lambda_min > 0.0) ||
            1.0 / std::sqrt(sp.lambda_min) > chi * (1.0 + 1e-12)) {
            std::ostringstream msg;
            msg << "log_bound_thm21: ellipticity hypothesis fails at t = " << path.times[i];
            throw HypothesisError(msg.str());
        }
    }
    const int q = model.q();
    const double qd = q;
    const double c0 = model.c0();
    const double det = psd_determinant(model.diffusion_matrix(y));
    const double k_diff = std::pow(c0, 6) * constants.c_mp * constants.c_mp;
    const double window = std::min(growth.h_g, growth.h_m);

    BoundReport r;
    r.formula_id = "thm21";
    r.prefactor_log = -kLog4e2 - 0.5 * qd * std::log(6.0 * mu * std::sqrt(qd) * kPi * T) -
                      0.5 * std::log(det);
    const double log_factor = 1.0 + std::log(c0) + std::log(mu) + std::log(growth.eta_m);
    r.exponent_integral = c0 * c0 * std::pow(mu, 4) / T * growth.integral_m2 +
                          max_mu_term(mu, chi) * k_diff + 1.0 / window;
    r.exponent = constants.k_q * T * log_factor * r.exponent_integral;
    r.log_lower_bound = r.prefactor_log - r.exponent;
    r.trace = {{"q", qd},         {"T", T},
               {"C0", c0},        {"mu", mu},
               {"chi", chi},      {"eta_M", growth.eta_m},
               {"h_G", growth.h_g}, {"h_M", growth.h_m},
               {"integral_M2", growth.integral_m2},
               {"K_diff", k_diff}, {"K_q", constants.k_q},
               {"C_mp", constants.c_mp},
               {"det_sigma_sigma_y", det}};
    return r;
}

BoundReport log_bound_thm24(const DiffusionModel& model, const ThetaParams& theta, double d_theta,
                            double T, const Vector& y, const UniversalConstants& constants) {
    theta.validate();
    if (!(d_theta >= 0.0) || !(T > 0.0)) {
        throw PreconditionError("log_bound_thm24: need d_theta >= 0 and T > 0");
    }
    const int q = model.q();
    const double qd = q;
    const double c0 = model.c0();
    const double det = psd_determinant(model.diffusion_matrix(y));
    const double k_diff = std::pow(c0, 6) * constants.c_mp * constants.c_mp;
    const double mu = theta.mu;

    BoundReport r;
    r.formula_id = "thm24";
    r.trace = {{"q", qd},
               {"T", T},
               {"C0", c0},
               {"mu", mu},
               {"chi", theta.chi},
               {"nu", theta.nu_ctl},
               {"eta", theta.eta_ctl},
               {"h", theta.h_ctl},
               {"d_theta", d_theta},
               {"K_diff", k_diff},
               {"K_q", constants.k_q},
               {"C_mp", constants.c_mp},
               {"det_sigma_sigma_y", det}};
    const double neg_inf = -std::numeric_limits<double>::infinity();
    if (!(det > 0.0)) {
        r.prefactor_log = std::numeric_limits<double>::quiet_NaN();
        r.exponent = std::numeric_limits<double>::infinity();
        r.log_lower_bound = neg_inf;
        r.diagnostics = "det sigma sigma^*(y) = 0: prefactor undefined";
        return r;
    }
    r.prefactor_log = -kLog4e2 - 0.5 * qd * std::log(6.0 * mu * std::sqrt(qd) * kPi * T) -
                      0.5 * std::log(det);
    const double log_factor = 1.0 + std::log(c0 * mu * theta.eta_ctl);
    if (std::isinf(d_theta)) {
        r.exponent_integral = std::numeric_limits<double>::infinity();
        r.exponent = std::numeric_limits<double>::infinity();
        r.log_lower_bound = neg_inf;
        r.diagnostics = "no admissible control: d_theta is infinite";
        return r;
    }
    r.exponent_integral =
        std::pow(c0, 4) * std::pow(mu, 4) * d_theta * d_theta +
        T * (max_mu_term(mu, theta.chi) * k_diff + 1.0 / theta.h_ctl + 2.0 * c0 * theta.nu_ctl * std::sqrt(qd));
    r.exponent = constants.k_q * log_factor * r.exponent_integral;
    r.log_lower_bound = r.prefactor_log - r.exponent;
    return r;
}

}  // namespace ldb
