#include <doctest.h>

#include "oracles.hpp"

#include <ldb/bounds.hpp>
#include <ldb/catalog.hpp>
#include <ldb/error.hpp>

#include <cmath>
#include <numbers>
#include <random>

using namespace ldb;

namespace {

constexpr double kPi = std::numbers::pi;

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) {
        out[i++] = x;
    }
    return out;
}

DiffusionModel constant_diag(double a, double b, double c0) {
    Matrix s = Matrix::Zero(2, 2);
    s(0, 0) = a;
    s(1, 1) = b;
    return DiffusionModel("diag", 2, 2, [s](const Vector&) { return s; },
                          [](const Vector& x) { return Vector::Zero(x.size()); }, {1, 0, 0}, c0);
}

SkeletonPath sine_path(double c0 = 2.3) {
    const auto m = sine_model(c0);
    return integrate_skeleton(m, Control::uniform({vec({1.0}), vec({0.6}), vec({1.4})}, 1.5),
                              vec({0.0}), 0.01);
}

std::vector<double> probe_grid() {
    std::vector<double> probes;
    for (int i = 1; i < 100; ++i) {
        probes.push_back(0.01 * i);
    }
    return probes;
}

// mu, chi just large enough for the path.
std::pair<double, double> fitted_mu_chi(const DiffusionModel& m, const SkeletonPath& p) {
    double rho = std::numeric_limits<double>::infinity();
    double lam = std::numeric_limits<double>::infinity();
    for (const Vector& x : p.states) {
        const SpectralData sp = spectral(m, x);
        rho = std::min(rho, sp.rho);
        lam = std::min(lam, sp.lambda_min);
    }
    return {std::max(1.0, 1.01 / rho), 1.01 / std::sqrt(lam)};
}

double relative(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace

TEST_SUITE("bounds") {

TEST_CASE("universal constants") {
    const UniversalConstants c1 = make_constants(1);
    CHECK(c1.p_q == 64.0);
    CHECK(c1.m_q == doctest::Approx(4096.0));
    CHECK(c1.log_c_q == doctest::Approx(271.8).epsilon(1e-3));
    for (int q = 1; q <= 4; ++q) {
        const UniversalConstants c = make_constants(q);
        CHECK(relative(c.log_c_q, oracle::hp_log_c_q(q)) < 1e-14);
        const double k = q + 3;
        CHECK(c.log_m_q == doctest::Approx(k * std::log(4.0) + k * std::log(q + 1.0)));
        CHECK(c.p_q == std::pow(2.0, 2 * (q + 2)));
    }
    ConstantOverrides o;
    set_override(o, "p_star", 3.0);
    set_override(o, "c_star", std::exp(1.0));
    set_override(o, "K_q", 2.0);
    const UniversalConstants c = make_constants(1, o);
    CHECK(c.p_q == 192.0);
    CHECK(c.log_c_q == doctest::Approx(c1.log_c_q + 1.0));
    CHECK(c.k_q == 2.0);
    CHECK_THROWS_AS(set_override(o, "bogus", 1.0), PreconditionError);
    set_override(o, "mu_k", -1.0);
    CHECK_THROWS_AS((void)make_constants(1, o), PreconditionError);
    CHECK_THROWS_AS((void)make_constants(0), PreconditionError);
}

TEST_CASE("elliptic parameters of constant diffusions") {
    const auto consts = make_constants(2);
    for (double c0 : {1.0, 2.0}) {
        const auto m = identity_model(2, c0);
        const auto p = integrate_skeleton(m, Control::constant(vec({1, 0}), 1.0), vec({0, 0}), 0.25);
        const EllipticParams e = elliptic_params(m, p, consts);
        CHECK(e.a == 1.5);
        CHECK(e.nu_exp == 0.5);
        for (std::size_t i = 0; i < e.times.size(); ++i) {
            CHECK((e.q_mats[i] - 0.5 * Matrix::Identity(2, 2)).norm() < 1e-15);
            CHECK(e.r[i] == doctest::Approx(1.0 / (6.0 * std::pow(2.0, 1.5) * c0 * c0 * c0)));
            CHECK(e.k[i] == doctest::Approx(2.0 * consts.c_mp));
        }
    }
    const auto d = constant_diag(2, 3, 4.0);
    const auto p = integrate_skeleton(d, Control::constant(vec({0, 0}), 1.0), vec({0, 0}), 0.5);
    const EllipticParams e = elliptic_params(d, p, consts);
    CHECK(e.r[0] == doctest::Approx(4.0 / (6.0 * std::pow(2.0, 1.5) * 64.0)));
}

TEST_CASE("elliptic parameters reject degenerate paths") {
    const auto m = diagonal_affine_model(vec({0}), vec({1}), vec({0}), vec({0}), 1.0);
    SkeletonPath p;
    p.times = {0.0, 0.3, 0.6};
    p.states = {vec({1.0}), vec({0.0}), vec({-1.0})};
    p.derivs = {vec({0.0}), vec({0.0}), vec({0.0})};
    try {
        (void)elliptic_params(m, p, make_constants(1));
        FAIL("expected a DegenerateError");
    } catch (const DegenerateError& e) {
        CHECK(e.time() == 0.3);
    }
}

TEST_CASE("tube radius satisfies its defining inequality") {
    const auto m = sine_model();
    const auto p = sine_path();
    const EllipticParams e = elliptic_params(m, p, make_constants(1));
    for (std::size_t i = 0; i < p.size(); ++i) {
        const SpectralData sp = spectral(m, p.states[i]);
        const double n = growth_norm(m, p.states[i]);
        const double lhs = 3.0 * std::pow(m.c0(), 3) * n * n * e.r[i];
        CHECK(lhs <= sp.lambda_min / 2.0 * (1.0 + 1e-12));
        CHECK(lhs == doctest::Approx(sp.lambda_min / 2.0).epsilon(1e-12));
    }
}

TEST_CASE("tube check on a constant diffusion has margin lambda/2") {
    const auto m = constant_diag(2, 3, 4.0);
    const auto p = integrate_skeleton(m, Control::constant(vec({0.2, 0.1}), 1.0), vec({0, 0}), 0.1);
    const TubeCheckReport r = tube_ellipticity_check(m, p, elliptic_params(m, p, make_constants(2)), 50);
    CHECK(r.violations == 0);
    CHECK(r.worst_upper_margin == doctest::Approx(2.0));
    CHECK(r.worst_lower_margin == doctest::Approx(2.0));
    CHECK(r.probes == 50 * p.size());
}

TEST_CASE("tube check on the sine model") {
    const auto good = sine_model();
    const auto p = sine_path();
    const auto consts = make_constants(1);
    const TubeCheckReport ok = tube_ellipticity_check(good, p, elliptic_params(good, p, consts), 1000, 3);
    CHECK(ok.violations == 0);
    CHECK_FALSE(ok.first_violation_time.has_value());

    const auto halved = sine_model(good.c0() / 2.0);
    const TubeCheckReport bad = tube_ellipticity_check(halved, p, elliptic_params(halved, p, consts), 1000, 3);
    CHECK(bad.violations > 0);
    CHECK(bad.first_violation_time.has_value());
}

TEST_CASE("derived envelopes") {
    const auto m = identity_model(1, 1.0);
    const auto consts = make_constants(1);
    const Control ctl({0.0, 0.5, 1.0}, {vec({1.0}), vec({2.0})});
    const auto p = integrate_skeleton(m, ctl, vec({0.0}), 0.05);
    const ThetaParams theta{2.0, 2.0, 10.0, 2.0, 1.0, 1.0};
    const BoundInputs in = derive_envelopes(m, p, ctl, theta, consts, vec({1.5}));
    CHECK(in.k_diff == 1.0);
    CHECK(in.m_pi == 1.0);
    const double pi_value = 1.0 / std::max(16.0, 16.0);
    for (double t : {0.0, 0.3, 0.7, 1.0}) {
        CHECK(in.pi(t) == doctest::Approx(pi_value));
    }
    CHECK(in.observed_m_gamma == doctest::Approx(theta.eta_ctl));
    CHECK(in.m_gamma == theta.eta_ctl);
    CHECK(in.gamma(0.25) == doctest::Approx(std::sqrt(2.0) * 2.0));
    CHECK(in.gamma(0.75) == doctest::Approx(std::sqrt(2.0) * 4.0));
    CHECK(in.m_Q == doctest::Approx(8.0));
    CHECK(in.h_Q == doctest::Approx(1.0 / 20.0));
    CHECK(in.h == doctest::Approx(1.0 / 20.0));
    CHECK(in.alpha == doctest::Approx(grid_alpha(1, 8.0, 2.0, 1.0)));
    CHECK(in.log_det_q_t == doctest::Approx(std::log(0.5)));

    ThetaParams tight = theta;
    tight.eta_ctl = 1.5;
    CHECK_THROWS_AS((void)derive_envelopes(m, p, ctl, tight, consts, vec({1.5})), PreconditionError);
}

TEST_CASE("evolution bound with one step") {
    const BoundReport r = log_bound_evolution(1, 1, {}, {}, 1.0, 1.0);
    const double theta = std::log(64.0) + 2.0 + 0.5 * std::log(2.0 * kPi);
    CHECK(r.find("theta_rate").value() == doctest::Approx(theta));
    CHECK(r.log_lower_bound == doctest::Approx(-std::log(4.0) - 2.0 - 0.5 * std::log(2.0 * kPi) - theta));
    CHECK(r.find("log_tube_bound").value() == doctest::Approx(-theta));
    CHECK(r.formula_id == "thm15");
}

TEST_CASE("evolution bound monotonicity and chain consistency") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> unit(1.0, 5.0);
    for (int trial = 0; trial < 40; ++trial) {
        const int n = 2 + trial % 4;
        const int q = 1 + trial % 3;
        std::vector<double> a(n - 1);
        std::vector<double> h(n - 1);
        for (int k = 0; k < n - 1; ++k) {
            a[k] = unit(rng);
            h[k] = unit(rng);
        }
        const BoundReport base = log_bound_evolution(n, q, a, h, 2.0, 3.0);
        // Per-step factor written out independently: 1 / (8^{q+1} H^q e^2 (2 q a pi)^{q/2}).
        double product = 0.0;
        for (int k = 0; k < n - 1; ++k) {
            product += std::log(1.0 / (std::pow(8.0, q + 1) * std::pow(h[k], q) * std::exp(2.0) *
                                       std::pow(2.0 * q * a[k] * kPi, q / 2.0)));
        }
        CHECK(relative(base.find("log_step_product").value(), product) < 1e-12);
        CHECK(product >= base.find("log_tube_bound").value());

        auto doubled = h;
        doubled[trial % (n - 1)] *= 2.0;
        const BoundReport d = log_bound_evolution(n, q, a, doubled, 2.0, 3.0);
        CHECK(d.log_lower_bound < base.log_lower_bound);
        CHECK(d.find("log_tube_bound").value() < base.find("log_tube_bound").value());
    }
    CHECK_THROWS_AS((void)log_bound_evolution(2, 1, {0.5}, {1.0}, 1.0, 1.0), PreconditionError);
    CHECK_THROWS_AS((void)log_bound_evolution(2, 1, {}, {}, 1.0, 1.0), PreconditionError);
}

TEST_CASE("grid bound closed form") {
    BoundInputs in;
    in.pi = EnvelopeFn::constant(1.0, 1.0);
    in.gamma = EnvelopeFn::constant(0.0, 1.0);
    in.h = 1.0;
    in.alpha = grid_alpha(1, 1.0, 1.0, 1.0);
    CHECK(in.alpha == doctest::Approx(std::log(8.0 * std::exp(1.0) * std::pow(2.0 * kPi, 0.25))));
    const BoundReport r = log_bound_thm17(in, 1.0, 1, 1.0, 1.0);
    CHECK(r.exponent_integral == doctest::Approx(2.0));
    CHECK(r.log_lower_bound ==
          doctest::Approx(-std::log(4.0 * std::exp(2.0) * std::sqrt(2.0 * kPi)) - (in.alpha + 0.5) * 2.0));
    CHECK(r.find("grid_N").value() == 1.0);
    CHECK(r.formula_id == "thm17");
}

TEST_CASE("grid bound decreases with the horizon") {
    double prev = std::numeric_limits<double>::infinity();
    for (double t_end : {0.5, 1.0, 2.0, 4.0}) {
        BoundInputs in;
        in.pi = EnvelopeFn::constant(0.3, 4.0);
        in.gamma = EnvelopeFn::constant(0.7, 4.0);
        in.m_Q = 2.0;
        in.h = 0.5;
        in.alpha = grid_alpha(2, 2.0, 1.0, 1.0);
        const double v = log_bound_thm17(in, 1.5, 2, t_end, 0.8).log_lower_bound;
        CHECK(v < prev);
        prev = v;
    }
}

TEST_CASE("grid bound against the composed evolution bound") {
    BoundInputs in;
    in.pi = EnvelopeFn::constant(0.25, 2.0);
    in.gamma = EnvelopeFn::constant(0.4, 2.0);
    in.m_Q = 1.5;
    in.m_gamma = 1.2;
    in.h = 0.5;
    in.alpha = grid_alpha(1, in.m_Q, in.m_gamma, 1.0);
    const BoundReport r = log_bound_thm17(in, 1.5, 1, 2.0, 0.7);
    const double n = r.find("grid_N").value();
    // The step rate is capped by alpha + a/2 and the grid bound never exceeds
    // the composed one built from the same grid.
    CHECK(r.find("theta_rate_step").value() <= r.find("theta_rate_cap").value());
    CHECK(n <= r.exponent_integral * 1.01);
    CHECK(r.log_lower_bound <= r.find("log_bound_composed").value());
}

TEST_CASE("path bound matches a high-precision evaluation") {
    const auto m = sine_model();
    const auto consts = make_constants(1);
    const auto p = sine_path();
    const auto [mu, chi] = fitted_mu_chi(m, p);
    const auto probes = probe_grid();
    const GrowthWindow g = growth_window(m, p, 1, probes);
    REQUIRE(g.found);
    const Vector y = p.terminal();
    const BoundReport r = log_bound_thm21(m, p, g, mu, chi, consts, p.horizon(), y);
    const double det = std::pow(2.0 + std::sin(y[0]), 2);
    const double ref = oracle::hp_log_bound_path(1, p.horizon(), mu, chi, m.c0(), g.eta_m, g.h_g, g.h_m,
                                                 g.integral_m2, consts.c_mp, consts.k_q, det);
    CHECK(relative(r.log_lower_bound, ref) < 1e-10);
    CHECK(r.formula_id == "thm21");

    const BoundReport larger = log_bound_thm21(m, p, g, mu * 1.5, chi, consts, p.horizon(), y);
    CHECK(larger.log_lower_bound < r.log_lower_bound);

    CHECK_THROWS_AS((void)log_bound_thm21(m, p, g, 1.0, chi, consts, p.horizon(), y), HypothesisError);
    CHECK_THROWS_AS((void)log_bound_thm21(m, p, g, mu, 0.1, consts, p.horizon(), y), HypothesisError);
    CHECK_THROWS_AS((void)log_bound_thm21(m, p, g, mu, chi, consts, p.horizon(), y + vec({0.1})),
                    HypothesisError);
}

TEST_CASE("path bound on a constant path drops the integral term") {
    const auto m = identity_model(2, 1.5);
    const auto consts = make_constants(2);
    const auto p = integrate_skeleton(m, Control::constant(vec({0, 0}), 1.0, 4), vec({0.3, 0.3}), 0.1);
    const auto probes = probe_grid();
    const GrowthWindow g = growth_window(m, p, 2, probes);
    REQUIRE(g.found);
    CHECK(g.integral_m2 == 0.0);
    const BoundReport r = log_bound_thm21(m, p, g, 1.0, 1.0, consts, 1.0, p.terminal());
    const double ref =
        oracle::hp_log_bound_path(2, 1.0, 1.0, 1.0, 1.5, g.eta_m, g.h_g, g.h_m, 0.0, 1.0, 1.0, 1.0);
    CHECK(relative(r.log_lower_bound, ref) < 1e-10);
}

TEST_CASE("distance bound") {
    const auto consts = make_constants(1);
    const auto m = identity_model(1, 1.0);
    const ThetaParams theta{1.0, 1.0, 2.0, 1.5, 0.5, 2.0};
    const BoundReport inf = log_bound_thm24(m, theta, std::numeric_limits<double>::infinity(), 2.0, vec({1}), consts);
    CHECK(std::isinf(inf.log_lower_bound));
    CHECK(inf.log_lower_bound < 0);

    const double d = 1.0 / std::sqrt(2.0);
    const BoundReport r = log_bound_thm24(m, theta, d, 2.0, vec({1}), consts);
    const double ref = oracle::hp_log_bound_distance(1, 2.0, 1.0, 1.0, 2.0, 1.5, 0.5, 1.0, d, 1.0, 1.0, 1.0);
    CHECK(relative(r.log_lower_bound, ref) < 1e-10);
    CHECK(r.formula_id == "thm24");

    const auto flat = DiffusionModel("flat", 1, 1, [](const Vector&) { return Matrix::Zero(1, 1); },
                                     [](const Vector& x) { return Vector::Zero(x.size()); }, {1, 0}, 1.0);
    const BoundReport degenerate = log_bound_thm24(flat, theta, d, 2.0, vec({1}), consts);
    CHECK(std::isinf(degenerate.log_lower_bound));
    CHECK_FALSE(degenerate.diagnostics.empty());
}

TEST_CASE("distance bound monotonicity") {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    ConstantOverrides o;
    o.c_mp = 1.3;
    o.k_q = 1.1;
    const auto consts = make_constants(2, o);
    for (int trial = 0; trial < 100; ++trial) {
        const double c0 = 1.0 + unit(rng);
        const auto m = identity_model(2, c0);
        ThetaParams th{1.0 + unit(rng), 0.5 + unit(rng), 1.0 + unit(rng), 1.0 + unit(rng), 0.1 + unit(rng), 1.0};
        const double d = 2.0 * unit(rng);
        const double t_end = 0.5 + unit(rng);
        const Vector y = vec({unit(rng), unit(rng)});
        const double base = log_bound_thm24(m, th, d, t_end, y, consts).log_lower_bound;
        const double step = 1.0 + 0.5 * unit(rng);
        INFO("trial " << trial);
        CHECK(log_bound_thm24(m, th, d * step + 0.01, t_end, y, consts).log_lower_bound < base);
        CHECK(log_bound_thm24(m, th, d, t_end * step, y, consts).log_lower_bound < base);
        ThetaParams v = th;
        v.mu *= step;
        CHECK(log_bound_thm24(m, v, d, t_end, y, consts).log_lower_bound < base);
        v = th;
        v.chi *= step;
        CHECK(log_bound_thm24(m, v, d, t_end, y, consts).log_lower_bound <= base);
        v = th;
        v.nu_ctl *= step;
        CHECK(log_bound_thm24(m, v, d, t_end, y, consts).log_lower_bound < base);
        v = th;
        v.h_ctl /= step;
        CHECK(log_bound_thm24(m, v, d, t_end, y, consts).log_lower_bound < base);
        CHECK(log_bound_thm24(identity_model(2, c0 * step), th, d, t_end, y, consts).log_lower_bound < base);
    }
}

TEST_CASE("bounds stay below the Gaussian scale on constant models") {
    const auto consts = make_constants(1);
    const auto m = identity_model(1, 1.0);
    for (double t_end : {0.1, 1.0, 10.0}) {
        const ThetaParams theta{1.0, 1.0, 1.0, 1.0, 1.0, t_end};
        const BoundReport r = log_bound_thm24(m, theta, 0.0, t_end, vec({0}), consts);
        // Density of the half-variance Gaussian at its mode.
        CHECK(r.log_lower_bound <= -0.5 * std::log(2.0 * kPi * t_end * 0.5));
    }
}

}  // TEST_SUITE
