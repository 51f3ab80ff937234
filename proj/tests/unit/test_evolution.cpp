#include <doctest.h>

#include "oracles.hpp"

#include <ldb/error.hpp>
#include <ldb/evolution.hpp>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

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

// Tensor Gauss-Legendre integral of the mollifier over its bounding cube.
double tensor_mass(const Mollifier& phi) {
    using rule = boost::math::quadrature::gauss<double, 100>;
    const double eta = phi.eta();
    const int q = phi.q();
    auto line = [&](auto&& inner) { return rule::integrate(inner, -eta, eta); };
    if (q == 1) {
        return line([&](double x) { return phi(vec({x})); });
    }
    if (q == 2) {
        return line([&](double x) { return line([&](double y) { return phi(vec({x, y})); }); });
    }
    return line([&](double x) {
        return line([&](double y) { return line([&](double z) { return phi(vec({x, y, z})); }); });
    });
}

EvolutionConfig line_config(int n, double delta) {
    EvolutionConfig cfg;
    cfg.q = 1;
    cfg.constants = make_constants(1);
    for (int k = 0; k <= n; ++k) {
        cfg.times.push_back(k * delta);
        cfg.x.push_back(vec({0.25 * std::sqrt(delta) * k}));
    }
    for (int k = 0; k < n; ++k) {
        cfg.m.push_back(Matrix::Constant(1, 1, delta));
        cfg.a.push_back(1.0);
        cfg.h_ratio.push_back(1.0);
        cfg.kernels.push_back(Matrix::Identity(1, 1));
        cfg.remainders.push_back({});
    }
    return cfg;
}

}  // namespace

TEST_SUITE("evolution") {

TEST_CASE("mollifier values") {
    const double c1 = Mollifier::normalizing_constant(1);
    CHECK(c1 == doctest::Approx(oracle::mollifier_constant_1d()).epsilon(1e-10));
    CHECK(c1 == doctest::Approx(2.2523).epsilon(1e-4));
    for (int q = 1; q <= 3; ++q) {
        const Mollifier phi(q, 1.0);
        CHECK(phi(Vector::Zero(q)) == doctest::Approx(phi.c() * std::exp(-1.0)));
        Vector edge = Vector::Zero(q);
        edge[0] = 1.0;
        CHECK(phi(edge) == 0.0);
        edge[0] = 1.5;
        CHECK(phi(edge) == 0.0);
    }
    const Mollifier scaled(1, 0.5);
    CHECK(scaled(0.1) == doctest::Approx(scaled(vec({0.1}))));
    CHECK(scaled(0.1) == doctest::Approx(2.0 * Mollifier(1, 1.0)(0.2)));
    CHECK_THROWS_AS(Mollifier(1, 0.0), PreconditionError);
}

TEST_CASE("mollifier has unit mass") {
    for (int q = 1; q <= 3; ++q) {
        for (double eta : {0.1, 1.0, 10.0}) {
            INFO("q=" << q << " eta=" << eta);
            CHECK(std::abs(tensor_mass(Mollifier(q, eta)) - 1.0) < 1e-6);
        }
    }
}

TEST_CASE("mollified Gaussian against a one-dimensional oracle") {
    boost::math::quadrature::tanh_sinh<double> integrator;
    for (double eta : {0.2, 0.5, 0.9}) {
        for (double mean : {0.0, 0.7, -1.2}) {
            const Mollifier phi(1, eta);
            const double sd = 1.1;
            const double ref = integrator.integrate(
                [&](double u) { return phi(u) * oracle::normal_pdf(0.3 + u, mean, sd); }, -eta, eta);
            const double got = mollified_gaussian(phi, vec({mean}), Matrix::Constant(1, 1, sd * sd), vec({0.3}));
            CHECK(got == doctest::Approx(ref).epsilon(1e-10));
        }
    }
}

TEST_CASE("Gaussian minorization examples") {
    const Matrix one = Matrix::Identity(1, 1);
    const MinorizationResult r = gaussian_minorization_check(one, 1.0, vec({0}), vec({0}), 0.5);
    CHECK(r.pass);
    CHECK(r.method == "quadrature");
    CHECK(r.lhs == doctest::Approx(0.39).epsilon(0.02));
    CHECK(r.rhs == doctest::Approx(1.0 / (std::exp(2.0) * std::sqrt(2.0 * kPi))));
    CHECK_THROWS_AS((void)gaussian_minorization_check(one, 1.0, vec({0}), vec({0}), 1.0), PreconditionError);
    CHECK_THROWS_AS((void)gaussian_minorization_check(one, 1.0, vec({0}), vec({1.5}), 0.5), PreconditionError);
    CHECK_THROWS_AS((void)gaussian_minorization_check(one, 0.5, vec({0}), vec({0}), 0.5), PreconditionError);
}

TEST_CASE("Gaussian minorization at the boundary of the precondition") {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int trial = 0; trial < 30; ++trial) {
        const int q = 1 + trial % 2;
        Matrix b(q, q);
        for (int i = 0; i < q * q; ++i) {
            b(i / q, i % q) = unit(rng) - 0.5;
        }
        const Matrix m = b * b.transpose() + 0.5 * Matrix::Identity(q, q);
        const double a = 1.0 + 3.0 * unit(rng);
        const Matrix c = (1.0 + (a - 1.0) * unit(rng)) * m;
        Vector dir(q);
        for (int j = 0; j < q; ++j) {
            dir[j] = unit(rng) - 0.5;
        }
        const Vector offset = spd_sqrt(m) * dir.normalized();
        const double eta = 0.99 * std::sqrt(min_eigenvalue(m)) * unit(rng) + 1e-3;
        const MinorizationResult r = gaussian_minorization_check(m, a, offset, Vector::Zero(q), eta, c);
        INFO("trial " << trial);
        CHECK(r.pass);
        CHECK(r.lhs >= r.rhs);
    }
}

TEST_CASE("Gaussian minorization by Monte Carlo in higher dimension") {
    const Matrix m = Matrix::Identity(4, 4);
    const MinorizationResult r = gaussian_minorization_check(m, 1.0, Vector::Zero(4), Vector::Zero(4), 0.5);
    CHECK(r.method == "monte-carlo");
    CHECK(r.lhs_se > 0.0);
    CHECK(r.pass);
}

TEST_CASE("Gram perturbation examples") {
    const Matrix u = Matrix::Identity(2, 2);
    const GramResult zero = gram_perturbation_check(u, Matrix::Zero(2, 2));
    CHECK(zero.lhs == doctest::Approx(1.0));
    CHECK(zero.rhs == doctest::Approx(0.5));
    CHECK(zero.pass);
    const GramResult same = gram_perturbation_check(u, u);
    CHECK(same.lhs == doctest::Approx(4.0));
    CHECK(same.rhs == doctest::Approx(-0.5));
    CHECK(same.pass);
    CHECK_THROWS_AS((void)gram_perturbation_check(u, Matrix::Zero(2, 3)), DimensionError);
}

TEST_CASE("Gram perturbation holds on random pairs") {
    std::mt19937_64 rng(13);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> scale(0.0, 1.0);
    for (int trial = 0; trial < 2000; ++trial) {
        const int q = 1 + trial % 5;
        const int k = q + trial % 4;
        Matrix u(q, k);
        Matrix w(q, k);
        const double s = scale(rng);
        for (int i = 0; i < q; ++i) {
            for (int j = 0; j < k; ++j) {
                u(i, j) = normal(rng);
                w(i, j) = s * normal(rng);
            }
        }
        CHECK(gram_perturbation_check(u, w).pass);
    }
}

TEST_CASE("quadratic moment") {
    CHECK(log_quadratic_moment(1) == doctest::Approx(std::log(3.0)));
    CHECK(log_quadratic_moment(2) == doctest::Approx(std::log(11.0) / 2.0));
    // E (Z^2 + 2)^3 = 15 + 3*2*3 + 3*4*1 + 8 = 53
    CHECK(log_quadratic_moment(3) == doctest::Approx(std::log(53.0) / 3.0));
}

TEST_CASE("Wilson interval") {
    const ProportionEstimate e = wilson_interval(50, 100, 1.96);
    CHECK(e.p == 0.5);
    CHECK(e.lo == doctest::Approx(0.4038).epsilon(1e-3));
    CHECK(e.hi == doctest::Approx(0.5962).epsilon(1e-3));
    const ProportionEstimate all = wilson_interval(100, 100, 2.5758);
    CHECK(all.hi == doctest::Approx(1.0));
    CHECK(all.lo < 1.0);
}

TEST_CASE("evolution config validation") {
    EvolutionConfig cfg = line_config(3, 1.0);
    CHECK_NOTHROW(cfg.validate());
    EvolutionConfig far = cfg;
    far.x[2][0] += 0.1;
    CHECK_THROWS_AS(far.validate(), PreconditionError);
    EvolutionConfig shrink = cfg;
    shrink.m[1] = Matrix::Constant(1, 1, 0.5);
    shrink.kernels[1] = Matrix::Constant(1, 1, std::sqrt(0.5));
    CHECK_THROWS_AS(shrink.validate(), PreconditionError);
    shrink.h_ratio[1] = std::sqrt(2.0);
    shrink.x[2] = shrink.x[1];
    shrink.x[3] = shrink.x[1] + vec({0.25});
    CHECK_NOTHROW(shrink.validate());
    EvolutionConfig wide = cfg;
    wide.kernels[0] = Matrix::Constant(1, 1, 2.0);
    CHECK_THROWS_AS(wide.validate(), PreconditionError);
    wide.a[0] = 4.0;
    CHECK_NOTHROW(wide.validate());
}

TEST_CASE("single step with the start on the waypoint") {
    EvolutionConfig cfg = line_config(1, 1.0);
    cfg.x[1] = cfg.x[0];
    EvolutionRunOptions opt;
    opt.n_paths = 1000;
    const EvolutionStats s = simulate_evolution(cfg, {}, opt);
    CHECK(s.tube[0].p == 1.0);
    CHECK(s.tube_pass);
}

TEST_CASE("three-step Gaussian tube chain") {
    const EvolutionConfig cfg = line_config(3, 1.0);
    EvolutionRunOptions opt;
    opt.n_paths = 20000;
    opt.seed = 1;
    opt.eta = 0.5;
    const std::vector<DensityRequest> req{{3, cfg.x[3]}, {2, cfg.x[2] + vec({0.3})}};
    const EvolutionStats s = simulate_evolution(cfg, req, opt);
    CHECK(s.tube_pass);
    CHECK(s.theta_rate == doctest::Approx(std::log(64.0 * std::exp(2.0) * std::sqrt(2.0 * kPi))));
    CHECK(s.tube.back().lo >= std::exp(-3.0 * s.theta_rate));
    REQUIRE(s.steps.size() == 2);
    for (const StepCheck& st : s.steps) {
        CHECK(st.pass);
    }
    // Exact P(A_2): F_1 ~ N(0, 1) must land within 1/2 of x_2 = 1/2.
    const double p2 = std::erf(1.0 / std::sqrt(2.0)) / 2.0;
    CHECK(s.tube[1].lo <= p2);
    CHECK(s.tube[1].hi >= p2);
    REQUIRE(s.densities.size() == 2);
    for (const DensityCheck& d : s.densities) {
        CHECK(d.method == "closed-form");
        CHECK(d.pass);
        CHECK(d.min_value >= std::exp(d.log_bound));
    }
}

TEST_CASE("quadratic remainder with a relaxed threshold") {
    EvolutionConfig cfg = line_config(2, 1.0);
    for (RemainderSpec& r : cfg.remainders) {
        r.kind = RemainderSpec::Kind::Quadratic;
        r.epsilon = 1e-3;
    }
    cfg.relaxed_log_threshold = -2.0;
    EvolutionRunOptions opt;
    opt.n_paths = 2000;
    opt.eta = 0.5;
    opt.max_nested_paths = 20;
    opt.nested_samples = 2000;
    const EvolutionStats s = simulate_evolution(cfg, {{2, cfg.x[2]}}, opt);
    REQUIRE(s.remainders.size() == 2);
    for (const RemainderCheck& rc : s.remainders) {
        CHECK(rc.relaxed);
        CHECK(rc.ok);
        CHECK(rc.log_norm_bound < rc.log_threshold);
    }
    REQUIRE(s.densities.size() == 1);
    CHECK(s.densities[0].method == "nested-monte-carlo");
    CHECK(s.densities[0].pass);

    cfg.relaxed_log_threshold.reset();
    const EvolutionStats strict = simulate_evolution(cfg, {}, opt);
    CHECK_FALSE(strict.remainders[0].ok);
    CHECK_FALSE(strict.remainders[0].relaxed);
}

TEST_CASE("simulation is reproducible across thread counts") {
    const EvolutionConfig cfg = line_config(3, 0.5);
    EvolutionRunOptions a;
    a.n_paths = 3000;
    a.seed = 42;
    a.threads = 1;
    a.eta = 0.3;
    EvolutionRunOptions b = a;
    b.threads = 4;
    const std::vector<DensityRequest> req{{2, cfg.x[2]}};
    const EvolutionStats sa = simulate_evolution(cfg, req, a);
    const EvolutionStats sb = simulate_evolution(cfg, req, b);
    for (std::size_t k = 0; k < sa.tube.size(); ++k) {
        CHECK(sa.tube[k].hits == sb.tube[k].hits);
    }
    CHECK(sa.densities[0].mean_value == sb.densities[0].mean_value);
}

TEST_CASE("simulation preconditions") {
    const EvolutionConfig cfg = line_config(2, 1.0);
    EvolutionRunOptions opt;
    opt.n_paths = 999;
    CHECK_THROWS_AS((void)simulate_evolution(cfg, {}, opt), PreconditionError);
    opt.n_paths = 1000;
    opt.eta = 1.5;
    CHECK_THROWS_AS((void)simulate_evolution(cfg, {{1, cfg.x[1]}}, opt), PreconditionError);
}

}  // TEST_SUITE
