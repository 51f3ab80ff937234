#include <doctest.h>

#include "oracles.hpp"

#include <ldb/catalog.hpp>
#include <ldb/error.hpp>
#include <ldb/model.hpp>

#include <cmath>
#include <random>

using namespace ldb;

namespace {

DiffusionModel constant_diag(double a, double b) {
    Matrix s = Matrix::Zero(2, 2);
    s(0, 0) = a;
    s(1, 1) = b;
    return DiffusionModel("diag", 2, 2, [s](const Vector&) { return s; },
                          [](const Vector& x) { return Vector::Zero(x.size()); }, {1, 0, 0}, 3.0);
}

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) {
        out[i++] = x;
    }
    return out;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("growth norm picks the active flags") {
    auto base = identity_model(2);
    CHECK(growth_norm(base.with_eps({1, 0, 0}), vec({7, -3})) == doctest::Approx(1.0));
    CHECK(growth_norm(base.with_eps({0, 1, 1}), vec({3, 4})) == doctest::Approx(5.0));
    CHECK(growth_norm(base.with_eps({1, 1, 1}), vec({0, 0})) == doctest::Approx(1.0));
    CHECK_THROWS_AS((void)growth_norm(base, vec({1, 2, 3})), DimensionError);
}

TEST_CASE("model construction validates its invariants") {
    auto sigma = [](const Vector&) { return Matrix::Identity(1, 1); };
    auto drift = [](const Vector& x) { return Vector::Zero(x.size()); };
    CHECK_THROWS_AS(DiffusionModel("m", 1, 1, sigma, drift, {0, 0}, 1.0), PreconditionError);
    CHECK_THROWS_AS(DiffusionModel("m", 1, 1, sigma, drift, {1, 0}, 0.0), PreconditionError);
    CHECK_THROWS_AS(DiffusionModel("m", 1, 1, sigma, drift, {1}, 1.0), DimensionError);
    CHECK_THROWS_AS(DiffusionModel("m", 0, 1, sigma, drift, {1}, 1.0), PreconditionError);
    CHECK_THROWS_AS(DiffusionModel("m", 1, 1, sigma, drift, {2, 0}, 1.0), PreconditionError);
}

TEST_CASE("spectral data of simple diffusions") {
    const auto id = identity_model(2).with_eps({0, 1, 1});
    const SpectralData a = spectral(id, vec({1, 0}));
    CHECK(a.lambda_min == doctest::Approx(1.0));
    CHECK(a.lambda_max == doctest::Approx(1.0));
    CHECK(a.rho == doctest::Approx(1.0));
    CHECK(a.det == doctest::Approx(1.0));

    const SpectralData b = spectral(constant_diag(2, 3), vec({0.3, -1}));
    CHECK(b.lambda_min == doctest::Approx(4.0));
    CHECK(b.lambda_max == doctest::Approx(9.0));
    CHECK(b.rho == doctest::Approx(2.0));
    CHECK(b.det == doctest::Approx(36.0));

    const SpectralData z = spectral(constant_diag(0, 3), vec({0, 0}));
    CHECK(z.lambda_min == doctest::Approx(0.0));
    CHECK(z.rho == doctest::Approx(0.0));
}

TEST_CASE("spectral matches a Jacobi eigen oracle on random matrices") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        Matrix s(3, 3);
        for (int i = 0; i < 9; ++i) {
            s(i / 3, i % 3) = normal(rng);
        }
        DiffusionModel m("random", 3, 3, [s](const Vector&) { return s; },
                         [](const Vector& x) { return Vector::Zero(x.size()); }, {1, 0, 0, 0}, 5.0);
        const SpectralData sp = spectral(m, Vector::Zero(3));
        const auto eig = oracle::jacobi_eigenvalues(s * s.transpose());
        CHECK(sp.lambda_min == doctest::Approx(eig.front()).epsilon(1e-10).scale(eig.back()));
        CHECK(sp.lambda_max == doctest::Approx(eig.back()).epsilon(1e-10));
        CHECK(sp.det == doctest::Approx(eig[0] * eig[1] * eig[2]).epsilon(1e-9).scale(1.0));
        CHECK(sp.rho * growth_norm(m, Vector::Zero(3)) ==
              doctest::Approx(std::sqrt(std::max(0.0, sp.lambda_min))).epsilon(1e-12));
    }
}

TEST_CASE("extreme eigenvalues bound the quadratic form") {
    const auto m = rotation_model();
    std::mt19937_64 rng(3);
    std::normal_distribution<double> normal(0.0, 1.0);
    const Vector x = vec({0.7, -0.2});
    const SpectralData sp = spectral(m, x);
    const Matrix a = m.diffusion_matrix(x);
    for (int i = 0; i < 1000; ++i) {
        Vector xi = vec({normal(rng), normal(rng)});
        xi.normalize();
        const double form = xi.dot(a * xi);
        CHECK(form >= sp.lambda_min - 1e-9);
        CHECK(form <= sp.lambda_max + 1e-9);
    }
}

TEST_CASE("finite-difference derivatives agree with analytic ones") {
    const auto s = sine_model();
    const Vector x = vec({0.4});
    DiffusionModel fd("fd", 1, 1, [](const Vector& z) { return Matrix::Constant(1, 1, 2.0 + std::sin(z[0])); },
                      [](const Vector& z) { return Vector::Zero(z.size()); }, {1, 1}, 2.3);
    CHECK(fd.sigma_partials(x)[0](0, 0) == doctest::Approx(s.sigma_partials(x)[0](0, 0)).epsilon(1e-8));
    CHECK(fd.sigma_partials(x)[0](0, 0) == doctest::Approx(std::cos(0.4)).epsilon(1e-8));
}

TEST_CASE("hypothesis A on the identity diffusion") {
    for (int q = 1; q <= 3; ++q) {
        const auto m = identity_model(q, std::sqrt(static_cast<double>(q)));
        std::vector<std::pair<Vector, Vector>> pairs;
        std::mt19937_64 rng(q);
        std::normal_distribution<double> normal(0.0, 2.0);
        for (int i = 0; i < 20; ++i) {
            Vector a(q);
            Vector b(q);
            for (int j = 0; j < q; ++j) {
                a[j] = normal(rng);
                b[j] = normal(rng);
            }
            pairs.emplace_back(a, b);
        }
        const HypothesisReport r = check_hypothesis_A(m, pairs);
        CHECK(r.all_ok());
        CHECK(r.declared_order == q + 2);
        CHECK(r.max_order_checked == 2);
    }
}

TEST_CASE("hypothesis A growth failure is detected") {
    DiffusionModel m("linear", 1, 1, [](const Vector& x) { return Matrix::Constant(1, 1, x[0]); },
                     [](const Vector& x) { return Vector::Zero(x.size()); }, {1, 1}, 0.8);
    const std::vector<std::pair<Vector, Vector>> pairs{{vec({2.0}), vec({2.0})}};
    const HypothesisReport r = check_hypothesis_A(m, pairs);
    // |sigma(2)| = 2 > 0.8 * sqrt(5)
    CHECK_FALSE(r.growth_ok());
    CHECK(r.samples[0].growth_margin < 0.0);
}

TEST_CASE("hypothesis A Lipschitz check on a sine diffusion") {
    for (int q = 1; q <= 3; ++q) {
        DiffusionModel m("sin", q, q,
                         [q](const Vector& x) { return Matrix(std::sin(x[0]) * Matrix::Identity(q, q)); },
                         [](const Vector& x) { return Vector::Zero(x.size()); },
                         std::vector<int>(static_cast<std::size_t>(q) + 1, 1), static_cast<double>(q));
        Vector e1 = Vector::Zero(q);
        e1[0] = 1.0;
        const std::vector<std::pair<Vector, Vector>> pairs{{Vector::Zero(q), e1}};
        CHECK(check_hypothesis_A(m, pairs).lipschitz_ok());
    }
}

TEST_CASE("hypothesis A rejects bad arguments") {
    const auto m = identity_model(1);
    const std::vector<std::pair<Vector, Vector>> none;
    CHECK_THROWS_AS((void)check_hypothesis_A(m, none), PreconditionError);
    const std::vector<std::pair<Vector, Vector>> one{{vec({0}), vec({1})}};
    CHECK_THROWS_AS((void)check_hypothesis_A(m, one, 3), PreconditionError);
}

TEST_CASE("consequences of hypothesis A hold on the catalog") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> normal(0.0, 1.5);
    for (const std::string& name : model_names()) {
        const DiffusionModel m = make_model(name);
        std::vector<std::pair<Vector, Vector>> pairs;
        for (int i = 0; i < 30; ++i) {
            Vector a(m.q());
            Vector b(m.q());
            for (int j = 0; j < m.q(); ++j) {
                a[j] = normal(rng);
                b[j] = a[j] + 0.3 * normal(rng);
            }
            pairs.emplace_back(a, b);
        }
        const HypothesisReport r = check_hypothesis_A(m, pairs);
        INFO(name);
        CHECK(r.all_ok());
        CHECK(r.consequences_ok());
    }
}

TEST_CASE("catalog registry") {
    CHECK(has_model("identity-2d"));
    CHECK_FALSE(has_model("no-such-model"));
    CHECK_THROWS_AS((void)make_model("no-such-model"), PreconditionError);
    register_model("test-custom", [] { return identity_model(4); });
    CHECK(make_model("test-custom").q() == 4);
}

}  // TEST_SUITE
