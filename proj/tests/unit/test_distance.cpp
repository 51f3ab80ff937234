#include <doctest.h>

#include "oracles.hpp"

#include <ldb/catalog.hpp>
#include <ldb/distance.hpp>

#include <cmath>
#include <random>

using namespace ldb;

namespace {

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) {
        out[i++] = x;
    }
    return out;
}

ThetaParams generous(double t_end) { return ThetaParams{4.0, 4.0, 100.0, 100.0, t_end, t_end}; }

}  // namespace

TEST_SUITE("distance") {

TEST_CASE("init control on the identity diffusion") {
    const auto m = identity_model(3);
    const InitialControl ic = init_control(m, vec({0, 0, 0}), vec({1, 0, 0}), 1.0, 4);
    CHECK_FALSE(ic.fell_back);
    REQUIRE(ic.control.pieces() == 4);
    for (const Vector& v : ic.control.values()) {
        CHECK((v - vec({1, 0, 0})).norm() < 1e-14);
    }
}

TEST_CASE("init control inverts a constant scale") {
    const auto m = diagonal_affine_model(vec({2}), vec({0}), vec({0}), vec({0}), 3.0);
    const InitialControl ic = init_control(m, vec({0}), vec({2}), 1.0, 3);
    for (const Vector& v : ic.control.values()) {
        CHECK(v[0] == doctest::Approx(1.0));
    }
}

TEST_CASE("init control falls back when sigma vanishes on the segment") {
    const auto m = diagonal_affine_model(vec({0}), vec({1}), vec({0}), vec({0}), 3.0);
    const InitialControl ic = init_control(m, vec({-1}), vec({1}), 1.0, 3);
    CHECK(ic.fell_back);
    CHECK_FALSE(ic.note.empty());
    for (const Vector& v : ic.control.values()) {
        CHECK(v.norm() == 0.0);
    }
}

TEST_CASE("identity diffusion distance is the scaled displacement") {
    const auto m = identity_model(2);
    const DistanceResult r = minimize_energy(m, vec({0, 0}), vec({1, 0}), generous(1.0), 4);
    REQUIRE(r.feasible());
    CHECK(r.d_theta_upper == doctest::Approx(1.0).epsilon(0.01));
    CHECK(r.d_theta_upper >= 1.0 - 1e-9);
    CHECK(r.d_theta_upper == doctest::Approx(control_norm(*r.witness)).epsilon(1e-14));
    CHECK(r.report.feasible());
}

TEST_CASE("random identity instances") {
    std::mt19937_64 rng(31);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> horizon(0.5, 3.0);
    for (int trial = 0; trial < 10; ++trial) {
        const auto m = identity_model(2);
        const Vector x0 = vec({normal(rng), normal(rng)});
        const Vector y = vec({normal(rng), normal(rng)});
        const double t_end = horizon(rng);
        OptimizerConfig cfg;
        cfg.seed = static_cast<std::uint64_t>(trial);
        const DistanceResult r = minimize_energy(m, x0, y, generous(t_end), 3, cfg);
        INFO("trial " << trial);
        REQUIRE(r.feasible());
        CHECK(r.d_theta_upper == doctest::Approx((y - x0).norm() / std::sqrt(t_end)).epsilon(0.01));
        // Re-checking the witness from scratch.
        const SkeletonPath p = integrate_skeleton(m, *r.witness, x0, t_end / 64);
        CHECK(check_admissible(m, *r.witness, p, generous(t_end), y).feasible());
    }
}

TEST_CASE("unsatisfiable ellipticity gives infinity") {
    const auto m = identity_model(2);
    ThetaParams theta = generous(1.0);
    theta.chi = 0.5;
    OptimizerConfig cfg;
    cfg.outer_iterations = 3;
    cfg.inner_iterations = 40;
    const DistanceResult r = minimize_energy(m, vec({0, 0}), vec({1, 0}), theta, 2, cfg);
    CHECK_FALSE(r.feasible());
    CHECK(std::isinf(r.d_theta_upper));
    CHECK_FALSE(r.diagnostics.empty());
}

TEST_CASE("sine model against closed form and coarse search") {
    const auto m = sine_model();
    const ThetaParams theta{2.0, 1.0, 10.0, 10.0, 1.0, 1.0};
    const DistanceResult r = minimize_energy(m, vec({0}), vec({2}), theta, 3);
    REQUIRE(r.feasible());
    const double coarse = oracle::sine_three_piece_search(0.0, 2.0, 1.0, 41, 0.0, 2.0);
    const double exact = oracle::sine_distance(0.0, 2.0, 1.0);
    CHECK(r.d_theta_upper == doctest::Approx(coarse).epsilon(0.05));
    CHECK(r.d_theta_upper == doctest::Approx(exact).epsilon(0.01));
    CHECK(coarse >= exact - 1e-9);
}

TEST_CASE("refinement and relaxation do not increase the estimate") {
    const auto m = sine_model();
    const ThetaParams theta{2.0, 1.0, 10.0, 3.0, 0.5, 1.0};
    const double tol = 0.01;
    const DistanceResult coarse = minimize_energy(m, vec({0}), vec({1.5}), theta, 2);
    const DistanceResult fine = minimize_energy(m, vec({0}), vec({1.5}), theta, 4);
    REQUIRE(coarse.feasible());
    REQUIRE(fine.feasible());
    CHECK(fine.d_theta_upper <= coarse.d_theta_upper * (1.0 + tol));

    ThetaParams wide = theta;
    wide.mu *= 2;
    wide.chi *= 2;
    wide.nu_ctl *= 2;
    wide.eta_ctl *= 2;
    wide.h_ctl = 1.0;
    const DistanceResult relaxed = minimize_energy(m, vec({0}), vec({1.5}), wide, 2);
    REQUIRE(relaxed.feasible());
    CHECK(relaxed.d_theta_upper <= coarse.d_theta_upper * (1.0 + tol));
}

TEST_CASE("results are deterministic for a seed and thread count") {
    const auto m = rotation_model();
    OptimizerConfig a;
    a.seed = 5;
    a.threads = 1;
    OptimizerConfig b = a;
    b.threads = 3;
    const auto ra = minimize_energy(m, vec({0, 0}), vec({0.5, 0.3}), generous(1.0), 3, a);
    const auto rb = minimize_energy(m, vec({0, 0}), vec({0.5, 0.3}), generous(1.0), 3, b);
    REQUIRE(ra.feasible());
    CHECK(ra.d_theta_upper == rb.d_theta_upper);
}

TEST_CASE("gradient descent inner method also finds the minimum") {
    const auto m = identity_model(1);
    OptimizerConfig cfg;
    cfg.method = InnerMethod::GradientDescent;
    const DistanceResult r = minimize_energy(m, vec({0}), vec({1.0}), generous(2.0), 2, cfg);
    REQUIRE(r.feasible());
    CHECK(r.d_theta_upper == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(0.01));
}

}  // TEST_SUITE
