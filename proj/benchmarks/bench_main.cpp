#include <ldb/catalog.hpp>
#include <ldb/evolution.hpp>
#include <ldb/grid.hpp>
#include <ldb/skeleton.hpp>
#include <ldb/verify.hpp>

#include <benchmark/benchmark.h>

#include <random>

namespace {

using namespace ldb;

void BM_BuildGrid(benchmark::State& state) {
    const double t_end = 4.0;
    std::vector<double> times;
    std::vector<double> gamma;
    for (int i = 0; i <= 64; ++i) {
        times.push_back(t_end * i / 64.0);
        gamma.push_back(0.5 + 0.4 * std::sin(static_cast<double>(i)));
    }
    const auto pi = EnvelopeFn::constant(1.0, t_end);
    const auto g = EnvelopeFn::fit(times, gamma, t_end);
    const double m_q = static_cast<double>(state.range(0));
    for (auto _ : state) {
        benchmark::DoNotOptimize(build_grid(pi, g, 1.0, m_q, t_end));
    }
}
BENCHMARK(BM_BuildGrid)->Arg(1)->Arg(4)->Arg(16);

void BM_GramCheck(benchmark::State& state) {
    const auto q = static_cast<int>(state.range(0));
    std::mt19937_64 rng(1);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix u(q, q + 2);
    Matrix w(q, q + 2);
    for (Eigen::Index i = 0; i < u.size(); ++i) {
        u.data()[i] = normal(rng);
        w.data()[i] = 0.3 * normal(rng);
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(gram_perturbation_check(u, w));
    }
}
BENCHMARK(BM_GramCheck)->DenseRange(1, 5);

void BM_IntegrateSkeleton(benchmark::State& state) {
    const auto m = rotation_model();
    Vector a(2);
    a << 1.0, 0.5;
    Vector b(2);
    b << -0.3, 0.8;
    const Control c = Control::uniform({a, b, a, b}, 1.0);
    Vector x0 = Vector::Zero(2);
    const double step = 1.0 / static_cast<double>(state.range(0));
    for (auto _ : state) {
        benchmark::DoNotOptimize(integrate_skeleton(m, c, x0, step));
    }
}
BENCHMARK(BM_IntegrateSkeleton)->Arg(64)->Arg(512);

void BM_KdeAtPoint(benchmark::State& state) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Vector> samples;
    for (std::int64_t i = 0; i < state.range(0); ++i) {
        samples.push_back(Vector::Constant(1, normal(rng)));
    }
    const Vector y = Vector::Constant(1, 0.5);
    for (auto _ : state) {
        benchmark::DoNotOptimize(kde_at_point(samples, y, {}, 0.99, 20));
    }
}
BENCHMARK(BM_KdeAtPoint)->Arg(10000)->Arg(100000);

}  // namespace

BENCHMARK_MAIN();
