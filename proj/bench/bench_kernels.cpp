#include <benchmark/benchmark.h>

#include <random>

#include "revgan/kernels.hpp"
#include "revgan/stats.hpp"

using namespace revgan;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Matrix m(r, c);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = u(rng);
    return m;
}

template <auto Kernel>
void matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const Matrix a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
    Matrix out(n, n);
    for (auto _ : state) {
        Kernel(a, b, out, false);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

template <auto Kernel>
void pairwise(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const Matrix a = random_matrix(n, 300, 3), b = random_matrix(n, 300, 4);
    Matrix out(n, n);
    for (auto _ : state) {
        Kernel(a, b, out);
        benchmark::DoNotOptimize(out.data());
    }
}

void bootstrap(benchmark::State& state) {
    const bool parallel = state.range(0) != 0;
    std::vector<double> x(2000);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g;
    for (double& v : x) v = g(rng);
    auto a = [&](const std::vector<std::size_t>& idx) {
        double s = 0;
        for (std::size_t i : idx) s += x[i];
        return s / static_cast<double>(idx.size());
    };
    auto b = [&](const std::vector<std::size_t>& idx) {
        double s = 0;
        for (std::size_t i : idx) s += x[i] * 0.9;
        return s / static_cast<double>(idx.size());
    };
    for (auto _ : state) benchmark::DoNotOptimize(bootstrap_compare("mean", a, b, x.size(), 1000, 1, parallel));
}

}  // namespace

BENCHMARK(matmul<kernels::serial::matmul>)->Name("matmul/serial")->Arg(64)->Arg(256);
BENCHMARK(matmul<kernels::omp::matmul>)->Name("matmul/omp")->Arg(64)->Arg(256);
BENCHMARK(pairwise<kernels::serial::pairwise_euclidean>)->Name("pairwise_euclidean/serial")->Arg(64)->Arg(256);
BENCHMARK(pairwise<kernels::omp::pairwise_euclidean>)->Name("pairwise_euclidean/omp")->Arg(64)->Arg(256);
BENCHMARK(bootstrap)->Name("bootstrap")->ArgName("parallel")->Arg(0)->Arg(1);

BENCHMARK_MAIN();
