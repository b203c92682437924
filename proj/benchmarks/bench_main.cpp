#include <cmath>
#include <vector>

#include <benchmark/benchmark.h>

#include "poc/dynamics.hpp"
#include "poc/gaussian_oracle.hpp"
#include "poc/meanfield_pde.hpp"
#include "poc/theory_bounds.hpp"

namespace {

void BM_DriftPairwise(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = std::sin(static_cast<double>(i));
  const poc::Kuramoto m{1.0, 1.0, poc::KuramotoOrientation::Synchronizing};
  for (auto _ : state) benchmark::DoNotOptimize(poc::drift_field(m, 0.0, x, n, poc::DriftPath::Pairwise));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_DriftPairwise)->RangeMultiplier(4)->Range(16, 1024)->Complexity();

void BM_DriftShortcut(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = std::sin(static_cast<double>(i));
  const poc::Kuramoto m{1.0, 1.0, poc::KuramotoOrientation::Synchronizing};
  for (auto _ : state) benchmark::DoNotOptimize(poc::drift_field(m, 0.0, x, n, poc::DriftPath::Shortcut));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_DriftShortcut)->RangeMultiplier(4)->Range(16, 1024)->Complexity();

void BM_SimulateLinear(benchmark::State& state) {
  poc::SimulationParams p;
  p.n = static_cast<std::size_t>(state.range(0));
  p.replicas = 100;
  p.dt = 0.01;
  p.horizon = 1.0;
  p.record_times = {1.0};
  const poc::LinearGaussian m{1.0, 0.5, 1.0};
  for (auto _ : state) benchmark::DoNotOptimize(poc::simulate_ensemble(m, p));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(p.n * p.replicas * 100));
}
BENCHMARK(BM_SimulateLinear)->Arg(16)->Arg(64);

void BM_PdeStep(benchmark::State& state) {
  const auto N = static_cast<std::size_t>(state.range(0));
  const auto K = poc::sample_kernel(N, [](double x) { return -std::sin(2.0 * M_PI * x) / (2.0 * M_PI); });
  const auto mu0 = poc::density_from_function(N, [](double x) { return 1.0 + 0.3 * std::cos(2.0 * M_PI * x); });
  const std::vector<double> rec{0.1};
  for (auto _ : state) benchmark::DoNotOptimize(poc::solve_mv_pde(K, 0.5, mu0, 1e-3, 0.1, rec));
  state.SetItemsProcessed(state.iterations() * 100);
}
BENCHMARK(BM_PdeStep)->Arg(256)->Arg(1024);

void BM_GaussianEntropy(benchmark::State& state) {
  const poc::LinearGaussian m{1.0, 0.5, 1.0};
  const auto st = poc::stationary_state(m, 512);
  for (auto _ : state) {
    for (std::size_t k = 1; k <= 512; k *= 2) benchmark::DoNotOptimize(poc::marginal_relative_entropy(st.v, st.c, st.s, k));
  }
}
BENCHMARK(BM_GaussianEntropy);

void BM_Lemma33(benchmark::State& state) {
  poc::TheoryConstants tc;
  tc.sigma = 1.0;
  tc.gamma = 1.0 / 6.0;
  tc.eta = 1.0 / 6.0;
  tc.M = 0.085;
  tc.delta = 0.5;
  const auto n = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(poc::lemma33_bounds(tc, 2.0, 2.0, 2, n, 1.0));
}
BENCHMARK(BM_Lemma33)->Arg(64)->Arg(512)->Arg(4096);

void BM_HierarchyOde(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  poc::HierarchyProfile H0;
  H0.n = n;
  H0.values.assign(n, 0.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(poc::hierarchy_ode_solve(1.5, 0.25, 0.25, n, H0, [](double) { return 1.0; }, 1.0));
  }
}
BENCHMARK(BM_HierarchyOde)->Arg(16)->Arg(256);

}  // namespace
BENCHMARK_MAIN();
