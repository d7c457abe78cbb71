#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "fedsg/federation.hpp"
#include "fedsg/grassmann.hpp"
#include "fedsg/linalg.hpp"
#include "fedsg/objective.hpp"

namespace {

fedsg::DataMatrix gaussian(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  fedsg::DataMatrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

void BM_ThinQr(benchmark::State& state) {
  const fedsg::DataMatrix m = gaussian(state.range(0), state.range(1), 1);
  for (auto _ : state) benchmark::DoNotOptimize(fedsg::thin_qr(m));
}
BENCHMARK(BM_ThinQr)->Args({34, 3})->Args({673, 3})->Args({256, 16});

void BM_TruncatedSvd(benchmark::State& state) {
  const fedsg::DataMatrix m = gaussian(state.range(0), state.range(1), 2);
  for (auto _ : state) benchmark::DoNotOptimize(fedsg::truncated_svd(m, 3));
}
BENCHMARK(BM_TruncatedSvd)->Args({20, 20})->Args({34, 673});

void BM_Gradients(benchmark::State& state) {
  const auto width = state.range(0);
  const auto model = fedsg::random_factor_pair(34, static_cast<std::size_t>(width), 3, 3);
  const std::vector<fedsg::DataMatrix> shard{gaussian(34, width, 4)};
  for (auto _ : state) {
    benchmark::DoNotOptimize(fedsg::grad_u(model.u, model.v, shard));
    benchmark::DoNotOptimize(fedsg::grad_v(model.u, model.v, shard));
  }
}
BENCHMARK(BM_Gradients)->Arg(64)->Arg(673);

// C alternating steps on one client, the per-round client cost.
void BM_LocalUpdate(benchmark::State& state) {
  const auto width = state.range(0);
  const auto model = fedsg::random_factor_pair(34, static_cast<std::size_t>(width), 3, 5);
  const fedsg::DataMatrix shard = gaussian(34, width, 6);
  for (auto _ : state) benchmark::DoNotOptimize(fedsg::local_update(shard, model.u, model.v, 5, 1e-4));
}
BENCHMARK(BM_LocalUpdate)->Arg(64)->Arg(673);

void BM_Aggregate(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto global = fedsg::random_factor_pair(34, 673, 3, 7);
  std::vector<fedsg::ClientUpdate> updates;
  for (std::size_t i = 0; i < n; ++i) {
    const auto local = fedsg::random_factor_pair(34, 673, 3, 100 + i);
    updates.push_back({i, local.u, local.v, 0.0, 0});
  }
  for (auto _ : state) benchmark::DoNotOptimize(fedsg::aggregate(updates, global, true));
}
BENCHMARK(BM_Aggregate)->Arg(20);

}  // namespace
