#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "fedsg/detection.hpp"
#include "fedsg/federation.hpp"

namespace {

fedsg::DataMatrix gaussian(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  fedsg::DataMatrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

// Per-sample reconstruction error, the deployed inference path.
void BM_ScoreSample(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  const auto k = static_cast<std::size_t>(state.range(1));
  const auto model = fedsg::random_factor_pair(d, 64, k, 1);
  const fedsg::DataMatrix x = gaussian(static_cast<Eigen::Index>(d), 256, 2);
  std::vector<fedsg::Vector> samples;
  for (Eigen::Index j = 0; j < x.cols(); ++j) samples.emplace_back(x.col(j));
  std::size_t j = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(fedsg::score(model.u, samples[j]));
    j = (j + 1) % samples.size();
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_ScoreSample)->Args({34, 3})->Args({34, 8})->Args({128, 3});

void BM_ScoreAll(benchmark::State& state) {
  const auto n = state.range(0);
  const auto model = fedsg::random_factor_pair(34, 64, 3, 1);
  const fedsg::DataMatrix x = gaussian(34, n, 3);
  for (auto _ : state) benchmark::DoNotOptimize(fedsg::score_all(model.u, x));
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_ScoreAll)->Arg(1000)->Arg(22544);

void BM_FitThreshold(benchmark::State& state) {
  std::mt19937_64 rng(4);
  std::exponential_distribution<double> exp;
  std::vector<double> errors(static_cast<std::size_t>(state.range(0)));
  for (double& e : errors) e = exp(rng);
  for (auto _ : state) benchmark::DoNotOptimize(fedsg::fit_threshold(errors, 18.0));
}
BENCHMARK(BM_FitThreshold)->Arg(1000)->Arg(67343);

void BM_RocAndPr(benchmark::State& state) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal;
  std::bernoulli_distribution coin(0.57);
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<double> scores(n);
  std::vector<bool> attack(n);
  for (std::size_t i = 0; i < n; ++i) {
    attack[i] = coin(rng);
    scores[i] = normal(rng) + (attack[i] ? 1.5 : 0.0);
  }
  for (auto _ : state) benchmark::DoNotOptimize(fedsg::roc_and_pr(scores, attack));
}
BENCHMARK(BM_RocAndPr)->Arg(22544);

}  // namespace

BENCHMARK_MAIN();
