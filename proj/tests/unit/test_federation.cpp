#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "fedsg/data.hpp"
#include "fedsg/error.hpp"
#include "fedsg/federation.hpp"
#include "oracles.hpp"

namespace {

using fedsg::DataMatrix;
using fedsg::FactorPair;
using fedsg::GrassmannPoint;

std::vector<DataMatrix> synthetic_shards(const fedsg::SynthSpec& spec) {
  std::vector<DataMatrix> shards;
  for (const auto& c : fedsg::generate_synthetic(spec).train) shards.push_back(c.features);
  return shards;
}

fedsg::FedConfig small_config() {
  fedsg::FedConfig config;
  config.n_clients = 10;
  config.rounds = 30;
  config.local_steps = 3;
  config.sample_fraction = 0.3;
  config.k = 2;
  config.eta = 0.01;
  config.seed = 17;
  return config;
}

fedsg::SynthSpec small_spec() {
  fedsg::SynthSpec spec;
  spec.d = 12;
  spec.width = 16;
  spec.clients = 10;
  spec.rank = 2;
  spec.test_size = 100;
  return spec;
}

TEST(FedConfig, DefaultsAndValidation) {
  fedsg::FedConfig config;
  EXPECT_EQ(config.n_clients, 100u);
  EXPECT_EQ(config.rounds, 200u);
  EXPECT_EQ(config.local_steps, 5u);
  EXPECT_DOUBLE_EQ(config.sample_fraction, 0.2);
  EXPECT_EQ(config.k, 3u);
  EXPECT_DOUBLE_EQ(config.eta, 0.01);
  EXPECT_TRUE(config.align_before_average);
  EXPECT_EQ(config.clients_per_round(), 20u);
  EXPECT_NO_THROW(config.validate());

  auto bad = config;
  bad.sample_fraction = 0.0;
  EXPECT_THROW(bad.validate(), fedsg::Error);
  bad = config;
  bad.sample_fraction = 1.5;
  EXPECT_THROW(bad.validate(), fedsg::Error);
  bad = config;
  bad.eta = 0.0;
  EXPECT_THROW(bad.validate(), fedsg::Error);
  bad = config;
  bad.rounds = 0;
  EXPECT_THROW(bad.validate(), fedsg::Error);
  bad = config;
  bad.n_clients = 3;
  bad.sample_fraction = 0.1;  // 0.3 clients per round
  EXPECT_THROW(bad.validate(), fedsg::Error);
}

TEST(FedConfig, ClientsPerRoundRoundsUp) {
  fedsg::FedConfig config;
  config.n_clients = 7;
  config.sample_fraction = 0.5;
  EXPECT_EQ(config.clients_per_round(), 4u);
}

TEST(ModelBytes, ClosedForm) { EXPECT_EQ(fedsg::model_bytes(34, 673, 3), 3u * (34u + 673u) * 8u); }

TEST(LocalUpdate, ZeroStepsIsIdentity) {
  std::mt19937_64 rng(1);
  const DataMatrix x = oracle::gaussian(6, 5, rng);
  const GrassmannPoint u(oracle::orthonormal(6, 2, rng));
  const GrassmannPoint v(oracle::orthonormal(5, 2, rng));
  const auto update = fedsg::local_update(x, u, v, 0, 0.01, 4);
  EXPECT_EQ(update.client_id, 4u);
  EXPECT_TRUE(update.u_local == u);
  EXPECT_TRUE(update.v_local == v);
  EXPECT_NEAR(update.local_loss, fedsg::shard_loss(u.basis(), v.basis(), x), 1e-12);
}

TEST(LocalUpdate, StationaryAtExactLowRank) {
  std::mt19937_64 rng(2);
  const DataMatrix uq = oracle::orthonormal(7, 2, rng);
  const GrassmannPoint v(oracle::orthonormal(6, 2, rng));
  DataMatrix s = DataMatrix::Zero(2, 2);
  s.diagonal() << 3.0, 1.5;
  const DataMatrix x = uq * s * v.basis().transpose();
  const GrassmannPoint u(uq);
  const auto update = fedsg::local_update(x, u, v, 5, 0.01);
  EXPECT_LE(fedsg::projector_distance(update.u_local.basis(), u.basis()), 1e-8);
  EXPECT_LE(fedsg::projector_distance(update.v_local.basis(), v.basis()), 1e-8);
  EXPECT_LE(update.local_loss, 1e-16);
}

TEST(LocalUpdate, DecreasesLoss) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    DataMatrix x = oracle::gaussian(8, 6, rng);
    x /= x.norm();
    const GrassmannPoint u(oracle::orthonormal(8, 2, rng));
    const GrassmannPoint v(oracle::orthonormal(6, 2, rng));
    const double before = fedsg::shard_loss(u.basis(), v.basis(), x);
    const auto update = fedsg::local_update(x, u, v, 5, 0.01);
    EXPECT_LT(update.local_loss, before) << "seed " << seed;
    EXPECT_LE(fedsg::orthonormality_defect(update.u_local.basis()), 1e-8);
    EXPECT_LE(fedsg::orthonormality_defect(update.v_local.basis()), 1e-8);
  }
}

TEST(Aggregate, IdenticalUpdates) {
  std::mt19937_64 rng(3);
  const auto u = fedsg::retract(oracle::gaussian(8, 3, rng));
  const auto v = fedsg::retract(oracle::gaussian(6, 3, rng));
  const FactorPair previous = fedsg::random_factor_pair(8, 6, 3, 1);
  for (bool align : {false, true}) {
    std::vector<fedsg::ClientUpdate> updates;
    for (std::size_t i = 0; i < 3; ++i) updates.push_back({i, u, v, 0.0, 0});
    const FactorPair out = fedsg::aggregate(updates, previous, align);
    if (align) {
      EXPECT_LE(fedsg::projector_distance(out.u.basis(), u.basis()), 1e-10);
      EXPECT_LE(fedsg::projector_distance(out.v.basis(), v.basis()), 1e-10);
    } else {
      EXPECT_LE((out.u.basis() - u.basis()).norm(), 1e-12);
      EXPECT_LE((out.v.basis() - v.basis()).norm(), 1e-12);
    }
  }
}

TEST(Aggregate, AlignmentCancelsSignFlip) {
  std::mt19937_64 rng(4);
  const auto u = fedsg::retract(oracle::gaussian(8, 3, rng));
  const auto v = fedsg::retract(oracle::gaussian(6, 3, rng));
  DataMatrix flip = DataMatrix::Identity(3, 3);
  flip(0, 0) = -1.0;
  const GrassmannPoint u_flipped(u.basis() * flip);
  const GrassmannPoint v_flipped(v.basis() * flip);
  const FactorPair previous(u, v);
  const std::vector<fedsg::ClientUpdate> updates{{0, u, v, 0.0, 0}, {1, u_flipped, v_flipped, 0.0, 0}};
  const FactorPair aligned = fedsg::aggregate(updates, previous, true);
  EXPECT_LE((aligned.u.basis() - u.basis()).norm(), 1e-10);
  EXPECT_LE((aligned.v.basis() - v.basis()).norm(), 1e-10);
  // Without alignment the flipped column cancels and the mean collapses.
  try {
    fedsg::aggregate(updates, previous, false);
    ADD_FAILURE();
  } catch (const fedsg::Error& e) {
    EXPECT_EQ(e.code(), fedsg::ErrorCode::kRankDeficient);
  }
}

TEST(Aggregate, RandomUpdatesStayFeasible) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(seed);
    const FactorPair previous = fedsg::random_factor_pair(9, 7, 3, seed);
    std::vector<fedsg::ClientUpdate> updates;
    for (std::size_t i = 0; i < 4; ++i) {
      updates.push_back({i, GrassmannPoint(oracle::orthonormal(9, 3, rng)), GrassmannPoint(oracle::orthonormal(7, 3, rng)),
                         0.0, 0});
    }
    for (bool align : {false, true}) {
      const FactorPair out = fedsg::aggregate(updates, previous, align);
      EXPECT_LE(fedsg::orthonormality_defect(out.u.basis()), 1e-8);
      EXPECT_LE(fedsg::orthonormality_defect(out.v.basis()), 1e-8);
    }
  }
}

TEST(Aggregate, OrderIndependentOfInputOrder) {
  std::mt19937_64 rng(5);
  const FactorPair previous = fedsg::random_factor_pair(9, 7, 2, 5);
  std::vector<fedsg::ClientUpdate> updates;
  for (std::size_t i = 0; i < 5; ++i) {
    updates.push_back({i, GrassmannPoint(oracle::orthonormal(9, 2, rng)), GrassmannPoint(oracle::orthonormal(7, 2, rng)),
                       0.0, 0});
  }
  std::vector<fedsg::ClientUpdate> reversed(updates.rbegin(), updates.rend());
  const FactorPair a = fedsg::aggregate(updates, previous, true);
  const FactorPair b = fedsg::aggregate(reversed, previous, true);
  EXPECT_TRUE(a.u == b.u);
  EXPECT_TRUE(a.v == b.v);
}

TEST(Aggregate, EmptyRejected) {
  const FactorPair previous = fedsg::random_factor_pair(5, 4, 2, 0);
  EXPECT_THROW(fedsg::aggregate({}, previous, true), fedsg::Error);
}

TEST(RunFedsg, RejectsBadShards) {
  auto config = small_config();
  config.n_clients = 2;
  config.sample_fraction = 1.0;
  std::vector<DataMatrix> shards{DataMatrix::Ones(6, 5), DataMatrix::Ones(6, 4)};
  EXPECT_THROW(fedsg::run_fedsg(config, shards), fedsg::Error);
  shards = {DataMatrix::Ones(6, 5)};
  EXPECT_THROW(fedsg::run_fedsg(config, shards), fedsg::Error);  // count != n_clients
}

TEST(RunFedsg, TraceAccounting) {
  const auto config = small_config();
  const auto shards = synthetic_shards(small_spec());
  const auto result = fedsg::run_fedsg(config, shards);
  ASSERT_EQ(result.trace.size(), config.rounds);
  const std::uint64_t per_client = fedsg::model_bytes(12, 16, 2);
  for (std::size_t t = 0; t < result.trace.size(); ++t) {
    const auto& row = result.trace[t];
    EXPECT_EQ(row.round, t);
    EXPECT_EQ(row.sampled.size(), config.clients_per_round());
    EXPECT_EQ(std::set<std::size_t>(row.sampled.begin(), row.sampled.end()).size(), row.sampled.size());
    for (std::size_t id : row.sampled) EXPECT_LT(id, config.n_clients);
    EXPECT_EQ(row.bytes_uplink, per_client * row.sampled.size());
    EXPECT_EQ(row.bytes_downlink, per_client * row.sampled.size());
    EXPECT_GE(row.global_loss, 0.0);
  }
  EXPECT_NEAR(result.trace.back().global_loss, fedsg::loss(result.model.u, result.model.v, shards),
              1e-9 * result.trace.back().global_loss);
}

TEST(RunFedsg, FeasibleAfterEveryRound) {
  const auto shards = synthetic_shards(small_spec());
  std::size_t rounds_seen = 0;
  fedsg::run_fedsg(small_config(), shards,
                   [&](const fedsg::RoundTrace&, const FactorPair& global, std::span<const fedsg::ClientUpdate> updates) {
                     ++rounds_seen;
                     EXPECT_LE(fedsg::orthonormality_defect(global.u.basis()), 1e-8);
                     EXPECT_LE(fedsg::orthonormality_defect(global.v.basis()), 1e-8);
                     for (const auto& up : updates) {
                       EXPECT_LE(fedsg::orthonormality_defect(up.u_local.basis()), 1e-8);
                       EXPECT_LE(fedsg::orthonormality_defect(up.v_local.basis()), 1e-8);
                     }
                   });
  EXPECT_EQ(rounds_seen, small_config().rounds);
}

TEST(RunFedsg, SeedDeterminismAcrossThreadCounts) {
  const auto shards = synthetic_shards(small_spec());
  auto config = small_config();
  const auto a = fedsg::run_fedsg(config, shards);
  config.threads = 4;
  const auto b = fedsg::run_fedsg(config, shards);
  ASSERT_EQ(a.trace.size(), b.trace.size());
  for (std::size_t t = 0; t < a.trace.size(); ++t) {
    EXPECT_EQ(a.trace[t].global_loss, b.trace[t].global_loss);
    EXPECT_EQ(a.trace[t].sampled, b.trace[t].sampled);
  }
  EXPECT_TRUE(a.model.u == b.model.u);
  EXPECT_TRUE(a.model.v == b.model.v);

  std::ostringstream csv_a, csv_b;
  fedsg::write_trace_csv(csv_a, a.trace, false);
  fedsg::write_trace_csv(csv_b, b.trace, false);
  EXPECT_EQ(csv_a.str(), csv_b.str());

  config.seed = 18;
  const auto c = fedsg::run_fedsg(config, shards);
  EXPECT_FALSE(c.model.u == a.model.u);
}

TEST(RunFedsg, ExactLowRankSingleClient) {
  std::mt19937_64 rng(6);
  const DataMatrix u = oracle::orthonormal(10, 3, rng);
  const DataMatrix v = oracle::orthonormal(10, 3, rng);
  DataMatrix s = DataMatrix::Zero(3, 3);
  s.diagonal() << 3.0, 2.0, 1.0;
  const std::vector<DataMatrix> shards{u * s * v.transpose()};
  fedsg::FedConfig config;
  config.n_clients = 1;
  config.sample_fraction = 1.0;
  config.rounds = 200;
  config.k = 3;
  config.eta = 0.05;
  const auto result = fedsg::run_fedsg(config, shards);
  EXPECT_LE(result.trace.back().global_loss, 1e-6 * shards[0].squaredNorm());
}

TEST(RunFedsg, RoundWindowsNonIncreasingOnDefaultSynthetic) {
  const fedsg::SynthSpec spec;
  const auto shards = synthetic_shards(spec);
  fedsg::FedConfig config;
  config.n_clients = spec.clients;
  config.rounds = 200;
  const auto result = fedsg::run_fedsg(config, shards);
  std::vector<double> window_means;
  for (std::size_t start = 0; start + 20 <= result.trace.size(); start += 20) {
    double sum = 0.0;
    for (std::size_t t = start; t < start + 20; ++t) sum += result.trace[t].global_loss;
    window_means.push_back(sum / 20.0);
  }
  for (std::size_t w = 1; w < window_means.size(); ++w) {
    EXPECT_LE(window_means[w], window_means[w - 1] * 1.01) << "window " << w;
  }
}

TEST(TraceCsv, Columns) {
  fedsg::RoundTrace row;
  row.round = 3;
  row.global_loss = 0.5;
  row.sampled = {1, 2};
  row.bytes_uplink = 10;
  row.bytes_downlink = 10;
  row.elapsed_ms = 1.25;
  const std::vector<fedsg::RoundTrace> trace{row};
  std::ostringstream plain, timed;
  fedsg::write_trace_csv(plain, trace, false);
  fedsg::write_trace_csv(timed, trace, true);
  EXPECT_EQ(plain.str(), "round,global_loss,n_sampled,uplink_bytes,downlink_bytes\n3,0.5,2,10,10\n");
  EXPECT_EQ(timed.str(), "round,global_loss,n_sampled,uplink_bytes,downlink_bytes,elapsed_ms\n3,0.5,2,10,10,1.25\n");
}

}  // namespace
