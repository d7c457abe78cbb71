#include "fedsg/federation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <string>

#include "fedsg/error.hpp"
#include "fedsg/parallel.hpp"
#include "fedsg/text.hpp"

namespace fedsg {

void FedConfig::validate() const {
  if (n_clients == 0 || rounds == 0 || k == 0) {
    throw Error(ErrorCode::kInvalidArgument, "clients, rounds and rank must be positive");
  }
  if (!(sample_fraction > 0.0 && sample_fraction <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "sample fraction must lie in (0, 1]");
  }
  if (sample_fraction * static_cast<double>(n_clients) < 1.0) {
    throw Error(ErrorCode::kInvalidArgument, "sample fraction selects fewer than one client per round");
  }
  if (!(eta > 0.0) || !std::isfinite(eta)) {
    throw Error(ErrorCode::kInvalidArgument, "step size must be positive");
  }
}

std::size_t FedConfig::clients_per_round() const {
  const auto m = static_cast<std::size_t>(std::ceil(sample_fraction * static_cast<double>(n_clients) - 1e-9));
  return std::clamp<std::size_t>(m, 1, n_clients);
}

std::uint64_t model_bytes(std::size_t d, std::size_t width, std::size_t k) {
  return static_cast<std::uint64_t>(k) * (d + width) * sizeof(double);
}

ClientUpdate local_update(const DataMatrix& shard, const GrassmannPoint& u0, const GrassmannPoint& v0,
                          std::size_t steps, double eta, std::size_t client_id) {
  GrassmannPoint u = u0;
  GrassmannPoint v = v0;
  std::size_t skipped = 0;
  const std::span<const DataMatrix> data(&shard, 1);
  for (std::size_t c = 0; c < steps; ++c) {
    try {
      u = riemannian_step(u, grad_u(u, v, data), eta);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kRankDeficient) throw;
      ++skipped;
    }
    try {
      v = riemannian_step(v, grad_v(u, v, data), eta);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kRankDeficient) throw;
      ++skipped;
    }
  }
  const double local = shard_loss(u.basis(), v.basis(), shard);
  return ClientUpdate{client_id, std::move(u), std::move(v), local, skipped};
}

FactorPair aggregate(std::span<const ClientUpdate> updates, const FactorPair& previous, bool align) {
  if (updates.empty()) {
    throw Error(ErrorCode::kEmptyInput, "aggregate called without client updates");
  }
  std::vector<std::size_t> order(updates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return updates[a].client_id < updates[b].client_id; });

  const DataMatrix& prev_u = previous.u.basis();
  const DataMatrix& prev_v = previous.v.basis();
  DataMatrix sum_u = DataMatrix::Zero(prev_u.rows(), prev_u.cols());
  DataMatrix sum_v = DataMatrix::Zero(prev_v.rows(), prev_v.cols());
  for (std::size_t idx : order) {
    const ClientUpdate& up = updates[idx];
    if (up.u_local.n() != prev_u.rows() || up.u_local.k() != prev_u.cols() ||
        up.v_local.n() != prev_v.rows() || up.v_local.k() != prev_v.cols()) {
      throw Error(ErrorCode::kShapeMismatch, "client " + std::to_string(up.client_id) + " sent mis-shaped factors");
    }
    if (align) {
      sum_u.noalias() += up.u_local.basis() * procrustes_rotation(up.u_local.basis(), prev_u);
      sum_v.noalias() += up.v_local.basis() * procrustes_rotation(up.v_local.basis(), prev_v);
    } else {
      sum_u += up.u_local.basis();
      sum_v += up.v_local.basis();
    }
  }
  const double inv = 1.0 / static_cast<double>(updates.size());
  return FactorPair(retract(sum_u * inv), retract(sum_v * inv));
}

FactorPair random_factor_pair(std::size_t d, std::size_t width, std::size_t k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw = [&](std::size_t rows) {
    DataMatrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(k));
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = normal(rng);
    return m;
  };
  DataMatrix u = draw(d);
  DataMatrix v = draw(width);
  return FactorPair(retract(u), retract(v));
}

FedResult run_fedsg(const FedConfig& config, std::span<const DataMatrix> shards, const RoundObserver& observer) {
  config.validate();
  if (shards.empty()) {
    throw Error(ErrorCode::kEmptyInput, "run_fedsg needs at least one client shard");
  }
  if (shards.size() != config.n_clients) {
    throw Error(ErrorCode::kInvalidArgument, "config expects " + std::to_string(config.n_clients) +
                                                 " clients but " + std::to_string(shards.size()) +
                                                 " shards were supplied");
  }
  const Eigen::Index d = shards.front().rows();
  const Eigen::Index width = shards.front().cols();
  for (std::size_t i = 0; i < shards.size(); ++i) {
    if (shards[i].rows() != d || shards[i].cols() != width) {
      throw Error(ErrorCode::kShapeMismatch, "shard " + std::to_string(i) + " is " +
                                                 std::to_string(shards[i].rows()) + "x" +
                                                 std::to_string(shards[i].cols()) + ", expected " +
                                                 std::to_string(d) + "x" + std::to_string(width));
    }
    require_valid(shards[i], "client shard");
  }
  if (static_cast<Eigen::Index>(config.k) >= std::min(d, width)) {
    throw Error(ErrorCode::kInvalidArgument, "rank must be below both the feature count and the shard width");
  }

  std::mt19937_64 rng(config.seed);
  FactorPair global = random_factor_pair(static_cast<std::size_t>(d), static_cast<std::size_t>(width), config.k, rng());

  const std::size_t per_round = config.clients_per_round();
  const std::uint64_t transfer = model_bytes(static_cast<std::size_t>(d), static_cast<std::size_t>(width), config.k);
  std::vector<std::size_t> pool(shards.size());
  std::vector<double> shard_losses(shards.size());

  FedResult result{global, {}};
  result.trace.reserve(config.rounds);

  for (std::size_t round = 0; round < config.rounds; ++round) {
    const auto start = std::chrono::steady_clock::now();

    // Partial Fisher-Yates draw without replacement.
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    for (std::size_t i = 0; i < per_round; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
    }
    std::vector<std::size_t> sampled(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(per_round));
    std::sort(sampled.begin(), sampled.end());

    std::vector<std::optional<ClientUpdate>> slots(per_round);
    parallel_for(per_round, config.threads, [&](std::size_t i) {
      const std::size_t id = sampled[i];
      slots[i] = local_update(shards[id], global.u, global.v, config.local_steps, config.eta, id);
    });
    std::vector<ClientUpdate> updates;
    updates.reserve(per_round);
    std::size_t skipped = 0;
    for (auto& slot : slots) {
      skipped += slot->skipped_steps;
      updates.push_back(std::move(*slot));
    }

    bool aborted = false;
    try {
      global = aggregate(updates, global, config.align_before_average);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kRankDeficient) throw;
      aborted = true;
    }

    parallel_for(shards.size(), config.threads, [&](std::size_t i) {
      shard_losses[i] = shard_loss(global.u.basis(), global.v.basis(), shards[i]);
    });
    double total = 0.0;
    for (double l : shard_losses) total += l;

    RoundTrace entry;
    entry.round = round;
    entry.global_loss = total;
    entry.sampled = std::move(sampled);
    entry.bytes_uplink = transfer * per_round;
    entry.bytes_downlink = transfer * per_round;
    entry.aggregation_aborted = aborted;
    entry.skipped_steps = skipped;
    entry.elapsed_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    if (observer) observer(entry, global, updates);
    result.trace.push_back(std::move(entry));
  }
  result.model = std::move(global);
  return result;
}

void write_trace_csv(std::ostream& out, std::span<const RoundTrace> trace, bool include_timing) {
  out << "round,global_loss,n_sampled,uplink_bytes,downlink_bytes";
  if (include_timing) out << ",elapsed_ms";
  out << '\n';
  for (const RoundTrace& t : trace) {
    out << t.round << ',' << format_real(t.global_loss) << ',' << t.sampled.size() << ',' << t.bytes_uplink << ','
        << t.bytes_downlink;
    if (include_timing) out << ',' << format_real(t.elapsed_ms);
    out << '\n';
  }
}

}  // namespace fedsg
