#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "fedsg/objective.hpp"

namespace fedsg {

struct FedConfig {
  std::size_t n_clients = 100;
  std::size_t rounds = 200;
  std::size_t local_steps = 5;
  double sample_fraction = 0.2;
  std::size_t k = 3;
  double eta = 0.01;
  std::uint64_t seed = 0;
  bool align_before_average = true;
  std::size_t threads = 1;  // 0 = hardware concurrency

  /// Throws Error{kInvalidArgument} when a count is zero, the fraction is
  /// outside (0, 1], eta is not positive, or fewer than one client would be
  /// sampled per round.
  void validate() const;

  /// ceil(sample_fraction * n_clients)
  std::size_t clients_per_round() const;
};

struct ClientUpdate {
  std::size_t client_id = 0;
  GrassmannPoint u_local;
  GrassmannPoint v_local;
  double local_loss = 0.0;
  std::size_t skipped_steps = 0;  // sub-steps dropped on RankDeficient
};

struct RoundTrace {
  std::size_t round = 0;
  double global_loss = 0.0;
  std::vector<std::size_t> sampled;
  double elapsed_ms = 0.0;
  std::uint64_t bytes_uplink = 0;
  std::uint64_t bytes_downlink = 0;
  bool aggregation_aborted = false;
  std::size_t skipped_steps = 0;
};

/// Bytes for one model transfer: k (d + B) float64 values.
std::uint64_t model_bytes(std::size_t d, std::size_t width, std::size_t k);

/// c alternating Riemannian steps on one shard: U with V fixed, then V at the
/// new U. A step whose retraction is rank deficient is skipped.
ClientUpdate local_update(const DataMatrix& shard, const GrassmannPoint& u0, const GrassmannPoint& v0,
                          std::size_t steps, double eta, std::size_t client_id = 0);

/// Server step: optional Procrustes alignment of each client basis to
/// `previous`, entrywise mean in ascending client-id order, then retraction.
/// Throws Error{kRankDeficient} if a mean collapses; the caller keeps
/// `previous` in that case.
FactorPair aggregate(std::span<const ClientUpdate> updates, const FactorPair& previous, bool align);

/// Seeded standard-Gaussian matrices retracted onto G(d, k) and G(B, k).
FactorPair random_factor_pair(std::size_t d, std::size_t width, std::size_t k, std::uint64_t seed);

using RoundObserver =
    std::function<void(const RoundTrace&, const FactorPair&, std::span<const ClientUpdate>)>;

struct FedResult {
  FactorPair model;
  std::vector<RoundTrace> trace;
};

/// Simulated federated training. Each round samples clients without
/// replacement, runs their local updates (concurrently when config.threads
/// allows), aggregates and broadcasts. global_loss is evaluated on every
/// shard after the broadcast; it costs no communication.
FedResult run_fedsg(const FedConfig& config, std::span<const DataMatrix> shards,
                    const RoundObserver& observer = {});

/// CSV columns: round,global_loss,n_sampled,uplink_bytes,downlink_bytes and,
/// when include_timing is set, elapsed_ms.
void write_trace_csv(std::ostream& out, std::span<const RoundTrace> trace, bool include_timing);

}  // namespace fedsg
