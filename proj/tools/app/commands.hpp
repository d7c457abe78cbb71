#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "app/run_config.hpp"
#include "fedsg/checkpoint.hpp"

namespace fedsg::app {

// Files inside an experiment directory.
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kCheckpointFile = "checkpoint.bin";
inline constexpr const char* kTraceFile = "trace.csv";
inline constexpr const char* kTimingFile = "timing.csv";
inline constexpr const char* kClientsFile = "clients.json";
inline constexpr const char* kTrainErrorsFile = "train_errors.csv";
inline constexpr const char* kMetricsJsonFile = "metrics.json";
inline constexpr const char* kMetricsCsvFile = "metrics.csv";
inline constexpr const char* kRocFile = "roc.csv";
inline constexpr const char* kPrFile = "pr.csv";
inline constexpr const char* kSweepFile = "sweep.csv";
inline constexpr const char* kBenchFile = "bench.json";

/// Normalized client shards plus where they came from.
struct PreparedTraining {
  std::vector<ClientShard> clients;
  std::string dataset_kind;  // "csv" or "synthetic"
  std::string dataset_id;    // path or synthetic spec string
  std::string dataset_hash;
  std::string feature_hash;
  std::vector<std::string> feature_names;
  std::size_t dropped_remainder = 0;
  std::size_t subsampled_away = 0;
  bool from_cache = false;
};

/// Throws Error{kIoError} naming the path when the data file is missing.
PreparedTraining prepare_training(const RunConfig& config);

struct TrainOutcome {
  FedResult fed;
  PreparedTraining data;
  std::vector<double> train_errors;
};

/// Writes checkpoint.bin, trace.csv, timing.csv, clients.json,
/// train_errors.csv and manifest.json into `out`.
TrainOutcome cmd_train(RunConfig config, const std::filesystem::path& out);

/// Scores for the evaluation set under a trained model.
struct ScoredTest {
  std::vector<double> errors;
  std::vector<bool> attack;
  std::vector<std::size_t> assignment;
  std::vector<TrafficClass> classes;
  DataMatrix normalized;  // d x n, per-client z-scored
};

struct TrainedModel {
  Checkpoint checkpoint;
  std::vector<ClientShard> clients;  // scalers and routing ranges, no features
  std::vector<double> train_errors;
  std::vector<std::size_t> train_error_clients;
};

TrainedModel load_trained_model(const std::filesystem::path& out);
ScoredTest score_test_set(const RunConfig& config, const TrainedModel& model);

struct EvalOutcome {
  MetricsReport metrics;
  double tau = 0.0;
  std::optional<MetricsReport> baseline;
};

/// Point metrics at the configured rho plus ROC/PR curves; writes
/// metrics.json, metrics.csv, roc.csv, pr.csv. With `baseline`, also runs
/// the self-learning SVD baseline and writes baseline_metrics.{json,csv}.
EvalOutcome cmd_eval(const RunConfig& config, const std::filesystem::path& out, bool baseline = false);

struct SweepRow {
  double rho = 0.0;
  MetricsReport metrics;
};

/// Point metrics for each rho of the grid; writes sweep.csv.
std::vector<SweepRow> cmd_sweep(const RunConfig& config, const std::filesystem::path& out,
                                std::span<const double> grid);

/// "1:30" (inclusive integer range), "5,10,18" or a mix of both.
std::vector<double> parse_rho_grid(std::string_view text);

struct BenchReport {
  std::size_t samples = 0;
  double median_us = 0.0;
  double p99_us = 0.0;
  double mean_us = 0.0;
  std::uint64_t checkpoint_bytes = 0;
  std::uint64_t expected_checkpoint_bytes = 0;
  std::uint64_t model_payload_bytes = 0;
};

/// Per-sample scoring latency over config.iters samples after a discarded
/// warm-up pass; writes bench.json.
BenchReport cmd_bench(const RunConfig& config, const std::filesystem::path& out);

/// Reads the resolved config recorded by a previous train run, if any.
std::optional<RunConfig> config_from_manifest(const std::filesystem::path& out);

/// Command-line entry point. Exit codes: 0 success, 1 numerical failure,
/// 2 usage or input error.
int run_cli(int argc, char** argv);

}  // namespace fedsg::app
