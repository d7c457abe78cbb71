#include "app/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include "fedsg/error.hpp"
#include "fedsg/hash.hpp"
#include "fedsg/text.hpp"

namespace fedsg::app {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

std::ofstream open_out(const fs::path& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  return out;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParseError, path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

std::size_t effective_threads(std::size_t requested) {
  std::size_t threads = requested == 0 ? std::max(1u, std::thread::hardware_concurrency()) : requested;
  if (const char* cap = std::getenv("FEDSG_THREADS")) {
    char* end = nullptr;
    const unsigned long value = std::strtoul(cap, &end, 10);
    if (end != cap && value > 0) threads = std::min<std::size_t>(threads, value);
  }
  return threads;
}

std::string join_lines(std::span<const std::string> names) {
  std::string out;
  for (const std::string& n : names) out += n + '\n';
  return out;
}

json metrics_json(const MetricsReport& report) {
  json j;
  for (const auto& [key, value] : metrics_table(report)) j[key] = value;
  return j;
}

void write_metrics_files(const fs::path& out, const std::string& stem, const MetricsReport& report,
                         const json& context) {
  json j = metrics_json(report);
  for (const auto& [key, value] : context.items()) j[key] = value;
  write_json(out / (stem + ".json"), j);
  auto csv = open_out(out / (stem + ".csv"));
  write_metrics_csv(csv, report);
}

RunConfig finalized(RunConfig config) {
  if (config.synthetic) config.fed.n_clients = config.synthetic->clients;
  return config;
}

json client_json(const ClientShard& c) {
  json j;
  j["id"] = c.client_id;
  j["range_lo"] = c.range_lo;
  j["range_hi"] = c.range_hi;
  j["mean"] = std::vector<double>(c.scaler.mean.data(), c.scaler.mean.data() + c.scaler.mean.size());
  j["std"] = std::vector<double>(c.scaler.std.data(), c.scaler.std.data() + c.scaler.std.size());
  j["degenerate"] = c.scaler.degenerate;
  return j;
}

ClientShard client_from_json(const json& j) {
  ClientShard c;
  c.client_id = j.at("id").get<std::size_t>();
  c.range_lo = j.at("range_lo").get<double>();
  c.range_hi = j.at("range_hi").get<double>();
  const auto mean = j.at("mean").get<std::vector<double>>();
  const auto std = j.at("std").get<std::vector<double>>();
  c.scaler.mean = Eigen::Map<const Vector>(mean.data(), static_cast<Eigen::Index>(mean.size()));
  c.scaler.std = Eigen::Map<const Vector>(std.data(), static_cast<Eigen::Index>(std.size()));
  c.scaler.degenerate = j.at("degenerate").get<std::vector<bool>>();
  return c;
}

// Per-sample decision scores: raw errors against a global tau, or errors
// divided by the owning client's tau (cut at 1) in per-client mode.
struct Decision {
  std::vector<double> scores;
  double cut = 0.0;
};

Decision decide(const RunConfig& config, const TrainedModel& model, const ScoredTest& test, double rho) {
  Decision d;
  if (!config.per_client_threshold) {
    d.cut = fit_threshold(model.train_errors, rho, config.rho_mode);
    d.scores = test.errors;
    return d;
  }
  std::vector<std::vector<double>> per_client(model.clients.size());
  for (std::size_t i = 0; i < model.train_errors.size(); ++i) {
    per_client.at(model.train_error_clients[i]).push_back(model.train_errors[i]);
  }
  std::vector<double> taus(per_client.size(), 0.0);
  for (std::size_t c = 0; c < per_client.size(); ++c) {
    if (!per_client[c].empty()) taus[c] = fit_threshold(per_client[c], rho, config.rho_mode);
  }
  d.cut = 1.0;
  d.scores.reserve(test.errors.size());
  for (std::size_t i = 0; i < test.errors.size(); ++i) {
    const double tau = taus[test.assignment[i]];
    const double e = test.errors[i];
    d.scores.push_back(tau > 0.0 ? e / tau : (e > 0.0 ? std::numeric_limits<double>::max() : 0.0));
  }
  return d;
}

json load_manifest(const fs::path& out) {
  const fs::path path = out / kManifestFile;
  if (!fs::exists(path)) return json::object();
  return read_json(path);
}

void update_manifest(const fs::path& out, const std::string& section, const json& value) {
  json manifest = load_manifest(out);
  manifest[section] = value;
  write_json(out / kManifestFile, manifest);
}

}  // namespace

PreparedTraining prepare_training(const RunConfig& raw) {
  const RunConfig config = finalized(raw);
  PreparedTraining prepared;

  if (config.synthetic) {
    const SyntheticData synth = generate_synthetic(*config.synthetic);
    prepared.clients = synth.train;
    prepared.dataset_kind = "synthetic";
    prepared.dataset_id = config.synthetic->to_string();
    prepared.dataset_hash = sha256_hex(prepared.dataset_id);
    for (std::size_t f = 0; f < config.synthetic->d; ++f) prepared.feature_names.push_back("x" + std::to_string(f));
    prepared.feature_hash = sha256_hex(join_lines(prepared.feature_names));
    return prepared;
  }

  if (!config.data) throw Error(ErrorCode::kInvalidArgument, "no training data: pass --data or --synthetic");
  if (!fs::exists(*config.data)) throw Error(ErrorCode::kIoError, "data path does not exist: " + config.data->string());

  prepared.feature_names = config.features();
  prepared.feature_hash = sha256_hex(join_lines(prepared.feature_names));
  prepared.dataset_kind = "csv";
  prepared.dataset_id = config.data->string();
  prepared.dataset_hash = sha256_file(*config.data);
  const LabelMap labels = config.labels();

  std::optional<fs::path> cache_file;
  if (config.cache_dir) {
    std::string key = prepared.feature_hash + "|" + config.partition_feature + "|" +
                      std::to_string(config.fed.n_clients) + "|" +
                      (config.label_column ? std::to_string(*config.label_column) : "auto");
    for (const auto& [name, cls] : labels.entries()) key += "|" + name + "=" + std::string(to_string(cls));
    cache_file = shard_cache_path(*config.cache_dir, prepared.dataset_hash, sha256_hex(key));
    if (fs::exists(*cache_file)) {
      std::ifstream in(*cache_file, std::ios::binary);
      prepared.clients = read_shards(in);
      prepared.from_cache = true;
      return prepared;
    }
  }

  const Dataset dataset = load_dataset(*config.data, prepared.feature_names, labels, config.csv_options());
  PartitionOptions options;
  options.seed = config.fed.seed;
  Partition partition = partition_non_iid(dataset, config.fed.n_clients, config.partition_feature, options);
  prepared.dropped_remainder = partition.dropped_remainder;
  prepared.subsampled_away = partition.subsampled_away;
  for (ClientShard& shard : partition.shards) prepared.clients.push_back(zscore_fit_apply(std::move(shard)));

  if (cache_file) {
    fs::create_directories(cache_file->parent_path());
    auto out = open_out(*cache_file, true);
    write_shards(out, prepared.clients);
  }
  return prepared;
}

TrainOutcome cmd_train(RunConfig config, const fs::path& out) {
  config = finalized(std::move(config));
  const std::string started = utc_now();
  fs::create_directories(out);

  TrainOutcome outcome{FedResult{random_factor_pair(2, 2, 1, 0), {}}, prepare_training(config), {}};
  if (outcome.data.dropped_remainder > 0) {
    std::cerr << "fedsg: dropped " << outcome.data.dropped_remainder
              << " trailing benign records that did not fill a client shard\n";
  }

  std::vector<DataMatrix> shards;
  shards.reserve(outcome.data.clients.size());
  for (const ClientShard& c : outcome.data.clients) shards.push_back(c.features);

  FedConfig fed = config.fed;
  fed.threads = effective_threads(fed.threads);
  outcome.fed = run_fedsg(fed, shards);

  save_checkpoint(out / kCheckpointFile, outcome.fed.model, fed.rounds);
  {
    auto trace = open_out(out / kTraceFile);
    write_trace_csv(trace, outcome.fed.trace, false);
    auto timing = open_out(out / kTimingFile);
    timing << "round,elapsed_ms\n";
    for (const RoundTrace& t : outcome.fed.trace) timing << t.round << ',' << format_real(t.elapsed_ms) << '\n';
  }

  json clients = json::array();
  auto errors_csv = open_out(out / kTrainErrorsFile);
  errors_csv << "client_id,error\n";
  for (const ClientShard& c : outcome.data.clients) {
    clients.push_back(client_json(c));
    for (double e : score_all(outcome.fed.model.u, c.features)) {
      outcome.train_errors.push_back(e);
      errors_csv << c.client_id << ',' << format_real(e) << '\n';
    }
  }
  write_json(out / kClientsFile, clients);

  json manifest;
  manifest["tool"] = "fedsg";
  manifest["config"] = config.to_json();
  manifest["dataset"] = {{"kind", outcome.data.dataset_kind},
                         {"id", outcome.data.dataset_id},
                         {"sha256", outcome.data.dataset_hash},
                         {"dropped_remainder", outcome.data.dropped_remainder},
                         {"subsampled_away", outcome.data.subsampled_away},
                         {"from_cache", outcome.data.from_cache}};
  manifest["features"] = {{"names", outcome.data.feature_names}, {"sha256", outcome.data.feature_hash}};
  manifest["rho"] = config.rho;
  manifest["out_dir"] = out.string();
  manifest["model"] = {{"d", outcome.fed.model.u.n()},
                       {"width", outcome.fed.model.v.n()},
                       {"k", outcome.fed.model.u.k()},
                       {"checkpoint_bytes", fs::file_size(out / kCheckpointFile)}};
  manifest["timestamps"] = {{"train_started", started}, {"train_finished", utc_now()}};
  manifest["versions"] = {{"fedsg", kVersion},
                          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                        "." + std::to_string(EIGEN_MINOR_VERSION)},
                          {"compiler", __VERSION__}};
  manifest["artifacts"] = {kCheckpointFile, kTraceFile, kTimingFile, kClientsFile, kTrainErrorsFile};
  write_json(out / kManifestFile, manifest);
  return outcome;
}

std::optional<RunConfig> config_from_manifest(const fs::path& out) {
  const json manifest = load_manifest(out);
  if (!manifest.contains("config")) return std::nullopt;
  RunConfig config;
  config.merge_json(manifest["config"]);
  return config;
}

TrainedModel load_trained_model(const fs::path& out) {
  const fs::path checkpoint = out / kCheckpointFile;
  if (!fs::exists(checkpoint)) throw Error(ErrorCode::kIoError, "no checkpoint at " + checkpoint.string());
  TrainedModel model{load_checkpoint(checkpoint), {}, {}, {}};
  for (const json& c : read_json(out / kClientsFile)) model.clients.push_back(client_from_json(c));

  std::ifstream in(out / kTrainErrorsFile);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + (out / kTrainErrorsFile).string());
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw Error(ErrorCode::kParseError, "malformed training error line '" + line + "'");
    model.train_error_clients.push_back(std::stoul(line.substr(0, comma)));
    model.train_errors.push_back(std::stod(line.substr(comma + 1)));
  }
  if (model.train_errors.empty()) throw Error(ErrorCode::kEmptyInput, "no stored training errors");
  return model;
}

ScoredTest score_test_set(const RunConfig& raw, const TrainedModel& model) {
  const RunConfig config = finalized(raw);
  TestSet test;
  if (config.synthetic) {
    test = generate_synthetic(*config.synthetic).test;
  } else {
    if (!config.test_data) throw Error(ErrorCode::kInvalidArgument, "no evaluation data: pass --data");
    if (!fs::exists(*config.test_data)) {
      throw Error(ErrorCode::kIoError, "data path does not exist: " + config.test_data->string());
    }
    const Dataset dataset = load_dataset(*config.test_data, config.features(), config.labels(), config.csv_options());
    test = make_test_set(dataset, config.partition_feature);
  }
  if (config.slice) {
    const std::vector<TrafficClass> attacks = parse_slice(*config.slice);
    test = filter_slice(test, attacks);
  }
  const GrassmannPoint& u = model.checkpoint.model.u;
  if (test.features.rows() != u.n()) {
    throw Error(ErrorCode::kDimensionMismatch, "checkpoint has d = " + std::to_string(u.n()) +
                                                   " but the evaluation data has " +
                                                   std::to_string(test.features.rows()) + " features");
  }
  ScoredTest scored;
  scored.assignment = route_to_clients(test, model.clients);
  scored.normalized = normalize_routed(test, model.clients, scored.assignment);
  scored.errors = score_all(u, scored.normalized);
  scored.attack = test.attack_labels();
  scored.classes = test.classes;
  return scored;
}

EvalOutcome cmd_eval(const RunConfig& config, const fs::path& out, bool baseline) {
  const TrainedModel model = load_trained_model(out);
  const ScoredTest test = score_test_set(config, model);
  const Decision decision = decide(config, model, test, config.rho);

  EvalOutcome outcome;
  outcome.tau = config.per_client_threshold ? std::nan("") : decision.cut;
  outcome.metrics = evaluate(decision.scores, test.attack, decision.cut);
  const Curves curves = roc_and_pr(decision.scores, test.attack);
  outcome.metrics.roc = curves.roc;
  outcome.metrics.pr = curves.pr;
  outcome.metrics.auc = curves.auc;

  json context = {{"rho", config.rho},
                  {"rho_mode", std::string(to_string(config.rho_mode))},
                  {"per_client_threshold", config.per_client_threshold},
                  {"samples", test.errors.size()},
                  {"slice", config.slice ? json(*config.slice) : json(nullptr)}};
  if (!config.per_client_threshold) context["tau"] = decision.cut;
  write_metrics_files(out, "metrics", outcome.metrics, context);
  {
    auto roc = open_out(out / kRocFile);
    write_curve_csv(roc, outcome.metrics.roc, "fpr", "tpr");
    auto pr = open_out(out / kPrFile);
    write_curve_csv(pr, outcome.metrics.pr, "recall", "precision");
  }

  if (baseline) {
    const PreparedTraining training = prepare_training(config);
    std::vector<LocalDetectionTask> tasks(training.clients.size());
    std::vector<std::vector<Eigen::Index>> columns(training.clients.size());
    for (std::size_t i = 0; i < test.assignment.size(); ++i) {
      columns.at(test.assignment[i]).push_back(static_cast<Eigen::Index>(i));
    }
    for (std::size_t c = 0; c < tasks.size(); ++c) {
      tasks[c].train = training.clients[c].features;
      tasks[c].test.resize(test.normalized.rows(), static_cast<Eigen::Index>(columns[c].size()));
      for (std::size_t j = 0; j < columns[c].size(); ++j) {
        tasks[c].test.col(static_cast<Eigen::Index>(j)) = test.normalized.col(columns[c][j]);
        tasks[c].labels.push_back(test.attack[static_cast<std::size_t>(columns[c][j])]);
      }
    }
    outcome.baseline = self_svd_baseline(tasks, finalized(config).fed.k, config.rho, config.rho_mode);
    write_metrics_files(out, "baseline_metrics", *outcome.baseline, context);
  }

  context["metrics"] = metrics_json(outcome.metrics);
  if (outcome.baseline) context["baseline"] = metrics_json(*outcome.baseline);
  context["finished"] = utc_now();
  update_manifest(out, "eval", context);
  return outcome;
}

std::vector<double> parse_rho_grid(std::string_view text) {
  std::vector<double> grid;
  std::stringstream items{std::string(text)};
  std::string item;
  auto number = [&](const std::string& s) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw Error(ErrorCode::kInvalidArgument, "bad rho grid entry '" + s + "'");
    }
  };
  while (std::getline(items, item, ',')) {
    if (item.empty()) continue;
    if (const auto colon = item.find(':'); colon != std::string::npos) {
      const double lo = number(item.substr(0, colon));
      const double hi = number(item.substr(colon + 1));
      for (double r = lo; r <= hi + 1e-9; r += 1.0) grid.push_back(r);
    } else {
      grid.push_back(number(item));
    }
  }
  if (grid.empty()) throw Error(ErrorCode::kInvalidArgument, "empty rho grid");
  for (double r : grid) {
    if (!(r >= 0.0 && r <= 100.0)) throw Error(ErrorCode::kInvalidArgument, "rho must lie in [0, 100]");
  }
  return grid;
}

std::vector<SweepRow> cmd_sweep(const RunConfig& config, const fs::path& out, std::span<const double> grid) {
  const TrainedModel model = load_trained_model(out);
  const ScoredTest test = score_test_set(config, model);
  std::vector<SweepRow> rows;
  auto csv = open_out(out / kSweepFile);
  csv << "rho,acc,pre,tpr,fpr,f1\n";
  for (double rho : grid) {
    const Decision decision = decide(config, model, test, rho);
    SweepRow row{rho, evaluate(decision.scores, test.attack, decision.cut)};
    csv << format_real(rho) << ',' << format_real(row.metrics.acc) << ',' << format_real(row.metrics.pre) << ','
        << format_real(row.metrics.tpr) << ',' << format_real(row.metrics.fpr) << ',' << format_real(row.metrics.f1)
        << '\n';
    rows.push_back(std::move(row));
  }
  update_manifest(out, "sweep", {{"grid", std::vector<double>(grid.begin(), grid.end())},
                                 {"slice", config.slice ? json(*config.slice) : json(nullptr)},
                                 {"finished", utc_now()}});
  return rows;
}

BenchReport cmd_bench(const RunConfig& config, const fs::path& out) {
  const TrainedModel model = load_trained_model(out);
  const ScoredTest test = score_test_set(config, model);
  if (test.normalized.cols() == 0) throw Error(ErrorCode::kEmptyInput, "no samples to benchmark");
  const GrassmannPoint& u = model.checkpoint.model.u;
  const auto n = static_cast<std::size_t>(test.normalized.cols());
  std::vector<Vector> samples;
  samples.reserve(n);
  for (std::size_t j = 0; j < n; ++j) samples.emplace_back(test.normalized.col(static_cast<Eigen::Index>(j)));

  const std::size_t iters = std::max<std::size_t>(1, config.iters);
  volatile double sink = 0.0;
  for (std::size_t i = 0; i < std::min<std::size_t>(iters, 1000); ++i) sink = sink + score(u, samples[i % n]);

  std::vector<double> micros(iters);
  for (std::size_t i = 0; i < iters; ++i) {
    const auto start = std::chrono::steady_clock::now();
    const double e = score(u, samples[i % n]);
    const auto stop = std::chrono::steady_clock::now();
    sink = sink + e;
    micros[i] = std::chrono::duration<double, std::micro>(stop - start).count();
  }
  BenchReport report;
  report.samples = iters;
  report.mean_us = std::accumulate(micros.begin(), micros.end(), 0.0) / static_cast<double>(iters);
  std::sort(micros.begin(), micros.end());
  report.median_us = micros[(iters - 1) / 2];
  report.p99_us = micros[std::min(iters - 1, static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(iters))) - 1)];
  const auto d = static_cast<std::size_t>(model.checkpoint.model.u.n());
  const auto width = static_cast<std::size_t>(model.checkpoint.model.v.n());
  const auto k = static_cast<std::size_t>(model.checkpoint.model.u.k());
  report.checkpoint_bytes = fs::file_size(out / kCheckpointFile);
  report.expected_checkpoint_bytes = checkpoint_size(d, width, k);
  report.model_payload_bytes = model_bytes(d, width, k);

  json j = {{"samples", report.samples},
            {"median_us", report.median_us},
            {"p99_us", report.p99_us},
            {"mean_us", report.mean_us},
            {"checkpoint_bytes", report.checkpoint_bytes},
            {"expected_checkpoint_bytes", report.expected_checkpoint_bytes},
            {"payload_bytes", report.model_payload_bytes},
            {"header_bytes", kCheckpointHeaderBytes},
            {"inference_model_bytes", d * k * sizeof(double)}};
  write_json(out / kBenchFile, j);
  j["finished"] = utc_now();
  update_manifest(out, "bench", j);
  return report;
}

}  // namespace fedsg::app
