#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "app/commands.hpp"
#include "fedsg/error.hpp"
#include "fedsg/text.hpp"

namespace fedsg::app {

namespace {

struct Flags {
  std::optional<std::string> config;
  std::optional<std::string> data;
  std::optional<std::string> test_data;
  std::optional<std::string> synthetic;
  std::string out;
  std::optional<double> rho;
  std::optional<std::string> rho_mode;
  bool per_client = false;
  std::optional<std::string> slice;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> clients;
  std::optional<std::size_t> rounds;
  std::optional<std::size_t> local_steps;
  std::optional<double> sample_fraction;
  std::optional<std::size_t> rank;
  std::optional<double> eta;
  bool no_align = false;
  std::optional<std::size_t> iters;
  std::optional<std::size_t> threads;
  std::optional<std::string> features;
  std::optional<std::string> label_map;
  std::optional<std::size_t> label_column;
  std::optional<std::string> partition_feature;
  std::optional<std::string> cache;
  bool baseline = false;
  std::string grid = "1:30";
};

void add_common(CLI::App& cmd, Flags& f) {
  cmd.add_option("--config", f.config, "JSON config file");
  cmd.add_option("--out", f.out, "Experiment directory")->required();
  cmd.add_option("--rho", f.rho, "Threshold percentile in [0, 100]");
  cmd.add_option("--rho-mode", f.rho_mode, "percentile | upper-tail");
  cmd.add_flag("--per-client-threshold", f.per_client, "Fit one threshold per client");
  cmd.add_option("--slice", f.slice, "Attack classes kept with normal traffic, e.g. r2l,u2r");
  cmd.add_option("--features", f.features, "Feature list file, one name per line");
  cmd.add_option("--label-map", f.label_map, "Label map file, 'name class' per line");
  cmd.add_option("--label-column", f.label_column, "0-based label column of the CSV");
  cmd.add_option("--partition-feature", f.partition_feature, "Feature used for the non-iid split");
  cmd.add_option("--threads", f.threads, "Worker threads (0 = all cores)");
  cmd.add_option("--synthetic", f.synthetic, "Synthetic data, optional spec 'd=34,clients=20,...'")->expected(0, 1);
}

void add_federation(CLI::App& cmd, Flags& f) {
  cmd.add_option("--seed", f.seed, "Random seed");
  cmd.add_option("--clients", f.clients, "Number of clients N");
  cmd.add_option("--rounds", f.rounds, "Communication rounds T");
  cmd.add_option("--local-steps", f.local_steps, "Local steps per round C");
  cmd.add_option("--sample-fraction", f.sample_fraction, "Fraction of clients per round");
  cmd.add_option("--rank", f.rank, "Subspace rank k");
  cmd.add_option("--eta", f.eta, "Step size");
  cmd.add_flag("--no-align", f.no_align, "Average client bases without Procrustes alignment");
  cmd.add_option("--test-data", f.test_data, "Evaluation CSV recorded for later commands");
  cmd.add_option("--cache", f.cache, "Directory for cached client shards");
}

// Flags override the config file, which overrides the manifest of a
// previous train run, which overrides the defaults.
RunConfig resolve(const Flags& f, bool training, const CLI::App& cmd) {
  RunConfig config;
  if (!training) {
    if (auto recorded = config_from_manifest(f.out)) config = *recorded;
  }
  if (f.config) {
    const RunConfig file = load_config_file(*f.config);
    nlohmann::json j = file.to_json();
    // Only keys present in the file override what came before.
    std::ifstream in(*f.config);
    const nlohmann::json present = nlohmann::json::parse(in);
    nlohmann::json overlay = nlohmann::json::object();
    for (const auto& [key, value] : present.items()) overlay[key] = j[key];
    config.merge_json(overlay);
  }
  if (f.seed) config.fed.seed = *f.seed;
  if (f.clients) config.fed.n_clients = *f.clients;
  if (f.rounds) config.fed.rounds = *f.rounds;
  if (f.local_steps) config.fed.local_steps = *f.local_steps;
  if (f.sample_fraction) config.fed.sample_fraction = *f.sample_fraction;
  if (f.rank) config.fed.k = *f.rank;
  if (f.eta) config.fed.eta = *f.eta;
  if (f.no_align) config.fed.align_before_average = false;
  if (f.threads) config.fed.threads = *f.threads;
  if (f.data) {
    if (training) {
      config.data = *f.data;
    } else {
      config.test_data = *f.data;
    }
    config.synthetic.reset();
  }
  if (f.test_data) config.test_data = *f.test_data;
  if (cmd.count("--synthetic") > 0) {
    config.synthetic = SynthSpec::parse(f.synthetic.value_or(""));
    config.data.reset();
  }
  if (config.synthetic && f.clients) config.synthetic->clients = *f.clients;
  if (f.features) config.feature_list = *f.features;
  if (f.label_map) config.label_map = *f.label_map;
  if (f.label_column) config.label_column = *f.label_column;
  if (f.partition_feature) config.partition_feature = *f.partition_feature;
  if (f.rho) config.rho = *f.rho;
  if (f.rho_mode) config.rho_mode = parse_rho_mode(*f.rho_mode);
  if (f.per_client) config.per_client_threshold = true;
  if (f.slice) config.slice = *f.slice;
  if (f.iters) config.iters = *f.iters;
  if (f.cache) config.cache_dir = *f.cache;
  return config;
}

void print_metrics(const std::string& name, const MetricsReport& m, bool with_auc = true) {
  std::cout << name << ": acc=" << format_real(m.acc) << " pre=" << format_real(m.pre) << " tpr=" << format_real(m.tpr)
            << " fpr=" << format_real(m.fpr) << " f1=" << format_real(m.f1);
  if (with_auc) std::cout << " auc=" << format_real(m.auc);
  std::cout << (m.degenerate ? " (degenerate)" : "") << '\n';
}

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::kRankDeficient:
    case ErrorCode::kConvergenceFailure:
    case ErrorCode::kInfeasiblePoint:
      return 1;
    default:
      return 2;
  }
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Federated Grassmann subspace learning for traffic anomaly detection"};
  app.require_subcommand(1);
  Flags f;

  CLI::App* train = app.add_subcommand("train", "Train a global subspace and write the experiment directory");
  add_common(*train, f);
  add_federation(*train, f);
  train->add_option("--data", f.data, "Training CSV");

  CLI::App* eval = app.add_subcommand("eval", "Score an evaluation set and write metrics and curves");
  add_common(*eval, f);
  eval->add_option("--data", f.data, "Evaluation CSV");
  eval->add_flag("--baseline", f.baseline, "Also run the per-client SVD baseline");

  CLI::App* sweep = app.add_subcommand("sweep", "Point metrics over a grid of rho values");
  add_common(*sweep, f);
  sweep->add_option("--data", f.data, "Evaluation CSV");
  sweep->add_option("--grid", f.grid, "rho grid, e.g. 1:30 or 5,10,18")->capture_default_str();

  CLI::App* bench = app.add_subcommand("bench", "Per-sample scoring latency and checkpoint size");
  add_common(*bench, f);
  bench->add_option("--data", f.data, "Evaluation CSV");
  bench->add_option("--iters", f.iters, "Timed samples");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (train->parsed()) {
      const RunConfig config = resolve(f, true, *train);
      const TrainOutcome outcome = cmd_train(config, f.out);
      const auto& trace = outcome.fed.trace;
      std::cout << "trained " << trace.size() << " rounds on " << outcome.data.clients.size() << " clients";
      if (!trace.empty()) std::cout << ", final loss " << format_real(trace.back().global_loss);
      std::cout << "\nwrote " << f.out << '\n';
    } else if (eval->parsed()) {
      const RunConfig config = resolve(f, false, *eval);
      const EvalOutcome outcome = cmd_eval(config, f.out, f.baseline);
      if (!config.per_client_threshold) std::cout << "tau=" << format_real(outcome.tau) << '\n';
      print_metrics("fedsg", outcome.metrics);
      if (outcome.baseline) print_metrics("self-svd", *outcome.baseline);
    } else if (sweep->parsed()) {
      const RunConfig config = resolve(f, false, *sweep);
      const std::vector<double> grid = parse_rho_grid(f.grid);
      for (const SweepRow& row : cmd_sweep(config, f.out, grid)) print_metrics("rho=" + format_real(row.rho), row.metrics, false);
    } else if (bench->parsed()) {
      const RunConfig config = resolve(f, false, *bench);
      const BenchReport r = cmd_bench(config, f.out);
      std::cout << "samples=" << r.samples << " median_us=" << format_real(r.median_us)
                << " p99_us=" << format_real(r.p99_us) << " checkpoint_bytes=" << r.checkpoint_bytes
                << " expected=" << r.expected_checkpoint_bytes << '\n';
    }
  } catch (const Error& e) {
    std::cerr << "fedsg: " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "fedsg: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "fedsg: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace fedsg::app
