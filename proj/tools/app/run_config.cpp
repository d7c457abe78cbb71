#include "app/run_config.hpp"

#include <fstream>
#include <set>

#include "fedsg/error.hpp"

namespace fedsg::app {

RunConfig::RunConfig() {
  fed.threads = 0;
}

std::string_view to_string(RhoMode mode) {
  return mode == RhoMode::kPercentile ? "percentile" : "upper-tail";
}

RhoMode parse_rho_mode(std::string_view text) {
  if (text == "percentile") return RhoMode::kPercentile;
  if (text == "upper-tail") return RhoMode::kUpperTail;
  throw Error(ErrorCode::kInvalidArgument, "rho mode must be 'percentile' or 'upper-tail'");
}

void RunConfig::merge_json(const nlohmann::json& j) {
  static const std::set<std::string> known = {
      "clients", "rounds", "local_steps", "sample_fraction", "rank", "eta", "seed", "align", "threads",
      "data", "test_data", "synthetic", "features", "label_map", "label_column", "partition_feature",
      "rho", "rho_mode", "per_client_threshold", "slice", "iters", "cache_dir"};
  if (!j.is_object()) throw Error(ErrorCode::kInvalidArgument, "config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw Error(ErrorCode::kInvalidArgument, "unknown config key '" + key + "'");
  }
  try {
    if (j.contains("clients")) fed.n_clients = j["clients"].get<std::size_t>();
    if (j.contains("rounds")) fed.rounds = j["rounds"].get<std::size_t>();
    if (j.contains("local_steps")) fed.local_steps = j["local_steps"].get<std::size_t>();
    if (j.contains("sample_fraction")) fed.sample_fraction = j["sample_fraction"].get<double>();
    if (j.contains("rank")) fed.k = j["rank"].get<std::size_t>();
    if (j.contains("eta")) fed.eta = j["eta"].get<double>();
    if (j.contains("seed")) fed.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("align")) fed.align_before_average = j["align"].get<bool>();
    if (j.contains("threads")) fed.threads = j["threads"].get<std::size_t>();
    if (j.contains("data") && !j["data"].is_null()) data = j["data"].get<std::string>();
    if (j.contains("test_data") && !j["test_data"].is_null()) test_data = j["test_data"].get<std::string>();
    if (j.contains("synthetic") && !j["synthetic"].is_null()) synthetic = SynthSpec::parse(j["synthetic"].get<std::string>());
    if (j.contains("features") && !j["features"].is_null()) feature_list = j["features"].get<std::string>();
    if (j.contains("label_map") && !j["label_map"].is_null()) label_map = j["label_map"].get<std::string>();
    if (j.contains("label_column") && !j["label_column"].is_null()) label_column = j["label_column"].get<std::size_t>();
    if (j.contains("partition_feature")) partition_feature = j["partition_feature"].get<std::string>();
    if (j.contains("rho")) rho = j["rho"].get<double>();
    if (j.contains("rho_mode")) rho_mode = parse_rho_mode(j["rho_mode"].get<std::string>());
    if (j.contains("per_client_threshold")) per_client_threshold = j["per_client_threshold"].get<bool>();
    if (j.contains("slice") && !j["slice"].is_null()) slice = j["slice"].get<std::string>();
    if (j.contains("iters")) iters = j["iters"].get<std::size_t>();
    if (j.contains("cache_dir") && !j["cache_dir"].is_null()) cache_dir = j["cache_dir"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("bad config value: ") + e.what());
  }
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["clients"] = fed.n_clients;
  j["rounds"] = fed.rounds;
  j["local_steps"] = fed.local_steps;
  j["sample_fraction"] = fed.sample_fraction;
  j["rank"] = fed.k;
  j["eta"] = fed.eta;
  j["seed"] = fed.seed;
  j["align"] = fed.align_before_average;
  j["threads"] = fed.threads;
  j["data"] = data ? nlohmann::json(data->string()) : nlohmann::json(nullptr);
  j["test_data"] = test_data ? nlohmann::json(test_data->string()) : nlohmann::json(nullptr);
  j["synthetic"] = synthetic ? nlohmann::json(synthetic->to_string()) : nlohmann::json(nullptr);
  j["features"] = feature_list ? nlohmann::json(feature_list->string()) : nlohmann::json(nullptr);
  j["label_map"] = label_map ? nlohmann::json(label_map->string()) : nlohmann::json(nullptr);
  j["label_column"] = label_column ? nlohmann::json(*label_column) : nlohmann::json(nullptr);
  j["partition_feature"] = partition_feature;
  j["rho"] = rho;
  j["rho_mode"] = std::string(to_string(rho_mode));
  j["per_client_threshold"] = per_client_threshold;
  j["slice"] = slice ? nlohmann::json(*slice) : nlohmann::json(nullptr);
  j["iters"] = iters;
  j["cache_dir"] = cache_dir ? nlohmann::json(cache_dir->string()) : nlohmann::json(nullptr);
  return j;
}

std::vector<std::string> RunConfig::features() const {
  if (feature_list) return load_feature_list(*feature_list);
  return nsl_kdd_default_features();
}

LabelMap RunConfig::labels() const {
  return label_map ? LabelMap::load(*label_map) : LabelMap::nsl_kdd();
}

CsvOptions RunConfig::csv_options() const {
  CsvOptions options;
  options.label_column = label_column;
  return options;
}

RunConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kParseError, path.string() + ": " + e.what());
  }
  RunConfig config;
  // Relative paths inside a config file are resolved against its directory.
  const std::filesystem::path base = path.parent_path();
  for (const char* key : {"data", "test_data", "features", "label_map", "cache_dir"}) {
    if (j.contains(key) && j[key].is_string()) {
      const std::filesystem::path p = j[key].get<std::string>();
      if (p.is_relative()) j[key] = (base / p).lexically_normal().string();
    }
  }
  config.merge_json(j);
  return config;
}

}  // namespace fedsg::app
