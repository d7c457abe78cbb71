#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "fedsg/data.hpp"
#include "fedsg/detection.hpp"
#include "fedsg/federation.hpp"

namespace fedsg::app {

/// Everything a command needs, resolved from defaults, then the config
/// file, then command-line flags. The resolved value is what lands in the
/// manifest.
struct RunConfig {
  FedConfig fed;
  std::optional<std::filesystem::path> data;       // training CSV
  std::optional<std::filesystem::path> test_data;  // evaluation CSV
  std::optional<SynthSpec> synthetic;
  std::optional<std::filesystem::path> feature_list;
  std::optional<std::filesystem::path> label_map;
  std::optional<std::size_t> label_column;
  std::string partition_feature = "dst_bytes";
  double rho = 18.0;
  RhoMode rho_mode = RhoMode::kPercentile;
  bool per_client_threshold = false;
  std::optional<std::string> slice;
  std::size_t iters = 10000;
  std::optional<std::filesystem::path> cache_dir;

  RunConfig();

  /// Overlays keys present in `j`; unknown keys are rejected.
  void merge_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  std::vector<std::string> features() const;
  LabelMap labels() const;
  CsvOptions csv_options() const;
};

RunConfig load_config_file(const std::filesystem::path& path);

std::string_view to_string(RhoMode mode);
RhoMode parse_rho_mode(std::string_view text);

}  // namespace fedsg::app
