#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedsg/linalg.hpp"

namespace fedsg {

enum class TrafficClass { kNormal, kDos, kProbe, kR2l, kU2r, kPlanted };

std::string_view to_string(TrafficClass c);
/// Parses one of normal|dos|probe|r2l|u2r. Throws Error{kUnknownLabel}.
TrafficClass parse_traffic_class(std::string_view name);

/// Raw attack names (e.g. "neptune") to traffic classes. Class names map to
/// themselves.
class LabelMap {
 public:
  LabelMap() = default;
  explicit LabelMap(std::map<std::string, TrafficClass> entries) : entries_(std::move(entries)) {}

  /// NSL-KDD mapping covering the 22 training and 17 test-only attack types.
  static LabelMap nsl_kdd();
  /// Text file, one "raw_name class" pair per line, '#' comments.
  static LabelMap load(const std::filesystem::path& path);

  TrafficClass map(std::string_view raw) const;
  const std::map<std::string, TrafficClass>& entries() const { return entries_; }

 private:
  std::map<std::string, TrafficClass> entries_;
};

/// The 41 NSL-KDD feature column names, in file order.
const std::vector<std::string>& nsl_kdd_columns();
/// 34 numeric features: all columns except the categorical protocol_type,
/// service and flag and the binary land, logged_in, is_host_login and
/// is_guest_login.
const std::vector<std::string>& nsl_kdd_default_features();
/// Plain text, one feature name per line; blank lines and '#' comments skipped.
std::vector<std::string> load_feature_list(const std::filesystem::path& path);

struct CsvOptions {
  enum class Header { kAuto, kPresent, kAbsent };
  Header header = Header::kAuto;
  // Default: a header column named "label", otherwise column 41.
  std::optional<std::size_t> label_column;
  // Names for header-less files; empty means NSL-KDD order.
  std::vector<std::string> column_names;
};

struct RawRecord {
  std::size_t row = 0;           // 1-based line number in the source
  std::vector<double> features;  // selected features, in Dataset::feature_names order
  std::string raw_label;
  TrafficClass label = TrafficClass::kNormal;
};

struct Dataset {
  std::vector<std::string> feature_names;
  std::vector<RawRecord> records;

  /// Throws Error{kMissingFeature}.
  std::size_t feature_index(std::string_view name) const;
  std::size_t count(TrafficClass c) const;
};

/// Throws Error{kParseError} naming the row (and column) at fault,
/// Error{kUnknownLabel}, Error{kMissingFeature} or Error{kIoError}.
Dataset load_dataset(const std::filesystem::path& path, std::span<const std::string> feature_list,
                     const LabelMap& labels, const CsvOptions& options = {});
Dataset parse_dataset(std::istream& in, std::span<const std::string> feature_list, const LabelMap& labels,
                      const CsvOptions& options = {});

/// Per-feature standardization fitted on one client's training rows.
struct ZScore {
  Vector mean;
  Vector std;
  std::vector<bool> degenerate;  // std below 1e-12: feature forced to 0

  static ZScore identity(std::size_t d);
  Vector apply(const Vector& x) const;
  DataMatrix apply(const DataMatrix& columns) const;
};

/// One client's training block (d x B). Carries no labels: training data is
/// benign by construction.
struct ClientShard {
  std::size_t client_id = 0;
  DataMatrix features;
  ZScore scaler;
  // Raw range of the partitioning feature; used to route test traffic.
  double range_lo = 0.0;
  double range_hi = 0.0;
};

struct PartitionOptions {
  bool benign_only = true;
  std::uint64_t seed = 0;  // used only when shards need subsampling to a common width
};

struct Partition {
  std::vector<ClientShard> shards;
  std::size_t dropped_remainder = 0;
  std::size_t subsampled_away = 0;
};

/// Sorts records by `sort_feature` (ties by row), cuts them into n_clients
/// contiguous groups of equal size and drops the remainder. Shards hold raw
/// (unnormalized) features. Throws Error{kMissingFeature} or
/// Error{kInvalidArgument} when there are fewer records than clients.
Partition partition_non_iid(const Dataset& data, std::size_t n_clients, std::string_view sort_feature,
                            const PartitionOptions& options = {});

/// Fits mean/std on the shard's own columns and standardizes them.
/// Throws Error{kEmptyShard}.
ClientShard zscore_fit_apply(ClientShard shard);

/// Labeled evaluation samples (raw features, d x n).
struct TestSet {
  DataMatrix features;
  std::vector<TrafficClass> classes;
  std::vector<double> routing_values;  // raw partition-feature value per sample

  std::vector<bool> attack_labels() const;
  std::size_t size() const { return classes.size(); }
};

/// Every record of `data`; routing values come from `sort_feature` when given.
TestSet make_test_set(const Dataset& data, std::optional<std::string_view> sort_feature = std::nullopt);

/// Keeps benign samples plus the listed attack classes.
TestSet filter_slice(const TestSet& test, std::span<const TrafficClass> attacks);

/// "r2l,u2r" -> {kR2l, kU2r}.
std::vector<TrafficClass> parse_slice(std::string_view spec);

/// Sends each test sample to a client whose training range of the partition
/// feature contains its value; several candidates are used in turn, a value
/// outside every range goes to the nearest range.
std::vector<std::size_t> route_to_clients(const TestSet& test, std::span<const ClientShard> shards);

/// Standardizes every test column with the scaler of its assigned client.
DataMatrix normalize_routed(const TestSet& test, std::span<const ClientShard> shards,
                            std::span<const std::size_t> assignment);

/// Synthetic low-rank traffic with planted anomalies.
struct SynthSpec {
  std::size_t d = 34;
  std::size_t width = 64;  // B, samples per client
  std::size_t clients = 20;
  std::size_t rank = 3;
  double noise = 0.05;
  double anomaly_fraction = 0.05;
  double anomaly_offset = 0.5;  // 10 x noise
  std::size_t test_size = 2000;
  // Client i scales latent direction (i mod rank) by this factor; 1 = i.i.d.
  double skew = 0.02;
  double signal = 0.4;  // latent direction j has scale signal * 0.8^j
  std::uint64_t seed = 1;

  /// Throws Error{kInvalidArgument}.
  void validate() const;
  /// "d=34,width=64,clients=20,..." (keys as the field names); unknown keys
  /// are rejected. Empty or "default" gives the defaults.
  static SynthSpec parse(std::string_view text);
  std::string to_string() const;
};

struct SyntheticData {
  std::vector<ClientShard> train;  // identity scalers
  TestSet test;
  std::vector<std::size_t> assignment;  // test sample i -> client i mod N
  std::vector<std::size_t> anomaly_indices;
  DataMatrix true_basis;  // d x rank
};

SyntheticData generate_synthetic(const SynthSpec& spec);

/// Shard cache keyed by (dataset hash, config hash).
std::filesystem::path shard_cache_path(const std::filesystem::path& dir, std::string_view dataset_hash,
                                       std::string_view config_hash);
void write_shards(std::ostream& out, std::span<const ClientShard> shards);
std::vector<ClientShard> read_shards(std::istream& in);

}  // namespace fedsg
