#include "fedsg/data.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "fedsg/error.hpp"
#include "fedsg/grassmann.hpp"
#include "fedsg/text.hpp"

namespace fedsg {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '\n')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(trim(line.substr(start)));
      break;
    }
    fields.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
  return fields;
}

std::optional<double> parse_number(std::string_view s) {
  double value = 0.0;
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(value)) return std::nullopt;
  return value;
}

// Lines with content, '#' comments stripped.
std::vector<std::string> read_config_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    std::string_view view = line;
    if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = trim(view);
    if (!view.empty()) lines.emplace_back(view);
  }
  return lines;
}

}  // namespace

std::string_view to_string(TrafficClass c) {
  switch (c) {
    case TrafficClass::kNormal: return "normal";
    case TrafficClass::kDos: return "dos";
    case TrafficClass::kProbe: return "probe";
    case TrafficClass::kR2l: return "r2l";
    case TrafficClass::kU2r: return "u2r";
    case TrafficClass::kPlanted: return "planted";
  }
  return "unknown";
}

TrafficClass parse_traffic_class(std::string_view name) {
  for (TrafficClass c : {TrafficClass::kNormal, TrafficClass::kDos, TrafficClass::kProbe, TrafficClass::kR2l,
                         TrafficClass::kU2r}) {
    if (name == to_string(c)) return c;
  }
  throw Error(ErrorCode::kUnknownLabel, "unknown traffic class '" + std::string(name) + "'");
}

LabelMap LabelMap::nsl_kdd() {
  std::map<std::string, TrafficClass> m;
  auto add = [&](TrafficClass c, std::initializer_list<const char*> names) {
    for (const char* n : names) m.emplace(n, c);
  };
  add(TrafficClass::kNormal, {"normal"});
  add(TrafficClass::kDos, {"back", "land", "neptune", "pod", "smurf", "teardrop", "apache2", "mailbomb",
                           "processtable", "udpstorm"});
  add(TrafficClass::kProbe, {"ipsweep", "nmap", "portsweep", "satan", "mscan", "saint"});
  add(TrafficClass::kR2l, {"ftp_write", "guess_passwd", "imap", "multihop", "phf", "spy", "warezclient",
                           "warezmaster", "named", "sendmail", "snmpgetattack", "snmpguess", "xlock", "xsnoop",
                           "worm"});
  add(TrafficClass::kU2r, {"buffer_overflow", "loadmodule", "perl", "rootkit", "httptunnel", "ps", "sqlattack",
                           "xterm"});
  return LabelMap(std::move(m));
}

LabelMap LabelMap::load(const std::filesystem::path& path) {
  std::map<std::string, TrafficClass> m;
  for (const std::string& line : read_config_lines(path)) {
    std::istringstream fields(line);
    std::string raw;
    std::string cls;
    if (!(fields >> raw >> cls)) {
      throw Error(ErrorCode::kParseError, path.string() + ": expected '<name> <class>' but got '" + line + "'");
    }
    m[raw] = parse_traffic_class(cls);
  }
  return LabelMap(std::move(m));
}

TrafficClass LabelMap::map(std::string_view raw) const {
  if (const auto it = entries_.find(std::string(raw)); it != entries_.end()) return it->second;
  try {
    return parse_traffic_class(raw);
  } catch (const Error&) {
    throw Error(ErrorCode::kUnknownLabel, "label '" + std::string(raw) + "' is not in the label map");
  }
}

const std::vector<std::string>& nsl_kdd_columns() {
  static const std::vector<std::string> columns = {
      "duration", "protocol_type", "service", "flag", "src_bytes", "dst_bytes", "land", "wrong_fragment",
      "urgent", "hot", "num_failed_logins", "logged_in", "num_compromised", "root_shell", "su_attempted",
      "num_root", "num_file_creations", "num_shells", "num_access_files", "num_outbound_cmds", "is_host_login",
      "is_guest_login", "count", "srv_count", "serror_rate", "srv_serror_rate", "rerror_rate", "srv_rerror_rate",
      "same_srv_rate", "diff_srv_rate", "srv_diff_host_rate", "dst_host_count", "dst_host_srv_count",
      "dst_host_same_srv_rate", "dst_host_diff_srv_rate", "dst_host_same_src_port_rate",
      "dst_host_srv_diff_host_rate", "dst_host_serror_rate", "dst_host_srv_serror_rate", "dst_host_rerror_rate",
      "dst_host_srv_rerror_rate"};
  return columns;
}

const std::vector<std::string>& nsl_kdd_default_features() {
  static const std::vector<std::string> features = [] {
    const std::vector<std::string> excluded = {"protocol_type", "service", "flag", "land",
                                               "logged_in", "is_host_login", "is_guest_login"};
    std::vector<std::string> out;
    for (const std::string& c : nsl_kdd_columns()) {
      if (std::find(excluded.begin(), excluded.end(), c) == excluded.end()) out.push_back(c);
    }
    return out;
  }();
  return features;
}

std::vector<std::string> load_feature_list(const std::filesystem::path& path) {
  std::vector<std::string> names = read_config_lines(path);
  if (names.empty()) throw Error(ErrorCode::kEmptyInput, path.string() + " lists no features");
  return names;
}

std::size_t Dataset::feature_index(std::string_view name) const {
  const auto it = std::find(feature_names.begin(), feature_names.end(), name);
  if (it == feature_names.end()) {
    throw Error(ErrorCode::kMissingFeature, "feature '" + std::string(name) + "' is not loaded");
  }
  return static_cast<std::size_t>(it - feature_names.begin());
}

std::size_t Dataset::count(TrafficClass c) const {
  return static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [c](const RawRecord& r) { return r.label == c; }));
}

Dataset parse_dataset(std::istream& in, std::span<const std::string> feature_list, const LabelMap& labels,
                      const CsvOptions& options) {
  if (feature_list.empty()) throw Error(ErrorCode::kEmptyInput, "empty feature list");

  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> columns;
  std::size_t expected_fields = 0;
  std::vector<std::size_t> feature_columns;
  std::size_t label_column = 0;
  bool configured = false;

  auto configure = [&](std::vector<std::string> names, std::size_t field_count) {
    columns = std::move(names);
    expected_fields = field_count;
    if (options.label_column) {
      label_column = *options.label_column;
    } else if (const auto it = std::find(columns.begin(), columns.end(), "label"); it != columns.end()) {
      label_column = static_cast<std::size_t>(it - columns.begin());
    } else {
      label_column = nsl_kdd_columns().size();
    }
    if (label_column >= expected_fields) {
      throw Error(ErrorCode::kParseError, "label column " + std::to_string(label_column) + " outside the " +
                                              std::to_string(expected_fields) + " columns");
    }
    for (const std::string& f : feature_list) {
      const auto it = std::find(columns.begin(), columns.end(), f);
      if (it == columns.end() || static_cast<std::size_t>(it - columns.begin()) >= expected_fields) {
        throw Error(ErrorCode::kMissingFeature, "feature '" + f + "' is not a column of the input");
      }
      feature_columns.push_back(static_cast<std::size_t>(it - columns.begin()));
    }
    configured = true;
  };

  Dataset data;
  data.feature_names.assign(feature_list.begin(), feature_list.end());

  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::vector<std::string_view> fields = split_csv(line);

    if (!configured) {
      bool header = options.header == CsvOptions::Header::kPresent;
      if (options.header == CsvOptions::Header::kAuto) {
        // A header row has no numeric field; any data row has at least one.
        header = std::none_of(fields.begin(), fields.end(), [](std::string_view f) { return parse_number(f).has_value(); });
      }
      if (header) {
        std::vector<std::string> names(fields.begin(), fields.end());
        configure(std::move(names), fields.size());
        continue;
      }
      std::vector<std::string> names = options.column_names.empty() ? nsl_kdd_columns() : options.column_names;
      for (std::size_t i = names.size(); i < fields.size(); ++i) {
        names.push_back(i == nsl_kdd_columns().size() ? "label" : "column" + std::to_string(i));
      }
      configure(std::move(names), fields.size());
    }

    if (fields.size() != expected_fields) {
      throw Error(ErrorCode::kParseError, "row " + std::to_string(line_no) + ": expected " +
                                              std::to_string(expected_fields) + " columns, found " +
                                              std::to_string(fields.size()));
    }
    RawRecord record;
    record.row = line_no;
    record.features.reserve(feature_columns.size());
    for (std::size_t c : feature_columns) {
      const auto value = parse_number(fields[c]);
      if (!value) {
        throw Error(ErrorCode::kParseError, "row " + std::to_string(line_no) + ", column '" + columns[c] +
                                                "': not a number ('" + std::string(fields[c]) + "')");
      }
      record.features.push_back(*value);
    }
    record.raw_label = std::string(fields[label_column]);
    try {
      record.label = labels.map(record.raw_label);
    } catch (const Error& e) {
      throw Error(ErrorCode::kUnknownLabel, "row " + std::to_string(line_no) + ": " + e.what());
    }
    data.records.push_back(std::move(record));
  }
  return data;
}

Dataset load_dataset(const std::filesystem::path& path, std::span<const std::string> feature_list,
                     const LabelMap& labels, const CsvOptions& options) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open dataset " + path.string());
  return parse_dataset(in, feature_list, labels, options);
}

ZScore ZScore::identity(std::size_t d) {
  const auto n = static_cast<Eigen::Index>(d);
  return ZScore{Vector::Zero(n), Vector::Ones(n), std::vector<bool>(d, false)};
}

Vector ZScore::apply(const Vector& x) const {
  Vector out = (x - mean).cwiseQuotient(std);
  for (std::size_t i = 0; i < degenerate.size(); ++i) {
    if (degenerate[i]) out(static_cast<Eigen::Index>(i)) = 0.0;
  }
  return out;
}

DataMatrix ZScore::apply(const DataMatrix& columns) const {
  DataMatrix out = (columns.colwise() - mean).array().colwise() / std.array();
  for (std::size_t i = 0; i < degenerate.size(); ++i) {
    if (degenerate[i]) out.row(static_cast<Eigen::Index>(i)).setZero();
  }
  return out;
}

Partition partition_non_iid(const Dataset& data, std::size_t n_clients, std::string_view sort_feature,
                            const PartitionOptions& options) {
  const std::size_t key = data.feature_index(sort_feature);
  if (n_clients == 0) throw Error(ErrorCode::kInvalidArgument, "need at least one client");

  std::vector<std::size_t> order;
  order.reserve(data.records.size());
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    if (!options.benign_only || data.records[i].label == TrafficClass::kNormal) order.push_back(i);
  }
  if (order.size() < n_clients) {
    throw Error(ErrorCode::kInvalidArgument, std::to_string(order.size()) + " records cannot fill " +
                                                 std::to_string(n_clients) + " clients");
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const RawRecord& ra = data.records[a];
    const RawRecord& rb = data.records[b];
    if (ra.features[key] != rb.features[key]) return ra.features[key] < rb.features[key];
    return ra.row < rb.row;
  });

  Partition result;
  const std::size_t group = order.size() / n_clients;
  result.dropped_remainder = order.size() - group * n_clients;

  // Groups are equal by construction; the common-width pass below only
  // matters if the grouping rule changes.
  std::vector<std::vector<std::size_t>> groups(n_clients);
  for (std::size_t c = 0; c < n_clients; ++c) {
    groups[c].assign(order.begin() + static_cast<std::ptrdiff_t>(c * group),
                     order.begin() + static_cast<std::ptrdiff_t>((c + 1) * group));
  }
  std::size_t width = group;
  for (const auto& g : groups) width = std::min(width, g.size());
  std::mt19937_64 rng(options.seed);
  for (auto& g : groups) {
    if (g.size() > width) {
      result.subsampled_away += g.size() - width;
      std::vector<std::size_t> keep(g.size());
      std::iota(keep.begin(), keep.end(), std::size_t{0});
      std::shuffle(keep.begin(), keep.end(), rng);
      keep.resize(width);
      std::sort(keep.begin(), keep.end());
      std::vector<std::size_t> kept;
      for (std::size_t i : keep) kept.push_back(g[i]);
      g = std::move(kept);
    }
  }

  const auto d = static_cast<Eigen::Index>(data.feature_names.size());
  for (std::size_t c = 0; c < n_clients; ++c) {
    ClientShard shard;
    shard.client_id = c;
    shard.features.resize(d, static_cast<Eigen::Index>(width));
    for (std::size_t j = 0; j < width; ++j) {
      const RawRecord& r = data.records[groups[c][j]];
      for (Eigen::Index f = 0; f < d; ++f) shard.features(f, static_cast<Eigen::Index>(j)) = r.features[f];
    }
    shard.scaler = ZScore::identity(static_cast<std::size_t>(d));
    shard.range_lo = shard.features.row(static_cast<Eigen::Index>(key)).minCoeff();
    shard.range_hi = shard.features.row(static_cast<Eigen::Index>(key)).maxCoeff();
    result.shards.push_back(std::move(shard));
  }
  return result;
}

ClientShard zscore_fit_apply(ClientShard shard) {
  if (shard.features.rows() == 0 || shard.features.cols() == 0) {
    throw Error(ErrorCode::kEmptyShard, "client " + std::to_string(shard.client_id) + " has no training rows");
  }
  const Eigen::Index d = shard.features.rows();
  const auto n = static_cast<double>(shard.features.cols());
  ZScore z;
  z.mean = shard.features.rowwise().mean();
  z.std.resize(d);
  z.degenerate.assign(static_cast<std::size_t>(d), false);
  for (Eigen::Index f = 0; f < d; ++f) {
    const double var = (shard.features.row(f).array() - z.mean(f)).square().sum() / n;
    const double s = std::sqrt(var);
    if (s < 1e-12) {
      z.std(f) = 1.0;
      z.degenerate[static_cast<std::size_t>(f)] = true;
    } else {
      z.std(f) = s;
    }
  }
  shard.features = z.apply(shard.features);
  shard.scaler = std::move(z);
  return shard;
}

std::vector<bool> TestSet::attack_labels() const {
  std::vector<bool> out;
  out.reserve(classes.size());
  for (TrafficClass c : classes) out.push_back(c != TrafficClass::kNormal);
  return out;
}

TestSet make_test_set(const Dataset& data, std::optional<std::string_view> sort_feature) {
  std::optional<std::size_t> key;
  if (sort_feature) key = data.feature_index(*sort_feature);
  TestSet test;
  const auto d = static_cast<Eigen::Index>(data.feature_names.size());
  test.features.resize(d, static_cast<Eigen::Index>(data.records.size()));
  for (std::size_t j = 0; j < data.records.size(); ++j) {
    const RawRecord& r = data.records[j];
    for (Eigen::Index f = 0; f < d; ++f) test.features(f, static_cast<Eigen::Index>(j)) = r.features[f];
    test.classes.push_back(r.label);
    test.routing_values.push_back(key ? r.features[*key] : 0.0);
  }
  return test;
}

TestSet filter_slice(const TestSet& test, std::span<const TrafficClass> attacks) {
  std::vector<Eigen::Index> keep;
  for (std::size_t i = 0; i < test.classes.size(); ++i) {
    const TrafficClass c = test.classes[i];
    if (c == TrafficClass::kNormal || std::find(attacks.begin(), attacks.end(), c) != attacks.end()) {
      keep.push_back(static_cast<Eigen::Index>(i));
    }
  }
  TestSet out;
  out.features.resize(test.features.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j) {
    out.features.col(static_cast<Eigen::Index>(j)) = test.features.col(keep[j]);
    out.classes.push_back(test.classes[static_cast<std::size_t>(keep[j])]);
    out.routing_values.push_back(test.routing_values[static_cast<std::size_t>(keep[j])]);
  }
  return out;
}

std::vector<TrafficClass> parse_slice(std::string_view spec) {
  std::vector<TrafficClass> out;
  for (std::string_view field : split_csv(spec)) {
    if (field.empty()) continue;
    const TrafficClass c = parse_traffic_class(field);
    if (c == TrafficClass::kNormal) continue;
    if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
  }
  if (out.empty()) throw Error(ErrorCode::kInvalidArgument, "slice '" + std::string(spec) + "' names no attack class");
  return out;
}

std::vector<std::size_t> route_to_clients(const TestSet& test, std::span<const ClientShard> shards) {
  if (shards.empty()) throw Error(ErrorCode::kEmptyInput, "no clients to route test traffic to");
  std::vector<std::size_t> assignment(test.size());
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const double v = test.routing_values[i];
    candidates.clear();
    for (std::size_t c = 0; c < shards.size(); ++c) {
      if (shards[c].range_lo <= v && v <= shards[c].range_hi) candidates.push_back(c);
    }
    if (candidates.empty()) {
      std::size_t best = 0;
      double best_gap = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < shards.size(); ++c) {
        const double gap = v < shards[c].range_lo ? shards[c].range_lo - v : v - shards[c].range_hi;
        if (gap < best_gap) {
          best_gap = gap;
          best = c;
        }
      }
      assignment[i] = best;
    } else {
      assignment[i] = candidates[i % candidates.size()];
    }
  }
  return assignment;
}

DataMatrix normalize_routed(const TestSet& test, std::span<const ClientShard> shards,
                            std::span<const std::size_t> assignment) {
  if (assignment.size() != test.size()) {
    throw Error(ErrorCode::kLengthMismatch, "routing covers " + std::to_string(assignment.size()) + " of " +
                                                std::to_string(test.size()) + " samples");
  }
  DataMatrix out(test.features.rows(), test.features.cols());
  for (std::size_t j = 0; j < assignment.size(); ++j) {
    const ClientShard& shard = shards[assignment[j]];
    if (shard.scaler.mean.size() != test.features.rows()) {
      throw Error(ErrorCode::kDimensionMismatch, "client scaler does not match the test feature count");
    }
    out.col(static_cast<Eigen::Index>(j)) = shard.scaler.apply(Vector(test.features.col(static_cast<Eigen::Index>(j))));
  }
  return out;
}

void SynthSpec::validate() const {
  if (d == 0 || width == 0 || clients == 0 || rank == 0 || test_size == 0) {
    throw Error(ErrorCode::kInvalidArgument, "synthetic dimensions must be positive");
  }
  if (rank >= d || rank > width) throw Error(ErrorCode::kInvalidArgument, "synthetic rank must satisfy r < d and r <= B");
  if (!(anomaly_fraction >= 0.0 && anomaly_fraction < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "anomaly fraction must lie in [0, 1)");
  }
  if (!(noise >= 0.0) || !(anomaly_offset >= 0.0) || !(skew >= 0.0) || !(signal >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "synthetic scales must be non-negative");
  }
}

SynthSpec SynthSpec::parse(std::string_view text) {
  SynthSpec spec;
  text = trim(text);
  if (text.empty() || text == "default") return spec;
  for (std::string_view item : split_csv(text)) {
    const std::size_t eq = item.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::kInvalidArgument, "synthetic spec entry '" + std::string(item) + "' lacks '='");
    }
    const std::string_view key = trim(item.substr(0, eq));
    const std::string_view raw = trim(item.substr(eq + 1));
    const auto value = parse_number(raw);
    if (!value) throw Error(ErrorCode::kInvalidArgument, "synthetic spec value '" + std::string(raw) + "' is not a number");
    auto as_count = [&] {
      if (*value < 0 || std::floor(*value) != *value) {
        throw Error(ErrorCode::kInvalidArgument, "synthetic spec '" + std::string(key) + "' must be a count");
      }
      return static_cast<std::size_t>(*value);
    };
    if (key == "d") spec.d = as_count();
    else if (key == "width") spec.width = as_count();
    else if (key == "clients") spec.clients = as_count();
    else if (key == "rank") spec.rank = as_count();
    else if (key == "noise") spec.noise = *value;
    else if (key == "anomaly_fraction") spec.anomaly_fraction = *value;
    else if (key == "anomaly_offset") spec.anomaly_offset = *value;
    else if (key == "test_size") spec.test_size = as_count();
    else if (key == "skew") spec.skew = *value;
    else if (key == "signal") spec.signal = *value;
    else if (key == "seed") spec.seed = static_cast<std::uint64_t>(as_count());
    else throw Error(ErrorCode::kInvalidArgument, "unknown synthetic spec key '" + std::string(key) + "'");
  }
  spec.validate();
  return spec;
}

std::string SynthSpec::to_string() const {
  std::ostringstream out;
  out << "d=" << d << ",width=" << width << ",clients=" << clients << ",rank=" << rank
      << ",noise=" << format_real(noise) << ",anomaly_fraction=" << format_real(anomaly_fraction)
      << ",anomaly_offset=" << format_real(anomaly_offset) << ",test_size=" << test_size
      << ",skew=" << format_real(skew) << ",signal=" << format_real(signal) << ",seed=" << seed;
  return out.str();
}

SyntheticData generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto d = static_cast<Eigen::Index>(spec.d);
  const auto r = static_cast<Eigen::Index>(spec.rank);

  DataMatrix gaussian(d, r);
  for (Eigen::Index j = 0; j < r; ++j)
    for (Eigen::Index i = 0; i < d; ++i) gaussian(i, j) = normal(rng);
  SyntheticData out;
  out.true_basis = thin_qr(gaussian).q;

  Vector scales(r);
  for (Eigen::Index j = 0; j < r; ++j) scales(j) = spec.signal * std::pow(0.8, static_cast<double>(j));

  auto benign = [&](std::size_t profile) {
    Vector coeff(r);
    for (Eigen::Index j = 0; j < r; ++j) {
      const double damp = (static_cast<Eigen::Index>(profile % spec.rank) == j) ? spec.skew : 1.0;
      coeff(j) = scales(j) * damp * normal(rng);
    }
    Vector x = out.true_basis * coeff;
    for (Eigen::Index i = 0; i < d; ++i) x(i) += spec.noise * normal(rng);
    return x;
  };

  for (std::size_t c = 0; c < spec.clients; ++c) {
    ClientShard shard;
    shard.client_id = c;
    shard.features.resize(d, static_cast<Eigen::Index>(spec.width));
    for (std::size_t j = 0; j < spec.width; ++j) shard.features.col(static_cast<Eigen::Index>(j)) = benign(c);
    shard.scaler = ZScore::identity(spec.d);
    shard.range_lo = shard.range_hi = static_cast<double>(c);
    out.train.push_back(std::move(shard));
  }

  const auto n_anomalies = static_cast<std::size_t>(std::llround(spec.anomaly_fraction * static_cast<double>(spec.test_size)));
  std::vector<std::size_t> perm(spec.test_size);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = 0; i < n_anomalies; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, perm.size() - 1);
    std::swap(perm[i], perm[pick(rng)]);
  }
  out.anomaly_indices.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_anomalies));
  std::sort(out.anomaly_indices.begin(), out.anomaly_indices.end());
  std::vector<bool> planted(spec.test_size, false);
  for (std::size_t i : out.anomaly_indices) planted[i] = true;

  std::uniform_int_distribution<std::size_t> any_client(0, spec.clients - 1);
  out.test.features.resize(d, static_cast<Eigen::Index>(spec.test_size));
  for (std::size_t i = 0; i < spec.test_size; ++i) {
    Vector x = benign(any_client(rng));
    if (planted[i]) {
      Vector w(d);
      for (Eigen::Index f = 0; f < d; ++f) w(f) = normal(rng);
      w -= out.true_basis * (out.true_basis.transpose() * w);
      x += spec.anomaly_offset * w.normalized();
    }
    out.test.features.col(static_cast<Eigen::Index>(i)) = x;
    out.test.classes.push_back(planted[i] ? TrafficClass::kPlanted : TrafficClass::kNormal);
    const std::size_t client = i % spec.clients;
    out.test.routing_values.push_back(static_cast<double>(client));
    out.assignment.push_back(client);
  }
  return out;
}

// Shard cache: magic "FEDSGSH1", uint64 count, then per shard
//   uint64 client_id, d, B; float64 range_lo, range_hi;
//   d mean, d std, d degenerate flags (as float64 0/1), d*B features.
namespace {

constexpr char kShardMagic[8] = {'F', 'E', 'D', 'S', 'G', 'S', 'H', '1'};

void put_u64(std::ostream& out, std::uint64_t value) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFFu);
  out.write(bytes, 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  if (!in) throw Error(ErrorCode::kIoError, "truncated shard cache");
  std::uint64_t value = 0;
  for (int i = 0; i < 8; ++i) value |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return value;
}

void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }
double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

}  // namespace

std::filesystem::path shard_cache_path(const std::filesystem::path& dir, std::string_view dataset_hash,
                                       std::string_view config_hash) {
  return dir / ("shards-" + std::string(dataset_hash.substr(0, 16)) + "-" + std::string(config_hash.substr(0, 16)) + ".bin");
}

void write_shards(std::ostream& out, std::span<const ClientShard> shards) {
  out.write(kShardMagic, sizeof(kShardMagic));
  put_u64(out, shards.size());
  for (const ClientShard& s : shards) {
    put_u64(out, s.client_id);
    put_u64(out, static_cast<std::uint64_t>(s.features.rows()));
    put_u64(out, static_cast<std::uint64_t>(s.features.cols()));
    put_f64(out, s.range_lo);
    put_f64(out, s.range_hi);
    for (Eigen::Index f = 0; f < s.features.rows(); ++f) put_f64(out, s.scaler.mean(f));
    for (Eigen::Index f = 0; f < s.features.rows(); ++f) put_f64(out, s.scaler.std(f));
    for (bool flag : s.scaler.degenerate) put_f64(out, flag ? 1.0 : 0.0);
    for (Eigen::Index j = 0; j < s.features.cols(); ++j)
      for (Eigen::Index f = 0; f < s.features.rows(); ++f) put_f64(out, s.features(f, j));
  }
  if (!out) throw Error(ErrorCode::kIoError, "failed writing shard cache");
}

std::vector<ClientShard> read_shards(std::istream& in) {
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kShardMagic, 8) != 0) throw Error(ErrorCode::kParseError, "not a shard cache");
  const std::uint64_t count = get_u64(in);
  std::vector<ClientShard> shards;
  for (std::uint64_t c = 0; c < count; ++c) {
    ClientShard s;
    s.client_id = get_u64(in);
    const auto d = static_cast<Eigen::Index>(get_u64(in));
    const auto width = static_cast<Eigen::Index>(get_u64(in));
    if (d <= 0 || width <= 0 || d > (1 << 20) || width > (1 << 24)) {
      throw Error(ErrorCode::kParseError, "implausible shard dimensions in cache");
    }
    s.range_lo = get_f64(in);
    s.range_hi = get_f64(in);
    s.scaler.mean.resize(d);
    s.scaler.std.resize(d);
    for (Eigen::Index f = 0; f < d; ++f) s.scaler.mean(f) = get_f64(in);
    for (Eigen::Index f = 0; f < d; ++f) s.scaler.std(f) = get_f64(in);
    for (Eigen::Index f = 0; f < d; ++f) s.scaler.degenerate.push_back(get_f64(in) != 0.0);
    s.features.resize(d, width);
    for (Eigen::Index j = 0; j < width; ++j)
      for (Eigen::Index f = 0; f < d; ++f) s.features(f, j) = get_f64(in);
    shards.push_back(std::move(s));
  }
  return shards;
}

}  // namespace fedsg
