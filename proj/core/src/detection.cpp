#include "fedsg/detection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "fedsg/error.hpp"
#include "fedsg/text.hpp"

namespace fedsg {

double score(const GrassmannPoint& u, const Vector& x) {
  if (x.size() != u.n()) {
    throw Error(ErrorCode::kShapeMismatch, "sample has " + std::to_string(x.size()) + " features, model expects " +
                                               std::to_string(u.n()));
  }
  const Vector coeffs = u.basis().transpose() * x;
  return (x - u.basis() * coeffs).norm();
}

double score(const GrassmannPoint& u, std::span<const double> x) {
  return score(u, Vector(Eigen::Map<const Vector>(x.data(), static_cast<Eigen::Index>(x.size()))));
}

std::vector<double> score_all(const GrassmannPoint& u, const DataMatrix& samples) {
  if (samples.rows() != u.n()) {
    throw Error(ErrorCode::kShapeMismatch, "samples have " + std::to_string(samples.rows()) +
                                               " features, model expects " + std::to_string(u.n()));
  }
  DataMatrix residual = samples;
  residual.noalias() -= u.basis() * (u.basis().transpose() * samples);
  std::vector<double> out(static_cast<std::size_t>(samples.cols()));
  for (Eigen::Index j = 0; j < samples.cols(); ++j) out[static_cast<std::size_t>(j)] = residual.col(j).norm();
  return out;
}

double fit_threshold(std::span<const double> training_errors, double rho) {
  if (training_errors.empty()) throw Error(ErrorCode::kEmptyInput, "no training errors to fit a threshold on");
  if (!(rho >= 0.0 && rho <= 100.0)) throw Error(ErrorCode::kInvalidArgument, "rho must lie in [0, 100]");
  std::vector<double> sorted(training_errors.begin(), training_errors.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  auto rank = static_cast<std::size_t>(std::ceil(rho * n / 100.0));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

double fit_threshold(std::span<const double> training_errors, double rho, RhoMode mode) {
  return fit_threshold(training_errors, mode == RhoMode::kPercentile ? rho : 100.0 - rho);
}

ScoreReport make_score_report(std::vector<double> errors, double tau) {
  ScoreReport report{std::move(errors), tau, {}};
  report.flags.reserve(report.errors.size());
  for (double e : report.errors) report.flags.push_back(e > tau);
  return report;
}

Confusion& Confusion::operator+=(const Confusion& other) {
  tp += other.tp;
  fp += other.fp;
  tn += other.tn;
  fn += other.fn;
  return *this;
}

MetricsReport metrics_from_counts(const Confusion& c) {
  MetricsReport m;
  m.counts = c;
  auto ratio = [&](double num, double den) {
    if (den == 0.0) {
      m.degenerate = true;
      return 0.0;
    }
    return num / den;
  };
  const auto tp = static_cast<double>(c.tp);
  const auto fp = static_cast<double>(c.fp);
  const auto tn = static_cast<double>(c.tn);
  const auto fn = static_cast<double>(c.fn);
  m.acc = ratio(tp + tn, tp + fp + tn + fn);
  m.pre = ratio(tp, tp + fp);
  m.tpr = ratio(tp, tp + fn);
  m.fpr = ratio(fp, fp + tn);
  m.f1 = ratio(2.0 * m.pre * m.tpr, m.pre + m.tpr);
  return m;
}

namespace {

void require_same_length(std::size_t errors, std::size_t labels) {
  if (errors != labels) {
    throw Error(ErrorCode::kLengthMismatch,
                std::to_string(errors) + " errors but " + std::to_string(labels) + " labels");
  }
}

}  // namespace

MetricsReport evaluate(std::span<const double> errors, const std::vector<bool>& labels, double tau) {
  require_same_length(errors.size(), labels.size());
  Confusion c;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    const bool flagged = errors[i] > tau;
    if (labels[i]) {
      (flagged ? c.tp : c.fn)++;
    } else {
      (flagged ? c.fp : c.tn)++;
    }
  }
  return metrics_from_counts(c);
}

Curves roc_and_pr(std::span<const double> errors, const std::vector<bool>& labels) {
  require_same_length(errors.size(), labels.size());
  const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw Error(ErrorCode::kAllOneClass, "ROC needs both attack and benign samples");
  }

  std::vector<std::size_t> order(errors.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return errors[a] > errors[b]; });

  Curves curves;
  curves.roc.push_back({0.0, 0.0});
  const auto pos = static_cast<double>(positives);
  const auto neg = static_cast<double>(negatives);
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double value = errors[order[i]];
    while (i < order.size() && errors[order[i]] == value) {
      (labels[order[i]] ? tp : fp)++;
      ++i;
    }
    const CurvePoint prev = curves.roc.back();
    const CurvePoint next{static_cast<double>(fp) / neg, static_cast<double>(tp) / pos};
    curves.auc += (next.x - prev.x) * (next.y + prev.y) * 0.5;
    curves.roc.push_back(next);
    curves.pr.push_back({next.y, static_cast<double>(tp) / static_cast<double>(tp + fp)});
  }
  curves.pr.insert(curves.pr.begin(), CurvePoint{0.0, curves.pr.front().y});
  return curves;
}

MetricsReport self_svd_baseline(std::span<const LocalDetectionTask> clients, std::size_t k, double rho,
                                RhoMode mode) {
  if (clients.empty()) throw Error(ErrorCode::kEmptyInput, "self-SVD baseline without clients");
  Confusion total;
  std::vector<double> pooled;
  std::vector<bool> pooled_labels;
  for (const LocalDetectionTask& task : clients) {
    require_same_length(static_cast<std::size_t>(task.test.cols()), task.labels.size());
    const SvdTriple svd = truncated_svd(task.train, k);
    const GrassmannPoint local(svd.u);
    const std::vector<double> train_errors = score_all(local, task.train);
    const double tau = fit_threshold(train_errors, rho, mode);
    if (task.test.cols() == 0) continue;
    const std::vector<double> test_errors = score_all(local, task.test);
    total += evaluate(test_errors, task.labels, tau).counts;
    for (std::size_t i = 0; i < test_errors.size(); ++i) {
      pooled.push_back(tau > 0.0 ? test_errors[i] / tau : test_errors[i]);
      pooled_labels.push_back(task.labels[i]);
    }
  }
  MetricsReport report = metrics_from_counts(total);
  const auto positives = std::count(pooled_labels.begin(), pooled_labels.end(), true);
  if (positives > 0 && static_cast<std::size_t>(positives) < pooled_labels.size()) {
    Curves curves = roc_and_pr(pooled, pooled_labels);
    report.roc = std::move(curves.roc);
    report.pr = std::move(curves.pr);
    report.auc = curves.auc;
  } else {
    report.degenerate = true;
  }
  return report;
}

std::vector<std::pair<std::string, double>> metrics_table(const MetricsReport& r) {
  return {
      {"acc", r.acc},
      {"pre", r.pre},
      {"tpr", r.tpr},
      {"fpr", r.fpr},
      {"f1", r.f1},
      {"auc", r.auc},
      {"tp", static_cast<double>(r.counts.tp)},
      {"fp", static_cast<double>(r.counts.fp)},
      {"tn", static_cast<double>(r.counts.tn)},
      {"fn", static_cast<double>(r.counts.fn)},
      {"degenerate", r.degenerate ? 1.0 : 0.0},
  };
}

void write_metrics_csv(std::ostream& out, const MetricsReport& report) {
  out << "metric,value\n";
  for (const auto& [key, value] : metrics_table(report)) out << key << ',' << format_real(value) << '\n';
}

void write_curve_csv(std::ostream& out, std::span<const CurvePoint> curve, const char* x_name, const char* y_name) {
  out << x_name << ',' << y_name << '\n';
  for (const CurvePoint& p : curve) out << format_real(p.x) << ',' << format_real(p.y) << '\n';
}

}  // namespace fedsg
