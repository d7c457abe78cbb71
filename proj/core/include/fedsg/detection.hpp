#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedsg/grassmann.hpp"

namespace fedsg {

/// Reconstruction error of one sample against span(U): ||x - U U^T x||_2.
/// Only U enters: V indexes training samples and has no counterpart for a
/// fresh record.
double score(const GrassmannPoint& u, std::span<const double> x);
double score(const GrassmannPoint& u, const Vector& x);

/// Column-wise scores for a d x n block of samples.
std::vector<double> score_all(const GrassmannPoint& u, const DataMatrix& samples);

/// Nearest-rank percentile: the ceil(rho/100 * n)-th smallest error, rank
/// clamped to [1, n]. Throws Error{kEmptyInput} / Error{kInvalidArgument}.
double fit_threshold(std::span<const double> training_errors, double rho);

enum class RhoMode {
  kPercentile,  // tau = rho-th percentile; larger rho -> fewer alarms
  kUpperTail,   // tau = (100 - rho)-th percentile; flags the top rho percent
};

double fit_threshold(std::span<const double> training_errors, double rho, RhoMode mode);

struct ScoreReport {
  std::vector<double> errors;
  double tau = 0.0;
  std::vector<bool> flags;  // errors[i] > tau
};

ScoreReport make_score_report(std::vector<double> errors, double tau);

struct Confusion {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;

  Confusion& operator+=(const Confusion& other);
  std::uint64_t total() const { return tp + fp + tn + fn; }
};

struct CurvePoint {
  double x = 0.0;
  double y = 0.0;
};

struct MetricsReport {
  double acc = 0.0;
  double pre = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
  double f1 = 0.0;
  // Some ratio had a zero denominator (for example, only one class present).
  bool degenerate = false;
  Confusion counts;
  std::vector<CurvePoint> roc;  // (fpr, tpr), non-decreasing in fpr
  std::vector<CurvePoint> pr;   // (recall, precision)
  double auc = 0.0;
};

/// Point metrics from confusion counts; zero denominators give 0 and set
/// the degenerate flag.
MetricsReport metrics_from_counts(const Confusion& counts);

/// labels: true = attack. Predicted positive when error > tau.
/// Throws Error{kLengthMismatch}.
MetricsReport evaluate(std::span<const double> errors, const std::vector<bool>& labels, double tau);

struct Curves {
  std::vector<CurvePoint> roc;
  std::vector<CurvePoint> pr;
  double auc = 0.0;
};

/// Sweeps the decision threshold from +inf through every distinct error to
/// -inf. ROC runs from (0,0) to (1,1), AUC by the trapezoidal rule (ties
/// contribute diagonal segments). The PR curve has one point per distinct
/// threshold plus a recall-0 point carrying the first attained precision.
/// Throws Error{kAllOneClass} or Error{kLengthMismatch}.
Curves roc_and_pr(std::span<const double> errors, const std::vector<bool>& labels);

/// One client of the self-learning baseline: benign training block (d x B)
/// and the labeled test samples routed to that client (d x n).
struct LocalDetectionTask {
  DataMatrix train;
  DataMatrix test;
  std::vector<bool> labels;
};

/// Each client fits its own rank-k SVD and threshold; confusion counts are
/// summed across clients. The curves pool per-client scores divided by the
/// client's threshold so a single global cut at 1 reproduces the local
/// decisions.
MetricsReport self_svd_baseline(std::span<const LocalDetectionTask> clients, std::size_t k, double rho,
                                RhoMode mode = RhoMode::kPercentile);

/// Flat key/value view: acc, pre, tpr, fpr, f1, auc, tp, fp, tn, fn, degenerate.
std::vector<std::pair<std::string, double>> metrics_table(const MetricsReport& report);

void write_metrics_csv(std::ostream& out, const MetricsReport& report);
void write_curve_csv(std::ostream& out, std::span<const CurvePoint> curve, const char* x_name, const char* y_name);

}  // namespace fedsg
