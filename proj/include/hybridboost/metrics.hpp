#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace hybridboost::metrics {

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t tn = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + tn + fp + fn; }
  bool operator==(const ConfusionCounts&) const = default;
};

/// `standard` is the textbook definition of every metric. `paper_literal`
/// reproduces two printed variants for audit: precision = TN / (TN + FP)
/// (which F1 then inherits) and an MCC denominator of
/// sqrt((TP+FP)(FP+FN)(TN+FP)(TN+FN)).
enum class MetricMode { standard, paper_literal };

std::string mode_name(MetricMode mode);

struct MetricReport {
  double accuracy = 0.0;
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
  double mcc = 0.0;
  MetricMode mode = MetricMode::standard;
  ConfusionCounts counts;
  /// Names of metrics whose denominator was zero; those metrics are 0.
  std::vector<std::string> degenerate;
};

/// Throws DataError on a length mismatch.
ConfusionCounts confusion_counts(std::span<const int> y_true, std::span<const int> y_pred,
                                 int positive_label = 1);

/// Throws DataError when the counts are all zero.
MetricReport binary_metrics(const ConfusionCounts& counts, MetricMode mode = MetricMode::standard);

struct MulticlassReport {
  /// One-vs-rest report per class.
  std::vector<MetricReport> per_class;
  /// Unweighted means of recall, precision, f1 and mcc over classes; accuracy
  /// is the overall fraction correct. counts is left empty.
  MetricReport macro;
  /// confusion[t][p] counts samples of true class t predicted as p.
  std::vector<std::vector<std::size_t>> confusion;
};

/// Throws LabelError for labels outside [0, num_classes).
MulticlassReport multiclass_metrics(std::span<const int> y_true, std::span<const int> y_pred,
                                    std::size_t num_classes,
                                    MetricMode mode = MetricMode::standard);

enum class CurveKind { roc, pr };

std::string curve_kind_name(CurveKind kind);

struct CurveSeries {
  CurveKind kind = CurveKind::roc;
  /// (x, y): (FPR, TPR) for ROC, (recall, precision) for PR.
  std::vector<std::pair<double, double>> points;
  double auc = 0.0;
  /// Written in place of the kind name in CSV output when non-empty.
  std::string tag;
};

/// Trapezoidal area under a polyline.
double trapezoid_area(std::span<const std::pair<double, double>> points);

/// Sweeps thresholds over the distinct scores in descending order; tied
/// scores enter together. ROC runs from (0,0) to (1,1). PR starts at recall 0
/// with the precision of the first threshold. Samples whose truth equals
/// `positive_label` are positives. Throws DegenerateError when the truth holds
/// only one class.
CurveSeries ranking_curve(std::span<const double> scores, std::span<const int> y_true,
                          CurveKind kind, int positive_label = 1);

/// CSV with header `kind,x,y`, one row per point; the kind column holds the
/// curve's tag when it has one.
std::string curves_csv(std::span<const CurveSeries> curves);
void write_curves_csv(std::span<const CurveSeries> curves, const std::filesystem::path& path);

void to_json(nlohmann::json& j, const ConfusionCounts& c);
void to_json(nlohmann::json& j, const MetricReport& r);
void to_json(nlohmann::json& j, const MulticlassReport& r);
void to_json(nlohmann::json& j, const CurveSeries& c);

}  // namespace hybridboost::metrics
