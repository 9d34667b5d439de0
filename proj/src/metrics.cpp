#include "hybridboost/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "hybridboost/binary_io.hpp"
#include "hybridboost/errors.hpp"

namespace hybridboost::metrics {

std::string mode_name(MetricMode mode) {
  return mode == MetricMode::standard ? "standard" : "paper_literal";
}

std::string curve_kind_name(CurveKind kind) { return kind == CurveKind::roc ? "roc" : "pr"; }

ConfusionCounts confusion_counts(std::span<const int> y_true, std::span<const int> y_pred,
                                 int positive_label) {
  if (y_true.size() != y_pred.size()) {
    throw DataError("confusion_counts: " + std::to_string(y_true.size()) + " truths vs " +
                    std::to_string(y_pred.size()) + " predictions");
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const bool t = y_true[i] == positive_label;
    const bool p = y_pred[i] == positive_label;
    if (t && p) ++c.tp;
    else if (!t && !p) ++c.tn;
    else if (p) ++c.fp;
    else ++c.fn;
  }
  return c;
}

namespace {
double ratio(double num, double den, const char* name, std::vector<std::string>& flags) {
  if (den == 0.0) {
    flags.emplace_back(name);
    return 0.0;
  }
  return num / den;
}
}  // namespace

MetricReport binary_metrics(const ConfusionCounts& c, MetricMode mode) {
  if (c.total() == 0) throw DataError("binary_metrics: empty evaluation (all counts zero)");
  const auto tp = static_cast<double>(c.tp), tn = static_cast<double>(c.tn);
  const auto fp = static_cast<double>(c.fp), fn = static_cast<double>(c.fn);
  MetricReport r;
  r.mode = mode;
  r.counts = c;
  r.accuracy = (tp + tn) / static_cast<double>(c.total());
  r.recall = ratio(tp, tp + fn, "recall", r.degenerate);
  if (mode == MetricMode::standard) {
    r.precision = ratio(tp, tp + fp, "precision", r.degenerate);
  } else {
    r.precision = ratio(tn, tn + fp, "precision", r.degenerate);
  }
  r.f1 = ratio(2.0 * r.precision * r.recall, r.precision + r.recall, "f1", r.degenerate);
  const double second = mode == MetricMode::standard ? tp + fn : fp + fn;
  const double den = (tp + fp) * second * (tn + fp) * (tn + fn);
  r.mcc = ratio(tp * tn - fp * fn, std::sqrt(den), "mcc", r.degenerate);
  return r;
}

MulticlassReport multiclass_metrics(std::span<const int> y_true, std::span<const int> y_pred,
                                    std::size_t num_classes, MetricMode mode) {
  if (y_true.size() != y_pred.size()) {
    throw DataError("multiclass_metrics: " + std::to_string(y_true.size()) + " truths vs " +
                    std::to_string(y_pred.size()) + " predictions");
  }
  if (y_true.empty()) throw DataError("multiclass_metrics: empty evaluation");
  auto check = [&](int label, const char* which) {
    if (label < 0 || static_cast<std::size_t>(label) >= num_classes) {
      throw LabelError(std::string(which) + " label " + std::to_string(label) +
                       " outside [0," + std::to_string(num_classes) + ")");
    }
  };
  MulticlassReport r;
  r.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    check(y_true[i], "true");
    check(y_pred[i], "predicted");
    ++r.confusion[static_cast<std::size_t>(y_true[i])][static_cast<std::size_t>(y_pred[i])];
    correct += y_true[i] == y_pred[i];
  }
  r.macro.mode = mode;
  for (std::size_t c = 0; c < num_classes; ++c) {
    MetricReport pc = binary_metrics(confusion_counts(y_true, y_pred, static_cast<int>(c)), mode);
    r.macro.recall += pc.recall;
    r.macro.precision += pc.precision;
    r.macro.f1 += pc.f1;
    r.macro.mcc += pc.mcc;
    for (const auto& d : pc.degenerate) {
      r.macro.degenerate.push_back("class" + std::to_string(c) + "." + d);
    }
    r.per_class.push_back(std::move(pc));
  }
  const auto k = static_cast<double>(num_classes);
  r.macro.recall /= k;
  r.macro.precision /= k;
  r.macro.f1 /= k;
  r.macro.mcc /= k;
  r.macro.accuracy = static_cast<double>(correct) / static_cast<double>(y_true.size());
  return r;
}

double trapezoid_area(std::span<const std::pair<double, double>> points) {
  double area = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    area += (points[i].first - points[i - 1].first) * (points[i].second + points[i - 1].second) / 2.0;
  }
  return area;
}

CurveSeries ranking_curve(std::span<const double> scores, std::span<const int> y_true,
                          CurveKind kind, int positive_label) {
  if (scores.size() != y_true.size()) {
    throw DataError("ranking_curve: " + std::to_string(scores.size()) + " scores vs " +
                    std::to_string(y_true.size()) + " labels");
  }
  std::size_t pos = 0;
  for (int t : y_true) pos += t == positive_label;
  const std::size_t neg = y_true.size() - pos;
  if (pos == 0 || neg == 0) {
    throw DegenerateError("ranking_curve needs both classes in the truth (" + std::to_string(pos) +
                          " positives, " + std::to_string(neg) + " negatives)");
  }
  for (double s : scores) {
    if (!std::isfinite(s)) throw DataError("ranking_curve: non-finite score");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  CurveSeries c;
  c.kind = kind;
  if (kind == CurveKind::roc) c.points.emplace_back(0.0, 0.0);
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == s; ++i) {
      if (y_true[order[i]] == positive_label) ++tp;
      else ++fp;
    }
    const double tpr = static_cast<double>(tp) / static_cast<double>(pos);
    if (kind == CurveKind::roc) {
      c.points.emplace_back(static_cast<double>(fp) / static_cast<double>(neg), tpr);
    } else {
      const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
      if (c.points.empty()) c.points.emplace_back(0.0, precision);
      c.points.emplace_back(tpr, precision);
    }
  }
  c.auc = trapezoid_area(c.points);
  return c;
}

std::string curves_csv(std::span<const CurveSeries> curves) {
  std::ostringstream out;
  out.precision(17);
  out << "kind,x,y\n";
  for (const auto& c : curves) {
    const std::string kind = c.tag.empty() ? curve_kind_name(c.kind) : c.tag;
    for (const auto& [x, y] : c.points) out << kind << ',' << x << ',' << y << '\n';
  }
  return out.str();
}

void write_curves_csv(std::span<const CurveSeries> curves, const std::filesystem::path& path) {
  io::write_text(path, curves_csv(curves));
}

void to_json(nlohmann::json& j, const ConfusionCounts& c) {
  j = {{"tp", c.tp}, {"tn", c.tn}, {"fp", c.fp}, {"fn", c.fn}};
}

void to_json(nlohmann::json& j, const MetricReport& r) {
  j = {{"accuracy", r.accuracy},   {"recall", r.recall}, {"precision", r.precision},
       {"f1", r.f1},               {"mcc", r.mcc},       {"mode", mode_name(r.mode)},
       {"degenerate", r.degenerate}};
  if (r.counts.total() > 0) j["counts"] = r.counts;
}

void to_json(nlohmann::json& j, const MulticlassReport& r) {
  j = {{"macro", r.macro}, {"per_class", r.per_class}, {"confusion", r.confusion}};
}

void to_json(nlohmann::json& j, const CurveSeries& c) {
  j = {{"kind", curve_kind_name(c.kind)}, {"auc", c.auc}, {"points", c.points.size()}};
  if (!c.tag.empty()) j["tag"] = c.tag;
}

}  // namespace hybridboost::metrics
