#include <cmath>

#include "doctest.h"
#include "hybridboost/errors.hpp"
#include "hybridboost/metrics.hpp"
#include "hybridboost/rng.hpp"
#include "oracles.hpp"

using namespace hybridboost;
using namespace hybridboost::metrics;

TEST_SUITE("metrics") {

TEST_CASE("confusion counts") {
  const std::vector<int> ones(10, 1), zeros(10, 0);
  CHECK(confusion_counts(ones, ones) == ConfusionCounts{10, 0, 0, 0});
  CHECK(confusion_counts(ones, zeros).fn == 10);
  CHECK(confusion_counts(std::vector<int>{1, 1, 0, 0}, std::vector<int>{1, 0, 1, 0}) ==
        ConfusionCounts{1, 1, 1, 1});
  CHECK_THROWS_AS(confusion_counts(ones, std::vector<int>{1}), DataError);
}

TEST_CASE("binary metric examples") {
  const MetricReport sym = binary_metrics({1, 1, 1, 1});
  CHECK(sym.accuracy == 0.5);
  CHECK(sym.mcc == 0.0);

  const MetricReport perfect = binary_metrics({7, 3, 0, 0});
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.recall == 1.0);
  CHECK(perfect.precision == 1.0);
  CHECK(perfect.f1 == 1.0);
  CHECK(perfect.mcc == 1.0);

  const MetricReport hand = binary_metrics({50, 40, 5, 5});
  CHECK(hand.accuracy == 0.9);
  CHECK(hand.recall == doctest::Approx(10.0 / 11).epsilon(1e-15));
  CHECK(hand.precision == doctest::Approx(10.0 / 11).epsilon(1e-15));
  CHECK(hand.f1 == doctest::Approx(10.0 / 11).epsilon(1e-15));

  CHECK_THROWS_AS(binary_metrics({0, 0, 0, 0}), DataError);
}

TEST_CASE("literal printed variants") {
  const ConfusionCounts c{50, 40, 5, 5};
  const MetricReport lit = binary_metrics(c, MetricMode::paper_literal);
  CHECK(lit.precision == doctest::Approx(40.0 / 45).epsilon(1e-15));
  const double denom = std::sqrt(55.0 * 10.0 * 45.0 * 45.0);
  CHECK(lit.mcc == doctest::Approx((50.0 * 40 - 25) / denom).epsilon(1e-15));
  CHECK(lit.accuracy == 0.9);
  CHECK(lit.mode == MetricMode::paper_literal);
}

TEST_CASE("degenerate denominators are flagged") {
  const MetricReport r = binary_metrics({0, 5, 0, 0});
  CHECK(r.recall == 0.0);
  CHECK(r.precision == 0.0);
  CHECK(r.mcc == 0.0);
  CHECK(!r.degenerate.empty());
}

TEST_CASE("random tuples stay in range and match the recount") {
  Rng rng(8);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng() % 60;
    std::vector<int> t(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = static_cast<int>(rng() % 2);
      p[i] = static_cast<int>(rng() % 2);
    }
    const MetricReport r = binary_metrics(confusion_counts(t, p));
    const auto ref = oracle::standard_metrics(oracle::recount(t, p));
    CHECK(std::abs(r.accuracy - ref[0]) <= 1e-12);
    CHECK(std::abs(r.recall - ref[1]) <= 1e-12);
    CHECK(std::abs(r.precision - ref[2]) <= 1e-12);
    CHECK(std::abs(r.f1 - ref[3]) <= 1e-12);
    CHECK(std::abs(r.mcc - ref[4]) <= 1e-12);
    for (double v : {r.accuracy, r.recall, r.precision, r.f1}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    CHECK(std::abs(r.mcc) <= 1.0 + 1e-12);
  }
}

TEST_CASE("complement symmetry") {
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const ConfusionCounts c{1 + rng() % 20, 1 + rng() % 20, 1 + rng() % 20, 1 + rng() % 20};
    const MetricReport r = binary_metrics(c);
    // swapping the positive class
    const MetricReport s = binary_metrics({c.tn, c.tp, c.fn, c.fp});
    CHECK(std::abs(r.mcc - s.mcc) <= 1e-12);
    CHECK(std::abs(s.recall - static_cast<double>(c.tn) / (c.tn + c.fp)) <= 1e-12);
    CHECK(std::abs(s.precision - static_cast<double>(c.tn) / (c.tn + c.fn)) <= 1e-12);
    // negating every prediction
    const MetricReport neg = binary_metrics({c.fn, c.fp, c.tn, c.tp});
    CHECK(std::abs(r.mcc + neg.mcc) <= 1e-12);
  }
}

TEST_CASE("multiclass") {
  const std::vector<int> t{0, 1, 2, 0, 1, 2};
  const MulticlassReport perfect = multiclass_metrics(t, t, 3);
  CHECK(perfect.macro.precision == 1.0);
  CHECK(perfect.macro.recall == 1.0);
  CHECK(perfect.macro.f1 == 1.0);

  const MulticlassReport hand = multiclass_metrics(std::vector<int>{0, 1, 2}, std::vector<int>{0, 1, 1}, 3);
  CHECK(hand.macro.recall == doctest::Approx(2.0 / 3).epsilon(1e-15));
  CHECK(hand.macro.accuracy == doctest::Approx(2.0 / 3).epsilon(1e-15));
  CHECK(hand.confusion[2][1] == 1);

  const std::vector<int> bt{0, 1, 1, 0, 1}, bp{0, 1, 0, 1, 1};
  const MulticlassReport two = multiclass_metrics(bt, bp, 2);
  const MetricReport neg = binary_metrics(confusion_counts(bt, bp, 0));
  CHECK(two.per_class[0].precision == neg.precision);
  CHECK(two.per_class[0].recall == neg.recall);
  CHECK(two.per_class[0].mcc == neg.mcc);

  CHECK_THROWS_AS(multiclass_metrics(std::vector<int>{3}, std::vector<int>{0}, 3), LabelError);
}

TEST_CASE("ranking curve examples") {
  const std::vector<int> truth{1, 1, 0, 1};
  const CurveSeries roc = ranking_curve(std::vector<double>{0.9, 0.8, 0.7, 0.6}, truth, CurveKind::roc);
  CHECK(std::abs(roc.auc - 2.0 / 3) <= 1e-12);
  CHECK(roc.points.front() == std::pair<double, double>{0, 0});
  CHECK(roc.points.back() == std::pair<double, double>{1, 1});

  const std::vector<int> sep{0, 0, 1, 1};
  CHECK(ranking_curve(std::vector<double>{0.1, 0.2, 0.3, 0.4}, sep, CurveKind::roc).auc == 1.0);
  CHECK(ranking_curve(std::vector<double>{5, 5, 5, 5}, sep, CurveKind::roc).auc == 0.5);
  CHECK_THROWS_AS(ranking_curve(std::vector<double>{1, 2}, std::vector<int>{1, 1}, CurveKind::roc),
                  DegenerateError);

  const CurveSeries pr = ranking_curve(std::vector<double>{0.9, 0.8, 0.7, 0.6}, truth, CurveKind::pr);
  CHECK(pr.points.front() == std::pair<double, double>{0, 1});
  for (std::size_t i = 1; i < pr.points.size(); ++i) CHECK(pr.points[i].first >= pr.points[i - 1].first);
  CHECK(std::abs(pr.auc - trapezoid_area(pr.points)) <= 1e-12);
}

TEST_CASE("auc equals the pair statistic") {
  Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 80;
    std::vector<double> s(n);
    std::vector<int> t(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng() % 7);
      t[i] = static_cast<int>(rng() % 2);
    }
    t[0] = 0;
    t[1] = 1;
    const double auc = ranking_curve(s, t, CurveKind::roc).auc;
    CHECK(std::abs(auc - oracle::mann_whitney(s, t)) <= 1e-12);
  }
}

TEST_CASE("curve csv") {
  CurveSeries c;
  c.points = {{0, 0}, {1, 1}};
  c.tag = "roc/svm";
  const CurveSeries curves[] = {c};
  CHECK(curves_csv(curves) == "kind,x,y\nroc/svm,0,0\nroc/svm,1,1\n");
}

}
