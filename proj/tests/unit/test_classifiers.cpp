#include <cmath>
#include <numeric>

#include "doctest.h"
#include "hybridboost/classifiers.hpp"
#include "hybridboost/errors.hpp"
#include "oracles.hpp"

using namespace hybridboost;
using namespace hybridboost::clf;

namespace {

double accuracy(const std::vector<int>& a, const std::vector<int>& b) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < a.size(); ++i) hit += a[i] == b[i];
  return static_cast<double>(hit) / static_cast<double>(a.size());
}

std::vector<int> signs(const std::vector<double>& f) {
  std::vector<int> out;
  for (double v : f) out.push_back(v >= 0 ? 1 : -1);
  return out;
}

// Three blobs 10 sigma apart.
void blobs3(std::size_t per_class, std::uint64_t seed, Matrix& X, std::vector<int>& y) {
  Rng rng(seed);
  const double centers[3][2] = {{0, 0}, {10, 0}, {0, 10}};
  X = Matrix(3 * per_class, 2);
  y.clear();
  for (std::size_t i = 0; i < 3 * per_class; ++i) {
    const int c = static_cast<int>(i % 3);
    X(i, 0) = centers[c][0] + standard_normal(rng);
    X(i, 1) = centers[c][1] + standard_normal(rng);
    y.push_back(c);
  }
}

}  // namespace

TEST_SUITE("classifiers") {

TEST_CASE("two point linear svm") {
  Matrix X(2, 2, std::vector<double>{-1, -1, 1, 1});
  const std::vector<int> y{-1, 1};
  const auto r = svm_train_binary(X, y, SvmConfig{});
  CHECK(signs(svm_decision(r.model, X)) == y);
  Matrix origin(1, 2, 0.0);
  CHECK(std::abs(svm_decision(r.model, origin)[0]) <= 1e-6);
  const auto f = svm_decision(r.model, X);
  CHECK(f[0] == doctest::Approx(-f[1]).epsilon(1e-9));
  CHECK(svm_decision(r.model, X) == f);
}

TEST_CASE("xor with a degree two polynomial kernel") {
  Matrix X(4, 2, std::vector<double>{-1, -1, -1, 1, 1, -1, 1, 1});
  const std::vector<int> y{1, -1, -1, 1};
  SvmConfig cfg;
  cfg.kernel.kind = KernelKind::polynomial;
  cfg.kernel.degree = 2;
  cfg.C = 10;
  const auto r = svm_train_binary(X, y, cfg);
  CHECK(signs(svm_decision(r.model, X)) == y);
}

TEST_CASE("separable blobs: accuracy, kkt and dual constraints") {
  Matrix X;
  std::vector<int> y;
  oracle::separable_blobs(200, 17, X, y);
  SvmConfig cfg;
  const auto r = svm_train_binary(X, y, cfg);
  CHECK(r.model.converged);
  CHECK(accuracy(signs(svm_decision(r.model, X)), y) == 1.0);
  CHECK(svm_kkt_violation(r.model, X, y, r.alphas) <= 1e-3);
  double sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    CHECK(r.alphas[i] >= 0.0);
    CHECK(r.alphas[i] <= cfg.C);
    sum += r.alphas[i] * y[i];
  }
  CHECK(std::abs(sum) <= 1e-6);

  // free support vectors sit on the margin
  const auto f = svm_decision(r.model, X);
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (r.alphas[i] > 1e-8 && r.alphas[i] < cfg.C - 1e-8) CHECK(std::abs(std::abs(f[i]) - 1.0) <= 1e-3);
  }
}

TEST_CASE("svm input checks") {
  Matrix X(3, 1, std::vector<double>{0, 1, 2});
  const std::vector<int> one{1, 1, 1};
  CHECK_THROWS_AS(svm_train_binary(X, one, SvmConfig{}), DegenerateError);
  SvmConfig bad;
  bad.C = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("one vs rest") {
  Matrix X;
  std::vector<int> y;
  blobs3(30, 3, X, y);
  const OvrSvmModel m = one_vs_rest(X, y, 3, SvmConfig{});
  CHECK(m.machines.size() == 3);
  Matrix T;
  std::vector<int> ty;
  blobs3(30, 4, T, ty);
  CHECK(accuracy(classifier_predict(ClassifierModel{m}, T).labels, ty) == 1.0);

  // two classes reduce to the binary machine
  Matrix X2;
  std::vector<int> s2;
  oracle::separable_blobs(40, 2, X2, s2);
  std::vector<int> l2;
  for (int v : s2) l2.push_back(v > 0 ? 1 : 0);
  const OvrSvmModel two = one_vs_rest(X2, l2, 2, SvmConfig{});
  const auto single = svm_train_binary(X2, s2, SvmConfig{});
  std::vector<int> expect;
  for (double v : svm_decision(single.model, X2)) expect.push_back(v >= 0 ? 1 : 0);
  CHECK(classifier_predict(ClassifierModel{two}, X2).labels == expect);

  std::vector<int> missing(y.size(), 0);
  missing[0] = 1;
  CHECK_THROWS_AS(one_vs_rest(X, missing, 3, SvmConfig{}), DegenerateError);
}

TEST_CASE("mlp") {
  Matrix X;
  std::vector<int> s;
  oracle::separable_blobs(100, 5, X, s);
  std::vector<int> y;
  for (int v : s) y.push_back(v > 0 ? 1 : 0);
  MlpConfig cfg;
  cfg.epochs = 50;
  const MlpModel m = mlp_train(X, y, 2, cfg, 1);
  CHECK(m == mlp_train(X, y, 2, cfg, 1));
  const Matrix p = mlp_predict_proba(m, X);
  for (std::size_t i = 0; i < p.rows(); ++i) CHECK(std::abs(p(i, 0) + p(i, 1) - 1.0) <= 1e-12);
  CHECK(accuracy(classifier_predict(ClassifierModel{m}, X).labels, y) >= 0.99);

  cfg.epochs = 0;
  const MlpModel init = mlp_train(X, y, 2, cfg, 1);
  CHECK(init.hidden.out_dim() == 100);
}

TEST_CASE("adaboost on threshold data") {
  Matrix X(6, 1, std::vector<double>{0, 1, 2, 3, 4, 5});
  const std::vector<int> y{-1, -1, -1, 1, 1, 1};
  const AdaBoostModel m = adaboost_m1_train(X, y, AdaBoostConfig{});
  REQUIRE(m.stumps.size() == 1);
  CHECK(m.stumps[0].error == 1e-10);
  CHECK(std::isfinite(m.stumps[0].alpha));
  CHECK(signs(adaboost_margin(m, X)) == y);
}

TEST_CASE("adaboost improves on interleaved data") {
  Matrix X(8, 1, std::vector<double>{0, 1, 2, 3, 4, 5, 6, 7});
  const std::vector<int> y{1, 1, -1, -1, 1, 1, -1, -1};
  auto train_error = [&](std::size_t rounds) {
    const AdaBoostModel m = adaboost_m1_train(X, y, AdaBoostConfig{rounds});
    for (const Stump& s : m.stumps) CHECK(s.error < 0.5);
    return 1.0 - accuracy(signs(adaboost_margin(m, X)), y);
  };
  CHECK(train_error(10) < train_error(1));
}

TEST_CASE("labels follow scores for every model type") {
  Matrix X;
  std::vector<int> s;
  oracle::separable_blobs(30, 8, X, s);
  std::vector<int> y;
  for (int v : s) y.push_back(v > 0 ? 1 : 0);
  MlpConfig mc;
  mc.epochs = 5;
  const ClassifierModel models[] = {one_vs_rest(X, y, 2, SvmConfig{}), mlp_train(X, y, 2, mc, 3),
                                    adaboost_m1_train(X, s, AdaBoostConfig{5})};
  for (const auto& m : models) {
    const Prediction p = classifier_predict(m, X);
    for (std::size_t i = 0; i < X.rows(); ++i) {
      const auto row = p.scores.row(i);
      int expect;
      if (row.size() == 1) expect = row[0] >= 0 ? 1 : 0;
      else expect = row[1] > row[0] ? 1 : 0;
      CHECK(p.labels[i] == expect);
    }
    CHECK(classifier_predict(m, X).labels == p.labels);
    CHECK(classifier_predict(m, Matrix(0, 2)).labels.empty());
    CHECK_THROWS_AS(classifier_predict(m, Matrix(1, 3)), DimensionError);
  }
}

TEST_CASE("ensemble vote") {
  const std::vector<std::vector<int>> votes{{1, 0, 1}, {1, 0, 0}, {0, 0, 1}};
  const std::vector<std::vector<double>> scores{{0.9, 0.1, 0.5}, {0.8, 0.2, 0.1}, {0.3, 0.0, 0.7}};
  const Vote v = ensemble_vote(votes, scores);
  CHECK(v.labels == std::vector<int>{1, 0, 1});
  CHECK(v.scores[0] == doctest::Approx((0.9 + 0.8 + 0.3) / 3));

  // even split: member 2 votes 0 with confidence 1 - 0.05
  const std::vector<std::vector<int>> even{{1}, {0}};
  const std::vector<std::vector<double>> conf{{0.6}, {0.05}};
  CHECK(ensemble_vote(even, conf).labels[0] == 0);

  CHECK_THROWS(ensemble_vote({}, {}));

  CHECK(min_max_scale(std::vector<double>{2, 2}) == std::vector<double>{0.5, 0.5});
  CHECK(min_max_scale(std::vector<double>{1, 3, 2}) == std::vector<double>{0, 1, 0.5});
}

TEST_CASE("majority soundness over random votes") {
  Rng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t members = 1 + rng() % 5;
    std::vector<std::vector<int>> v(members, std::vector<int>(1));
    std::vector<std::vector<double>> s(members, std::vector<double>(1));
    int ones = 0;
    for (std::size_t m = 0; m < members; ++m) {
      v[m][0] = static_cast<int>(rng() % 2);
      s[m][0] = uniform01(rng);
      ones += v[m][0];
    }
    const int label = ensemble_vote(v, s).labels[0];
    if (2 * ones > static_cast<int>(members)) CHECK(label == 1);
    if (2 * ones < static_cast<int>(members)) CHECK(label == 0);
  }
}

TEST_CASE("ensemble training and serialization") {
  Matrix X;
  std::vector<int> s;
  oracle::separable_blobs(40, 9, X, s);
  std::vector<int> y;
  for (int v : s) y.push_back(v > 0 ? 1 : 0);
  MlpConfig mc;
  mc.epochs = 10;
  const EnsembleModel e = ensemble_train(X, y, SvmConfig{}, mc, AdaBoostConfig{10}, 4);
  REQUIRE(e.members.size() == 3);
  CHECK(classifier_name(e.members[0]) == "svm");
  CHECK(classifier_name(e.members[1]) == "mlp");
  CHECK(classifier_name(e.members[2]) == "adaboost");
  CHECK(accuracy(ensemble_predict(e, X).vote.labels, y) == 1.0);

  const auto bytes = encode_ensemble(e);
  CHECK(decode_ensemble(bytes, "mem") == e);
  CHECK(encode_ensemble(decode_ensemble(bytes, "mem")) == bytes);
  for (const auto& m : e.members) {
    const auto b = encode_classifier(m);
    CHECK(decode_classifier(b, "mem") == m);
  }
  auto bad = bytes;
  bad[1] = 'X';
  CHECK_THROWS_AS(decode_ensemble(bad, "mem"), FormatError);
  auto cut = bytes;
  cut.pop_back();
  CHECK_THROWS_AS(decode_ensemble(cut, "mem"), CorruptionError);

  CHECK_THROWS_AS(to_signed(std::vector<int>{0, 2}), LabelError);
}

}
