#include "hybridboost/classifiers.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#include "hybridboost/binary_io.hpp"
#include "hybridboost/errors.hpp"
#include "hybridboost/parallel.hpp"
#include "hybridboost/rng.hpp"

namespace hybridboost::clf {

namespace {

void check_rows(const Matrix& X, std::size_t labels, const char* who) {
  if (X.rows() != labels) {
    throw AlignmentError(std::string(who) + ": " + std::to_string(X.rows()) + " rows vs " +
                         std::to_string(labels) + " labels");
  }
  if (X.rows() == 0) throw DataError(std::string(who) + ": empty training set");
}

void check_dim(std::size_t expected, const Matrix& X, const char* who) {
  if (X.rows() > 0 && X.cols() != expected) {
    throw DimensionError(std::string(who) + ": model expects " + std::to_string(expected) +
                         " features, got " + std::to_string(X.cols()));
  }
}

void check_signed(std::span<const int> y, const char* who) {
  bool pos = false, neg = false;
  for (int v : y) {
    if (v == 1) pos = true;
    else if (v == -1) neg = true;
    else throw LabelError(std::string(who) + ": labels must be +1 or -1, got " + std::to_string(v));
  }
  if (!pos || !neg) {
    throw DegenerateError(std::string(who) + ": training labels hold a single class");
  }
}

}  // namespace

// ---- kernels -------------------------------------------------------------------

std::string kernel_name(KernelKind kind) {
  switch (kind) {
    case KernelKind::linear: return "linear";
    case KernelKind::polynomial: return "polynomial";
    case KernelKind::rbf: return "rbf";
  }
  return "?";
}

KernelKind parse_kernel(const std::string& name) {
  if (name == "linear") return KernelKind::linear;
  if (name == "polynomial" || name == "poly") return KernelKind::polynomial;
  if (name == "rbf") return KernelKind::rbf;
  throw ConfigError("unknown kernel '" + name + "'");
}

void KernelSpec::validate() const {
  if (degree < 1) throw ConfigError("kernel degree must be >= 1");
  if (gamma < 0.0 || !std::isfinite(gamma)) throw ConfigError("kernel gamma must be positive (0 = 1/dim)");
}

KernelSpec KernelSpec::resolved(std::size_t dim) const {
  validate();
  KernelSpec k = *this;
  if (k.gamma == 0.0) k.gamma = 1.0 / static_cast<double>(std::max<std::size_t>(dim, 1));
  return k;
}

double KernelSpec::operator()(std::span<const double> a, std::span<const double> b) const {
  if (kind == KernelKind::rbf) {
    double d2 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double d = a[i] - b[i];
      d2 += d * d;
    }
    return std::exp(-gamma * d2);
  }
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  if (kind == KernelKind::linear) return dot;
  const double base = gamma * dot + coef0;
  double r = 1.0;
  for (int i = 0; i < degree; ++i) r *= base;
  return r;
}

void SvmConfig::validate() const {
  kernel.validate();
  if (!(C > 0.0)) throw ConfigError("svm C must be positive");
  if (!(tol > 0.0)) throw ConfigError("svm tol must be positive");
  if (max_passes == 0) throw ConfigError("svm max_passes must be positive");
}

// ---- SMO -----------------------------------------------------------------------

SvmTrainResult svm_train_binary(const Matrix& X, std::span<const int> y, const SvmConfig& config) {
  config.validate();
  check_rows(X, y.size(), "svm_train_binary");
  check_signed(y, "svm_train_binary");
  const std::size_t n = X.rows();
  const KernelSpec kernel = config.kernel.resolved(X.cols());
  const double C = config.C;
  constexpr double kTau = 1e-12;

  // Q_ij = y_i y_j K(x_i, x_j), computed once.
  std::vector<double> Q(n * n);
  parallel_for(n, [&](std::size_t i) {
    for (std::size_t j = 0; j < n; ++j) {
      Q[i * n + j] = static_cast<double>(y[i] * y[j]) * kernel(X.row(i), X.row(j));
    }
  });

  std::vector<double> alpha(n, 0.0);
  std::vector<double> G(n, -1.0);  // gradient of 1/2 a'Qa - e'a
  auto in_up = [&](std::size_t t) { return y[t] == 1 ? alpha[t] < C : alpha[t] > 0.0; };
  auto in_low = [&](std::size_t t) { return y[t] == 1 ? alpha[t] > 0.0 : alpha[t] < C; };

  const std::size_t budget = config.max_passes * n;
  SvmTrainResult result;
  double gap = std::numeric_limits<double>::infinity();
  std::size_t iter = 0;
  for (;; ++iter) {
    // i maximizes -y_t G_t over I_up; M is the minimum of the same over I_low.
    double m = -std::numeric_limits<double>::infinity();
    double M = std::numeric_limits<double>::infinity();
    std::size_t i = n;
    for (std::size_t t = 0; t < n; ++t) {
      const double f = -y[t] * G[t];
      if (in_up(t) && f > m) {
        m = f;
        i = t;
      }
      if (in_low(t) && f < M) M = f;
    }
    gap = m - M;
    if (i == n || gap <= config.tol || iter >= budget) break;

    std::size_t j = n;
    double best = std::numeric_limits<double>::infinity();
    const double* Qi = &Q[i * n];
    for (std::size_t t = 0; t < n; ++t) {
      if (!in_low(t)) continue;
      const double b = m + y[t] * G[t];
      if (b <= 0.0) continue;
      double a = Qi[i] + Q[t * n + t] - 2.0 * y[i] * y[t] * Qi[t];
      if (a <= 0.0) a = kTau;
      const double obj = -(b * b) / a;
      if (obj < best) {
        best = obj;
        j = t;
      }
    }
    if (j == n) break;

    const double* Qj = &Q[j * n];
    const double ai_old = alpha[i], aj_old = alpha[j];
    if (y[i] != y[j]) {
      double quad = Qi[i] + Qj[j] + 2.0 * Qi[j];
      if (quad <= 0.0) quad = kTau;
      const double delta = (-G[i] - G[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0.0) {
        if (alpha[j] < 0.0) { alpha[j] = 0.0; alpha[i] = diff; }
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0;
        alpha[j] = -diff;
      }
      if (diff > 0.0) {
        if (alpha[i] > C) { alpha[i] = C; alpha[j] = C - diff; }
      } else if (alpha[j] > C) {
        alpha[j] = C;
        alpha[i] = C + diff;
      }
    } else {
      double quad = Qi[i] + Qj[j] - 2.0 * Qi[j];
      if (quad <= 0.0) quad = kTau;
      const double delta = (G[i] - G[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > C) {
        if (alpha[i] > C) { alpha[i] = C; alpha[j] = sum - C; }
        if (alpha[j] > C) { alpha[j] = C; alpha[i] = sum - C; }
      } else {
        if (alpha[j] < 0.0) { alpha[j] = 0.0; alpha[i] = sum; }
        if (alpha[i] < 0.0) { alpha[i] = 0.0; alpha[j] = sum; }
      }
    }
    const double di = alpha[i] - ai_old, dj = alpha[j] - aj_old;
    for (std::size_t t = 0; t < n; ++t) G[t] += Qi[t] * di + Qj[t] * dj;
  }

  // Bias: mean of -y_t G_t over free vectors, else the midpoint of [M, m].
  double free_sum = 0.0, ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  std::size_t free_count = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double f = -y[t] * G[t];
    if (alpha[t] > 0.0 && alpha[t] < C) {
      free_sum += f;
      ++free_count;
    } else if (in_up(t)) {
      lb = std::max(lb, f);
    } else {
      ub = std::min(ub, f);
    }
  }
  SvmModel& model = result.model;
  model.kernel = kernel;
  model.C = C;
  model.bias = free_count > 0 ? free_sum / static_cast<double>(free_count) : (ub + lb) / 2.0;
  model.violation = gap;
  model.converged = gap <= config.tol;

  std::vector<std::size_t> support;
  for (std::size_t t = 0; t < n; ++t) {
    if (alpha[t] > 0.0) support.push_back(t);
  }
  model.support_vectors = X.select_rows(support);
  for (std::size_t t : support) model.coef.push_back(alpha[t] * y[t]);
  result.alphas = std::move(alpha);
  result.iterations = iter;
  return result;
}

std::vector<double> svm_decision(const SvmModel& model, const Matrix& X) {
  check_dim(model.dim(), X, "svm_decision");
  std::vector<double> out(X.rows());
  parallel_for(X.rows(), [&](std::size_t r) {
    double f = model.bias;
    for (std::size_t s = 0; s < model.coef.size(); ++s) {
      f += model.coef[s] * model.kernel(model.support_vectors.row(s), X.row(r));
    }
    out[r] = f;
  });
  return out;
}

double svm_kkt_violation(const SvmModel& model, const Matrix& X, std::span<const int> y,
                         std::span<const double> alphas) {
  const std::vector<double> f = svm_decision(model, X);
  double worst = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double margin = y[i] * f[i];
    double v;
    if (alphas[i] <= 0.0) v = std::max(0.0, 1.0 - margin);
    else if (alphas[i] >= model.C) v = std::max(0.0, margin - 1.0);
    else v = std::abs(margin - 1.0);
    worst = std::max(worst, v);
  }
  return worst;
}

OvrSvmModel one_vs_rest(const Matrix& X, std::span<const int> labels, std::size_t num_classes,
                        const SvmConfig& config) {
  check_rows(X, labels.size(), "one_vs_rest");
  if (num_classes < 2) throw ConfigError("one_vs_rest needs at least two classes");
  std::vector<std::size_t> counts(num_classes, 0);
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= num_classes) {
      throw LabelError("one_vs_rest: label " + std::to_string(l) + " outside [0," +
                       std::to_string(num_classes) + ")");
    }
    ++counts[static_cast<std::size_t>(l)];
  }
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (counts[c] == 0) throw DegenerateError("one_vs_rest: class " + std::to_string(c) + " is missing");
  }
  OvrSvmModel m;
  m.num_classes = num_classes;
  auto machine_for = [&](int c) {
    std::vector<int> y(labels.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = labels[i] == c ? 1 : -1;
    return svm_train_binary(X, y, config).model;
  };
  if (num_classes == 2) {
    SvmModel pos = machine_for(1);
    SvmModel neg = pos;
    for (double& c : neg.coef) c = -c;
    neg.bias = -neg.bias;
    m.machines = {std::move(neg), std::move(pos)};
  } else {
    for (std::size_t c = 0; c < num_classes; ++c) m.machines.push_back(machine_for(static_cast<int>(c)));
  }
  return m;
}

// ---- MLP -----------------------------------------------------------------------

void MlpConfig::validate() const {
  if (hidden == 0) throw ConfigError("mlp hidden width must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("mlp learning_rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("mlp momentum must lie in [0,1)");
  if (batch_size == 0) throw ConfigError("mlp batch_size must be positive");
}

namespace {

Tensor rows_tensor(const Matrix& X, std::span<const std::size_t> rows) {
  Tensor t({rows.size(), X.cols()});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(X.row(rows[i]).begin(), X.row(rows[i]).end(),
              t.data().begin() + static_cast<std::ptrdiff_t>(i * X.cols()));
  }
  return t;
}

nn::DenseParams he_dense(std::size_t out, std::size_t in, Rng& rng) {
  nn::DenseParams p{Tensor({out, in}), std::vector<double>(out, 0.0)};
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(in)));
  for (double& v : p.weights.data()) v = dist(rng);
  return p;
}

}  // namespace

MlpModel mlp_train(const Matrix& X, std::span<const int> labels, std::size_t num_classes,
                   const MlpConfig& config, std::uint64_t seed) {
  config.validate();
  check_rows(X, labels.size(), "mlp_train");
  if (num_classes < 2) throw ConfigError("mlp_train needs at least two classes");
  Rng rng(seed);
  MlpModel m{he_dense(config.hidden, X.cols(), rng), he_dense(num_classes, config.hidden, rng)};

  std::array<std::span<double>, 4> params{m.hidden.weights.data(), std::span(m.hidden.bias),
                                          m.output.weights.data(), std::span(m.output.bias)};
  std::array<std::vector<double>, 4> velocity;
  for (std::size_t p = 0; p < 4; ++p) velocity[p].assign(params[p].size(), 0.0);

  std::vector<std::size_t> order(X.rows());
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const std::span<const std::size_t> rows(order.data() + start, end - start);
      const Tensor in = rows_tensor(X, rows);
      std::vector<int> y;
      for (std::size_t r : rows) y.push_back(labels[r]);
      const Tensor pre = nn::dense(in, m.hidden);
      const Tensor act = nn::relu(pre);
      const nn::SoftmaxCrossEntropy ce = nn::softmax_cross_entropy(nn::dense(act, m.output), y);
      nn::DenseGrads g_out = nn::dense_backward(act, m.output, ce.grad);
      nn::DenseGrads g_hid = nn::dense_backward(in, m.hidden, nn::relu_backward(pre, g_out.input));
      const std::array<std::span<const double>, 4> grads{g_hid.weights.data(), g_hid.bias,
                                                         g_out.weights.data(), g_out.bias};
      for (std::size_t p = 0; p < 4; ++p) {
        for (std::size_t i = 0; i < params[p].size(); ++i) {
          velocity[p][i] = config.momentum * velocity[p][i] - config.learning_rate * grads[p][i];
          params[p][i] += velocity[p][i];
        }
      }
    }
    for (const auto& p : params) {
      for (double v : p) {
        if (!std::isfinite(v)) {
          throw ConvergenceError("mlp training diverged in epoch " + std::to_string(epoch),
                                 std::numeric_limits<double>::infinity());
        }
      }
    }
  }
  return m;
}

Matrix mlp_predict_proba(const MlpModel& model, const Matrix& X) {
  check_dim(model.dim(), X, "mlp_predict_proba");
  Matrix out(X.rows(), model.num_classes());
  if (X.rows() == 0) return out;
  std::vector<std::size_t> rows(X.rows());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  const Tensor p =
      nn::softmax(nn::dense(nn::relu(nn::dense(rows_tensor(X, rows), model.hidden)), model.output));
  std::copy(p.data().begin(), p.data().end(), out.data().begin());
  return out;
}

// ---- AdaBoost.M1 ---------------------------------------------------------------

void AdaBoostConfig::validate() const {
  if (rounds == 0) throw ConfigError("adaboost rounds must be positive");
}

AdaBoostModel adaboost_m1_train(const Matrix& X, std::span<const int> y,
                                const AdaBoostConfig& config) {
  config.validate();
  check_rows(X, y.size(), "adaboost_m1_train");
  check_signed(y, "adaboost_m1_train");
  const std::size_t n = X.rows(), d = X.cols();
  constexpr double kMinError = 1e-10;

  std::vector<std::vector<std::size_t>> sorted(d);
  for (std::size_t f = 0; f < d; ++f) {
    auto& idx = sorted[f];
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return X(a, f) < X(b, f); });
  }

  AdaBoostModel model;
  model.dim = d;
  std::vector<double> w(n, 1.0 / static_cast<double>(n));
  for (std::size_t round = 0; round < config.rounds; ++round) {
    double total_pos = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (y[i] == 1) total_pos += w[i];
    }
    // For polarity +1 and threshold between sorted positions k-1 and k, the
    // error is (positive weight at or below) + (negative weight above).
    Stump best;
    double best_err = std::numeric_limits<double>::infinity();
    std::vector<double> feature_best(d, std::numeric_limits<double>::infinity());
    std::vector<Stump> feature_stump(d);
    parallel_for(d, [&](std::size_t f) {
      const auto& idx = sorted[f];
      double pos_below = 0.0, neg_below = 0.0;
      const double total_neg = 1.0 - total_pos;
      auto consider = [&](double threshold) {
        const double err_plus = pos_below + (total_neg - neg_below);
        const double err_minus = 1.0 - err_plus;
        if (err_plus < feature_best[f]) {
          feature_best[f] = err_plus;
          feature_stump[f] = {f, threshold, 1, 0.0, 0.0};
        }
        if (err_minus < feature_best[f]) {
          feature_best[f] = err_minus;
          feature_stump[f] = {f, threshold, -1, 0.0, 0.0};
        }
      };
      consider(X(idx[0], f) - 1.0);
      for (std::size_t k = 0; k < n; ++k) {
        if (y[idx[k]] == 1) pos_below += w[idx[k]];
        else neg_below += w[idx[k]];
        if (k + 1 < n && X(idx[k + 1], f) == X(idx[k], f)) continue;
        if (k + 1 < n) consider((X(idx[k], f) + X(idx[k + 1], f)) / 2.0);
      }
    });
    for (std::size_t f = 0; f < d; ++f) {
      if (feature_best[f] < best_err) {
        best_err = feature_best[f];
        best = feature_stump[f];
      }
    }
    if (!(best_err < 0.5)) break;
    const double eps = std::max(best_err, kMinError);
    best.error = eps;
    best.alpha = 0.5 * std::log((1.0 - eps) / eps);
    model.stumps.push_back(best);
    if (best_err <= 0.0) break;

    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      w[i] *= std::exp(-best.alpha * y[i] * best(X.row(i)));
      sum += w[i];
    }
    for (double& v : w) v /= sum;
  }
  return model;
}

std::vector<double> adaboost_margin(const AdaBoostModel& model, const Matrix& X) {
  check_dim(model.dim, X, "adaboost_margin");
  std::vector<double> out(X.rows(), 0.0);
  for (std::size_t r = 0; r < X.rows(); ++r) {
    for (const Stump& s : model.stumps) out[r] += s.alpha * s(X.row(r));
  }
  return out;
}

// ---- uniform interface ---------------------------------------------------------

std::vector<int> to_signed(std::span<const int> labels) {
  std::vector<int> y(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) {
      throw LabelError("binary classifier expects labels 0/1, got " + std::to_string(labels[i]));
    }
    y[i] = labels[i] == 1 ? 1 : -1;
  }
  return y;
}

std::string classifier_name(const ClassifierModel& model) {
  return std::visit(
      [](const auto& m) -> std::string {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, OvrSvmModel>) return "svm";
        else if constexpr (std::is_same_v<T, MlpModel>) return "mlp";
        else return "adaboost";
      },
      model);
}

std::size_t classifier_dim(const ClassifierModel& model) {
  return std::visit(
      [](const auto& m) -> std::size_t {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, OvrSvmModel>) return m.machines.at(0).dim();
        else if constexpr (std::is_same_v<T, MlpModel>) return m.dim();
        else return m.dim;
      },
      model);
}

namespace {
std::vector<int> row_argmax(const Matrix& scores) {
  std::vector<int> labels(scores.rows());
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    const auto row = scores.row(r);
    labels[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return labels;
}
}  // namespace

Prediction classifier_predict(const ClassifierModel& model, const Matrix& X) {
  check_dim(classifier_dim(model), X, "classifier_predict");
  Prediction p;
  if (const auto* svm = std::get_if<OvrSvmModel>(&model)) {
    p.scores = Matrix(X.rows(), svm->num_classes);
    for (std::size_t c = 0; c < svm->num_classes; ++c) {
      const auto f = svm_decision(svm->machines[c], X);
      for (std::size_t r = 0; r < X.rows(); ++r) p.scores(r, c) = f[r];
    }
    p.labels = row_argmax(p.scores);
  } else if (const auto* mlp = std::get_if<MlpModel>(&model)) {
    p.scores = mlp_predict_proba(*mlp, X);
    p.labels = row_argmax(p.scores);
  } else {
    const auto margin = adaboost_margin(std::get<AdaBoostModel>(model), X);
    p.scores = Matrix(X.rows(), 1, margin);
    for (double m : margin) p.labels.push_back(m > 0.0 ? 1 : 0);
  }
  return p;
}

std::vector<double> positive_scores(const ClassifierModel& model, const Prediction& prediction) {
  const std::size_t col = std::holds_alternative<AdaBoostModel>(model) ? 0 : 1;
  if (prediction.scores.cols() <= col) {
    throw DimensionError("positive_scores needs a binary model");
  }
  std::vector<double> s(prediction.scores.rows());
  for (std::size_t r = 0; r < s.size(); ++r) s[r] = prediction.scores(r, col);
  return s;
}

std::vector<double> min_max_scale(std::span<const double> scores) {
  if (scores.empty()) return {};
  const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
  const double range = *hi - *lo;
  std::vector<double> out(scores.size(), 0.5);
  if (range > 0.0) {
    for (std::size_t i = 0; i < scores.size(); ++i) out[i] = (scores[i] - *lo) / range;
  }
  return out;
}

Vote ensemble_vote(std::span<const std::vector<int>> member_labels,
                   std::span<const std::vector<double>> member_scaled_scores) {
  if (member_labels.empty()) throw ConfigError("ensemble_vote needs at least one member");
  if (member_scaled_scores.size() != member_labels.size()) {
    throw AlignmentError("ensemble_vote: label and score member counts differ");
  }
  const std::size_t n = member_labels[0].size();
  for (std::size_t m = 0; m < member_labels.size(); ++m) {
    if (member_labels[m].size() != n || member_scaled_scores[m].size() != n) {
      throw AlignmentError("ensemble_vote: member " + std::to_string(m) + " has a different length");
    }
  }
  Vote v;
  v.labels.resize(n);
  v.scores.resize(n);
  const auto members = static_cast<double>(member_labels.size());
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::pair<int, std::size_t>> tally;  // (label, votes)
    double score_sum = 0.0;
    for (std::size_t m = 0; m < member_labels.size(); ++m) {
      const int l = member_labels[m][i];
      auto it = std::find_if(tally.begin(), tally.end(), [&](const auto& t) { return t.first == l; });
      if (it == tally.end()) tally.emplace_back(l, 1);
      else ++it->second;
      score_sum += member_scaled_scores[m][i];
    }
    std::size_t top = 0;
    for (const auto& t : tally) top = std::max(top, t.second);
    int winner = std::numeric_limits<int>::max();
    double winner_conf = -1.0;
    for (const auto& [label, votes] : tally) {
      if (votes != top) continue;
      double conf = -1.0;
      for (std::size_t m = 0; m < member_labels.size(); ++m) {
        if (member_labels[m][i] != label) continue;
        const double s = member_scaled_scores[m][i];
        conf = std::max(conf, label == 1 ? s : 1.0 - s);
      }
      if (conf > winner_conf || (conf == winner_conf && label < winner)) {
        winner = label;
        winner_conf = conf;
      }
    }
    v.labels[i] = winner;
    v.scores[i] = score_sum / members;
  }
  return v;
}

EnsemblePrediction ensemble_predict(const EnsembleModel& model, const Matrix& X) {
  if (model.members.empty()) throw ConfigError("ensemble has no members");
  EnsemblePrediction out;
  std::vector<std::vector<int>> labels;
  std::vector<std::vector<double>> scaled;
  for (const auto& member : model.members) {
    Prediction p = classifier_predict(member, X);
    labels.push_back(p.labels);
    scaled.push_back(min_max_scale(positive_scores(member, p)));
    out.members.push_back(std::move(p));
  }
  out.vote = ensemble_vote(labels, scaled);
  return out;
}

EnsembleModel ensemble_train(const Matrix& X, std::span<const int> labels, const SvmConfig& svm,
                             const MlpConfig& mlp, const AdaBoostConfig& ada, std::uint64_t seed) {
  const std::vector<int> y = to_signed(labels);
  EnsembleModel e;
  e.members.emplace_back(one_vs_rest(X, labels, 2, svm));
  e.members.emplace_back(mlp_train(X, labels, 2, mlp, derive_seed(seed, 101)));
  e.members.emplace_back(adaboost_m1_train(X, y, ada));
  return e;
}

// ---- serialization -------------------------------------------------------------

namespace {

constexpr std::string_view kMagic = "CLSF";
enum class Tag : std::uint32_t { svm = 0, mlp = 1, adaboost = 2, ensemble = 3 };

void put_matrix(io::ByteWriter& w, const Matrix& m) {
  w.u32(static_cast<std::uint32_t>(m.rows()));
  w.u32(static_cast<std::uint32_t>(m.cols()));
  w.f64s(m.data());
}

Matrix get_matrix(io::ByteReader& r) {
  const std::size_t rows = r.u32(), cols = r.u32();
  r.need(rows * cols * sizeof(double));
  Matrix m(rows, cols);
  r.f64s(m.data());
  return m;
}

void put_dense(io::ByteWriter& w, const nn::DenseParams& p) {
  w.u32(static_cast<std::uint32_t>(p.out_dim()));
  w.u32(static_cast<std::uint32_t>(p.in_dim()));
  w.f64s(p.weights.data());
  w.f64s(p.bias);
}

nn::DenseParams get_dense(io::ByteReader& r) {
  const std::size_t out = r.u32(), in = r.u32();
  if (out == 0 || in == 0) throw FormatError(r.origin() + ": empty dense layer");
  r.need((out * in + out) * sizeof(double));
  nn::DenseParams p{Tensor({out, in}), std::vector<double>(out)};
  r.f64s(p.weights.data());
  r.f64s(p.bias);
  return p;
}

void put_model(io::ByteWriter& w, const ClassifierModel& model) {
  if (const auto* svm = std::get_if<OvrSvmModel>(&model)) {
    w.u32(static_cast<std::uint32_t>(Tag::svm));
    w.u32(static_cast<std::uint32_t>(svm->num_classes));
    w.u32(static_cast<std::uint32_t>(svm->machines.size()));
    for (const auto& m : svm->machines) {
      w.u32(static_cast<std::uint32_t>(m.kernel.kind));
      w.i32(m.kernel.degree);
      w.f64(m.kernel.gamma);
      w.f64(m.kernel.coef0);
      w.f64(m.C);
      w.f64(m.bias);
      w.f64(m.violation);
      w.u32(m.converged ? 1 : 0);
      put_matrix(w, m.support_vectors);
      w.f64s(m.coef);
    }
  } else if (const auto* mlp = std::get_if<MlpModel>(&model)) {
    w.u32(static_cast<std::uint32_t>(Tag::mlp));
    put_dense(w, mlp->hidden);
    put_dense(w, mlp->output);
  } else {
    const auto& ada = std::get<AdaBoostModel>(model);
    w.u32(static_cast<std::uint32_t>(Tag::adaboost));
    w.u32(static_cast<std::uint32_t>(ada.dim));
    w.u32(static_cast<std::uint32_t>(ada.stumps.size()));
    for (const auto& s : ada.stumps) {
      w.u32(static_cast<std::uint32_t>(s.feature));
      w.f64(s.threshold);
      w.i32(s.polarity);
      w.f64(s.alpha);
      w.f64(s.error);
    }
  }
}

ClassifierModel get_model(io::ByteReader& r, std::uint32_t tag) {
  switch (static_cast<Tag>(tag)) {
    case Tag::svm: {
      OvrSvmModel m;
      m.num_classes = r.u32();
      const std::size_t count = r.u32();
      if (count == 0 || count != m.num_classes) {
        throw FormatError(r.origin() + ": svm machine count " + std::to_string(count) +
                          " does not match " + std::to_string(m.num_classes) + " classes");
      }
      for (std::size_t c = 0; c < count; ++c) {
        SvmModel s;
        const std::uint32_t kind = r.u32();
        if (kind > 2) throw FormatError(r.origin() + ": unknown kernel kind " + std::to_string(kind));
        s.kernel.kind = static_cast<KernelKind>(kind);
        s.kernel.degree = r.i32();
        s.kernel.gamma = r.f64();
        s.kernel.coef0 = r.f64();
        s.C = r.f64();
        s.bias = r.f64();
        s.violation = r.f64();
        s.converged = r.u32() != 0;
        s.support_vectors = get_matrix(r);
        s.coef.resize(s.support_vectors.rows());
        r.f64s(s.coef);
        m.machines.push_back(std::move(s));
      }
      return m;
    }
    case Tag::mlp: {
      MlpModel m;
      m.hidden = get_dense(r);
      m.output = get_dense(r);
      if (m.output.in_dim() != m.hidden.out_dim()) {
        throw FormatError(r.origin() + ": mlp layer widths disagree");
      }
      return m;
    }
    case Tag::adaboost: {
      AdaBoostModel m;
      m.dim = r.u32();
      const std::size_t count = r.u32();
      r.need(count * (4 + 8 + 4 + 8 + 8));
      for (std::size_t i = 0; i < count; ++i) {
        Stump s;
        s.feature = r.u32();
        s.threshold = r.f64();
        s.polarity = r.i32();
        s.alpha = r.f64();
        s.error = r.f64();
        if (s.feature >= m.dim) throw FormatError(r.origin() + ": stump feature out of range");
        m.stumps.push_back(s);
      }
      return m;
    }
    default:
      throw FormatError(r.origin() + ": unknown classifier tag " + std::to_string(tag));
  }
}

io::ByteWriter header() {
  io::ByteWriter w;
  w.magic(kMagic);
  w.u32(kClassifierFileVersion);
  return w;
}

io::ByteReader open(std::vector<std::uint8_t> bytes, const std::string& origin) {
  io::ByteReader r(std::move(bytes), origin);
  r.expect_magic(kMagic);
  r.expect_version(kClassifierFileVersion);
  return r;
}

}  // namespace

std::vector<std::uint8_t> encode_classifier(const ClassifierModel& model) {
  io::ByteWriter w = header();
  put_model(w, model);
  return w.bytes();
}

std::vector<std::uint8_t> encode_ensemble(const EnsembleModel& model) {
  io::ByteWriter w = header();
  w.u32(static_cast<std::uint32_t>(Tag::ensemble));
  w.u32(static_cast<std::uint32_t>(model.members.size()));
  for (const auto& m : model.members) put_model(w, m);
  return w.bytes();
}

ClassifierModel decode_classifier(std::vector<std::uint8_t> bytes, const std::string& origin) {
  io::ByteReader r = open(std::move(bytes), origin);
  const std::uint32_t tag = r.u32();
  if (tag == static_cast<std::uint32_t>(Tag::ensemble)) {
    throw FormatError(origin + ": file holds an ensemble, not a single classifier");
  }
  ClassifierModel m = get_model(r, tag);
  r.expect_end();
  return m;
}

EnsembleModel decode_ensemble(std::vector<std::uint8_t> bytes, const std::string& origin) {
  io::ByteReader r = open(std::move(bytes), origin);
  if (r.u32() != static_cast<std::uint32_t>(Tag::ensemble)) {
    throw FormatError(origin + ": file does not hold an ensemble");
  }
  EnsembleModel e;
  const std::size_t count = r.u32();
  for (std::size_t i = 0; i < count; ++i) e.members.push_back(get_model(r, r.u32()));
  r.expect_end();
  return e;
}

// ---- JSON ----------------------------------------------------------------------

namespace {
template <class T>
void opt(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(out);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}
}  // namespace

void to_json(nlohmann::json& j, const KernelSpec& k) {
  j = {{"kind", kernel_name(k.kind)}, {"degree", k.degree}, {"gamma", k.gamma}, {"coef0", k.coef0}};
}

void from_json(const nlohmann::json& j, KernelSpec& k) {
  if (j.contains("kind")) k.kind = parse_kernel(j.at("kind").get<std::string>());
  opt(j, "degree", k.degree);
  opt(j, "gamma", k.gamma);
  opt(j, "coef0", k.coef0);
}

void to_json(nlohmann::json& j, const SvmConfig& c) {
  j = {{"kernel", c.kernel}, {"C", c.C}, {"tol", c.tol}, {"max_passes", c.max_passes}};
}

void from_json(const nlohmann::json& j, SvmConfig& c) {
  if (j.contains("kernel")) from_json(j.at("kernel"), c.kernel);
  opt(j, "C", c.C);
  opt(j, "tol", c.tol);
  opt(j, "max_passes", c.max_passes);
}

void to_json(nlohmann::json& j, const MlpConfig& c) {
  j = {{"hidden", c.hidden},
       {"learning_rate", c.learning_rate},
       {"momentum", c.momentum},
       {"epochs", c.epochs},
       {"batch_size", c.batch_size}};
}

void from_json(const nlohmann::json& j, MlpConfig& c) {
  opt(j, "hidden", c.hidden);
  opt(j, "learning_rate", c.learning_rate);
  opt(j, "momentum", c.momentum);
  opt(j, "epochs", c.epochs);
  opt(j, "batch_size", c.batch_size);
}

void to_json(nlohmann::json& j, const AdaBoostConfig& c) { j = {{"rounds", c.rounds}}; }

void from_json(const nlohmann::json& j, AdaBoostConfig& c) { opt(j, "rounds", c.rounds); }

}  // namespace hybridboost::clf
