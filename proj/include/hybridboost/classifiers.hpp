#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "hybridboost/layers.hpp"
#include "hybridboost/matrix.hpp"

namespace hybridboost::clf {

// ---- SVM ---------------------------------------------------------------------

enum class KernelKind { linear, polynomial, rbf };

struct KernelSpec {
  KernelKind kind = KernelKind::linear;
  int degree = 2;
  /// 0 selects 1 / dim at training time.
  double gamma = 0.0;
  double coef0 = 1.0;

  void validate() const;
  /// Copy with gamma filled in for `dim`-dimensional inputs.
  KernelSpec resolved(std::size_t dim) const;
  double operator()(std::span<const double> a, std::span<const double> b) const;

  bool operator==(const KernelSpec&) const = default;
};

std::string kernel_name(KernelKind kind);
KernelKind parse_kernel(const std::string& name);

struct SvmConfig {
  KernelSpec kernel;
  double C = 1.0;
  double tol = 1e-3;
  /// Iteration budget is max_passes * n pair updates.
  std::size_t max_passes = 50;

  void validate() const;
};

/// f(x) = sum_s coef_s K(sv_s, x) + bias, with coef_s = alpha_s * y_s.
struct SvmModel {
  KernelSpec kernel;
  double C = 1.0;
  Matrix support_vectors;
  std::vector<double> coef;
  double bias = 0.0;
  /// Final maximal KKT violation gap reached by the solver.
  double violation = 0.0;
  bool converged = true;

  std::size_t dim() const { return support_vectors.cols(); }
  bool operator==(const SvmModel&) const = default;
};

struct SvmTrainResult {
  SvmModel model;
  /// Dual variables for every training row (zero for non-support vectors).
  std::vector<double> alphas;
  std::size_t iterations = 0;
};

/// SMO on the soft-margin dual with maximal-violating-pair working sets and
/// second-order selection of the partner index. Stops once the KKT gap
/// (m - M) falls to `tol`, which bounds every point's margin violation by
/// `tol`. Labels must be +1 / -1. Throws DegenerateError when one class is
/// missing. Hitting the iteration budget leaves converged == false.
SvmTrainResult svm_train_binary(const Matrix& X, std::span<const int> y, const SvmConfig& config);

std::vector<double> svm_decision(const SvmModel& model, const Matrix& X);

/// Largest per-point KKT violation measured from the trained decision
/// function: alpha = 0 needs y f >= 1, 0 < alpha < C needs y f = 1, and
/// alpha = C needs y f <= 1.
double svm_kkt_violation(const SvmModel& model, const Matrix& X, std::span<const int> y,
                         std::span<const double> alphas);

/// One machine per class (class c against the rest).
struct OvrSvmModel {
  std::size_t num_classes = 0;
  std::vector<SvmModel> machines;

  bool operator==(const OvrSvmModel&) const = default;
};

/// Labels in [0, num_classes). With two classes the class-0 machine is the
/// exact negation of the class-1 machine, so predictions equal the single
/// binary machine's.
OvrSvmModel one_vs_rest(const Matrix& X, std::span<const int> labels, std::size_t num_classes,
                        const SvmConfig& config);

// ---- MLP -----------------------------------------------------------------------

struct MlpConfig {
  std::size_t hidden = 100;
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t epochs = 200;
  std::size_t batch_size = 32;

  void validate() const;
};

/// dense(hidden) -> ReLU -> dense(classes) -> softmax.
struct MlpModel {
  nn::DenseParams hidden;
  nn::DenseParams output;

  std::size_t dim() const { return hidden.in_dim(); }
  std::size_t num_classes() const { return output.out_dim(); }
  bool operator==(const MlpModel&) const = default;
};

MlpModel mlp_train(const Matrix& X, std::span<const int> labels, std::size_t num_classes,
                   const MlpConfig& config, std::uint64_t seed);
/// Row-wise class probabilities.
Matrix mlp_predict_proba(const MlpModel& model, const Matrix& X);

// ---- AdaBoost.M1 ---------------------------------------------------------------

/// h(x) = polarity if x[feature] > threshold, else -polarity.
struct Stump {
  std::size_t feature = 0;
  double threshold = 0.0;
  int polarity = 1;
  double alpha = 0.0;
  /// Weighted training error when the round was accepted (after clamping).
  double error = 0.0;

  int operator()(std::span<const double> x) const {
    return x[feature] > threshold ? polarity : -polarity;
  }
  bool operator==(const Stump&) const = default;
};

struct AdaBoostConfig {
  std::size_t rounds = 50;

  void validate() const;
};

struct AdaBoostModel {
  std::size_t dim = 0;
  std::vector<Stump> stumps;

  bool operator==(const AdaBoostModel&) const = default;
};

/// Binary AdaBoost.M1 over decision stumps with alpha = ln((1-e)/e) / 2 and e
/// clamped to [1e-10, 0.5). Stops when no stump beats 0.5 or after a stump
/// with zero training error. Labels must be +1 / -1.
AdaBoostModel adaboost_m1_train(const Matrix& X, std::span<const int> y,
                                const AdaBoostConfig& config);
/// Weighted stump margin sum_t alpha_t h_t(x).
std::vector<double> adaboost_margin(const AdaBoostModel& model, const Matrix& X);

// ---- uniform interface ---------------------------------------------------------

using ClassifierModel = std::variant<OvrSvmModel, MlpModel, AdaBoostModel>;

std::string classifier_name(const ClassifierModel& model);
std::size_t classifier_dim(const ClassifierModel& model);

struct Prediction {
  std::vector<int> labels;
  /// SVM: one decision value per class. MLP: class probabilities.
  /// AdaBoost: one column holding the stump margin.
  Matrix scores;
};

Prediction classifier_predict(const ClassifierModel& model, const Matrix& X);

/// Column of `prediction.scores` that ranks the positive class (label 1) in a
/// binary problem.
std::vector<double> positive_scores(const ClassifierModel& model, const Prediction& prediction);

/// Min-max scaling over the batch; a constant vector maps to 0.5.
std::vector<double> min_max_scale(std::span<const double> scores);

struct Vote {
  std::vector<int> labels;
  std::vector<double> scores;
};

/// Per-sample majority over member labels. An even split goes to the label
/// backed by the most confident member, where a member's confidence is its
/// scaled positive score s when it voted 1 and 1 - s otherwise (lowest label
/// on an exact tie). The ensemble score is the mean scaled positive score.
Vote ensemble_vote(std::span<const std::vector<int>> member_labels,
                   std::span<const std::vector<double>> member_scaled_scores);

struct EnsembleModel {
  std::vector<ClassifierModel> members;

  bool operator==(const EnsembleModel&) const = default;
};

struct EnsemblePrediction {
  Vote vote;
  std::vector<Prediction> members;
};

EnsemblePrediction ensemble_predict(const EnsembleModel& model, const Matrix& X);

/// Trains the default members (SVM, MLP, AdaBoost.M1) on binary labels
/// {0, 1}; member seeds are derived from `seed`.
EnsembleModel ensemble_train(const Matrix& X, std::span<const int> labels, const SvmConfig& svm,
                             const MlpConfig& mlp, const AdaBoostConfig& ada, std::uint64_t seed);

/// Maps {0, 1} labels to {-1, +1}; anything else is a LabelError.
std::vector<int> to_signed(std::span<const int> labels);

// ---- serialization -------------------------------------------------------------

inline constexpr std::uint32_t kClassifierFileVersion = 1;

/// "CLSF" file holding one classifier or an ensemble; layout in docs/formats.md.
std::vector<std::uint8_t> encode_classifier(const ClassifierModel& model);
std::vector<std::uint8_t> encode_ensemble(const EnsembleModel& model);
ClassifierModel decode_classifier(std::vector<std::uint8_t> bytes, const std::string& origin);
EnsembleModel decode_ensemble(std::vector<std::uint8_t> bytes, const std::string& origin);

void to_json(nlohmann::json& j, const KernelSpec& k);
void from_json(const nlohmann::json& j, KernelSpec& k);
void to_json(nlohmann::json& j, const SvmConfig& c);
void from_json(const nlohmann::json& j, SvmConfig& c);
void to_json(nlohmann::json& j, const MlpConfig& c);
void from_json(const nlohmann::json& j, MlpConfig& c);
void to_json(nlohmann::json& j, const AdaBoostConfig& c);
void from_json(const nlohmann::json& j, AdaBoostConfig& c);

}  // namespace hybridboost::clf
