#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "json.hpp"

#include "hybridboost/augment.hpp"
#include "hybridboost/dataset.hpp"
#include "hybridboost/layers.hpp"
#include "hybridboost/matrix.hpp"

namespace hybridboost::renet {

/// How each block combines its region (average) and edge (max) pooling.
enum class PoolingMode {
  parallel_concat,  // both pools on every block, concatenated along channels
  alternating,      // average on even blocks, max on odd blocks
};

struct BrainReNetConfig {
  std::size_t input_height = 64;
  std::size_t input_width = 64;
  std::size_t num_classes = 2;
  std::vector<std::size_t> conv_channels{8, 16, 32, 32, 64, 64};
  std::size_t kernel_height = 3;
  std::size_t kernel_width = 3;
  std::size_t pool_window = 2;
  std::size_t pool_stride = 2;
  std::size_t fc1_width = 128;
  double dropout_rate = 0.5;
  PoolingMode pooling = PoolingMode::parallel_concat;
  double bn_epsilon = 1e-5;
  double bn_momentum = 0.1;
  /// Permits fewer than six blocks. Only used by gradient tests.
  bool allow_reduced_depth = false;

  std::size_t num_blocks() const { return conv_channels.size(); }
  /// Throws ConfigError when invalid, including inputs too small for every
  /// block's pooling to leave an extent >= 1.
  void validate() const;
  /// Spatial extents entering block 0, then after each block.
  std::vector<std::pair<std::size_t, std::size_t>> spatial_trace() const;
  /// Channels leaving block i (doubled under parallel_concat).
  std::size_t block_output_channels(std::size_t block) const;
  std::size_t flatten_length() const;
  /// Trainable parameter count:
  ///   sum_i [C_out_i * C_in_i * r * s + 3 * C_out_i]   (filters, bias, gamma, beta)
  ///   + flat * fc1 + fc1 + fc1 * classes + classes
  /// where C_in_0 = 1 and C_in_{i+1} is block i's output channel count.
  std::size_t parameter_count() const;

  bool operator==(const BrainReNetConfig&) const = default;
};

struct TrainConfig {
  double learning_rate = 0.001;
  double momentum = 0.95;
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  double weight_decay = 5e-4;
  std::uint64_t shuffle_seed = 0;
  bool augment = true;
  data::AugmentSpec augment_spec{};

  void validate() const;
};

void to_json(nlohmann::json& j, const BrainReNetConfig& c);
void from_json(const nlohmann::json& j, BrainReNetConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct ConvBlock {
  Tensor filters;  // [C_out, C_in, r, s]
  std::vector<double> bias;
  nn::BatchNormParams bn;

  bool operator==(const ConvBlock&) const = default;
};

struct BrainReNetModel {
  BrainReNetConfig config;
  std::uint64_t seed = 0;
  std::vector<ConvBlock> blocks;
  nn::DenseParams fc1;
  nn::DenseParams fc2;

  /// Trainable tensors in a fixed order: per block filters, bias, gamma,
  /// beta; then fc1 weights, fc1 bias, fc2 weights, fc2 bias.
  std::vector<std::span<double>> parameters();
  std::vector<std::span<const double>> parameters() const;
  std::size_t parameter_count() const;
  bool all_finite() const;

  bool operator==(const BrainReNetModel&) const = default;
};

/// Block i: conv (same padding) -> ReLU -> batch-norm -> pooling. Weights
/// are He-initialized from `seed`; biases start at zero.
BrainReNetModel build_model(const BrainReNetConfig& config, std::uint64_t seed);

/// Stacks images into an [N,1,H,W] batch; all images must share one size.
Tensor to_batch(std::span<const data::GrayImage> images);

struct ForwardResult {
  Tensor logits;           // [N, num_classes]
  Tensor fc1_activations;  // [N, fc1_width], after ReLU and before dropout
};

/// Inference-mode forward: running batch-norm statistics, no dropout.
ForwardResult forward(const BrainReNetModel& model, const Tensor& batch);

/// Everything a training-mode forward keeps for backward.
struct ForwardTrace {
  struct Block {
    Tensor input;
    Tensor conv_out;
    nn::BatchNormCache bn;
    Shape bn_shape;
    std::vector<std::size_t> argmax;
    bool used_avg = false;
    bool used_max = false;
  };
  std::vector<Block> blocks;
  Tensor flat;
  Tensor fc1_pre;
  Tensor fc1_act;
  std::vector<double> dropout_mask;
  Tensor dropped;
  Tensor logits;
};

/// Training-mode forward: batch statistics (running stats are updated) and
/// dropout drawn from `rng`.
ForwardTrace forward_train(BrainReNetModel& model, const Tensor& batch, Rng& rng);

struct ModelGradients {
  /// Aligned with BrainReNetModel::parameters().
  std::vector<std::vector<double>> params;
  Tensor input;
};

ModelGradients backward(const BrainReNetModel& model, const ForwardTrace& trace,
                        const Tensor& logits_grad);

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> train_accuracy;
  std::vector<double> val_loss;
  std::vector<double> val_accuracy;
  /// Epoch whose snapshot was returned; -1 when no epoch ran.
  int selected_epoch = -1;
};

struct TrainResult {
  BrainReNetModel model;
  TrainHistory history;
};

/// SGD with classical momentum on softmax cross-entropy:
///   v <- momentum * v - lr * (g + weight_decay * w);  w <- w + v
/// Training images are reshuffled each epoch from tc.shuffle_seed and, when
/// tc.augment is set, each gets one random affine transform per epoch.
/// Returns the snapshot with the best validation accuracy (earliest on ties,
/// last epoch when `val` is empty).
TrainResult train(BrainReNetModel model, const data::Dataset& train_set,
                  const data::Dataset& val, const TrainConfig& tc, std::uint64_t seed);

/// Mean loss and accuracy in inference mode.
std::pair<double, double> evaluate(const BrainReNetModel& model, const data::Dataset& set);

/// Inference-mode fc1 activations, one row per image.
FeatureMatrix extract_deep_features(const BrainReNetModel& model, const data::Dataset& set);

/// Inference-mode class probabilities, one row per image.
Matrix predict_proba(const BrainReNetModel& model, const data::Dataset& set);

inline constexpr std::uint32_t kModelFileVersion = 1;

/// "BRNR" model file; layout documented in docs/formats.md.
std::vector<std::uint8_t> encode_model(const BrainReNetModel& model);
BrainReNetModel decode_model(std::vector<std::uint8_t> bytes, const std::string& origin);
void save_model(const BrainReNetModel& model, const std::filesystem::path& path);
BrainReNetModel load_model(const std::filesystem::path& path);

}  // namespace hybridboost::renet
