#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hybridboost/rng.hpp"
#include "hybridboost/tensor.hpp"

// Forward and backward numeric kernels for the CNN. All kernels are pure
// functions of their arguments except batch_norm in training mode, which
// updates the running statistics it is handed.
namespace hybridboost::nn {

enum class Mode { train, infer };
enum class Padding { valid, same };
enum class PoolKind { average, max };

struct ConvSpec {
  std::size_t kernel_height = 3;
  std::size_t kernel_width = 3;
  std::size_t stride = 1;
  Padding padding = Padding::valid;

  bool operator==(const ConvSpec&) const = default;
};

struct PoolSpec {
  std::size_t window = 2;
  /// 0 means "same as window" (non-overlapping tiles).
  std::size_t stride = 0;
  PoolKind kind = PoolKind::max;

  std::size_t effective_stride() const { return stride == 0 ? window : stride; }
  bool operator==(const PoolSpec&) const = default;
};

/// Fully connected layer: weights are [out_dim, in_dim] row-major.
struct DenseParams {
  Tensor weights;
  std::vector<double> bias;

  std::size_t in_dim() const { return weights.dim(1); }
  std::size_t out_dim() const { return weights.dim(0); }
  bool operator==(const DenseParams&) const = default;
};

struct BatchNormParams {
  std::vector<double> gamma;
  std::vector<double> beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double epsilon = 1e-5;
  double momentum = 0.1;

  static BatchNormParams identity(std::size_t channels);
  std::size_t channels() const { return gamma.size(); }
  bool operator==(const BatchNormParams&) const = default;
};

// ---- convolution -----------------------------------------------------------

/// Output spatial extents for a conv over an H x W input.
std::pair<std::size_t, std::size_t> conv_output_hw(std::size_t h, std::size_t w,
                                                   const ConvSpec& spec);

/// Sliding dot product plus bias. `input` is [C_in,H,W] or [N,C_in,H,W];
/// `filters` is [C_out,C_in,r,s]. The result has the same rank as `input`.
Tensor conv2d(const Tensor& input, const Tensor& filters, std::span<const double> bias,
              const ConvSpec& spec);

struct ConvGrads {
  Tensor input;
  Tensor filters;
  std::vector<double> bias;
};

ConvGrads conv2d_backward(const Tensor& input, const Tensor& filters, const ConvSpec& spec,
                          const Tensor& upstream);

// ---- pooling ---------------------------------------------------------------

std::pair<std::size_t, std::size_t> pool_output_hw(std::size_t h, std::size_t w,
                                                   const PoolSpec& spec);

/// Mean over each window, normalized by window².
Tensor avg_pool(const Tensor& input, const PoolSpec& spec);
Tensor avg_pool_backward(const Shape& input_shape, const PoolSpec& spec,
                         const Tensor& upstream);

struct MaxPoolResult {
  Tensor output;
  /// Flat input index of the winner for each output element. Ties resolve to
  /// the first element in row-major scan order.
  std::vector<std::size_t> argmax;
};

MaxPoolResult max_pool(const Tensor& input, const PoolSpec& spec);
Tensor max_pool_backward(const Shape& input_shape, std::span<const std::size_t> argmax,
                         const Tensor& upstream);

// ---- dense -----------------------------------------------------------------

/// `input` is [in_dim] or [N, in_dim]; returns [out_dim] or [N, out_dim].
Tensor dense(const Tensor& input, const DenseParams& params);

struct DenseGrads {
  Tensor input;
  Tensor weights;
  std::vector<double> bias;
};

DenseGrads dense_backward(const Tensor& input, const DenseParams& params,
                          const Tensor& upstream);

// ---- activations -----------------------------------------------------------

Tensor relu(const Tensor& input);
/// Passes upstream where input > 0; the derivative at exactly 0 is 0.
Tensor relu_backward(const Tensor& input, const Tensor& upstream);

// ---- batch normalization ---------------------------------------------------

struct BatchNormCache {
  Tensor normalized;
  std::vector<double> inv_std;
  Mode mode = Mode::infer;
};

struct BatchNormResult {
  Tensor output;
  BatchNormCache cache;
};

/// Per-channel normalization of [N,C,...]. Train mode uses batch statistics
/// (biased variance) and blends them into the running statistics with the
/// params' momentum (unbiased variance); infer mode uses running statistics.
BatchNormResult batch_norm(const Tensor& input, BatchNormParams& params, Mode mode);
/// Infer-mode overload that never touches the running statistics.
BatchNormResult batch_norm(const Tensor& input, const BatchNormParams& params);

struct BatchNormGrads {
  Tensor input;
  std::vector<double> gamma;
  std::vector<double> beta;
};

BatchNormGrads batch_norm_backward(const BatchNormCache& cache, const BatchNormParams& params,
                                   const Tensor& upstream);

// ---- dropout ---------------------------------------------------------------

struct DropoutResult {
  Tensor output;
  /// 0 for dropped elements, 1/(1-rate) for survivors; empty in infer mode.
  std::vector<double> mask;
};

/// Inverted dropout. Infer mode (or rate 0) is the identity.
DropoutResult dropout(const Tensor& input, double rate, Mode mode, Rng& rng);
Tensor dropout_backward(std::span<const double> mask, const Tensor& upstream);

// ---- loss ------------------------------------------------------------------

struct SoftmaxCrossEntropy {
  double loss = 0.0;
  Tensor probs;
  /// d loss / d logits, already divided by the batch size.
  Tensor grad;
};

/// Row-wise softmax of [N,C] logits (max-subtracted) and the mean negative
/// log-likelihood of `labels`.
SoftmaxCrossEntropy softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Row-wise softmax alone, for inference.
Tensor softmax(const Tensor& logits);

}  // namespace hybridboost::nn
