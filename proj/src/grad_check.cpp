#include "hybridboost/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "hybridboost/errors.hpp"

namespace hybridboost::nn {

double relative_error(double a, double b) {
  const double denom = std::max({std::abs(a), std::abs(b), 1e-12});
  return std::abs(a - b) / denom;
}

double grad_check(std::span<double> values, const std::function<double()>& loss,
                  std::span<const double> analytic, double eps, double zero_floor) {
  if (!(eps > 0.0) || eps > 1e-2) throw ConfigError("grad_check eps must lie in (0, 1e-2]");
  if (analytic.size() != values.size()) {
    throw DimensionError("grad_check: " + std::to_string(analytic.size()) +
                         " analytic entries for " + std::to_string(values.size()) + " values");
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    auto at = [&](double offset) {
      values[i] = saved + offset;
      return loss();
    };
    // fourth-order central stencil
    const double near = at(eps) - at(-eps);
    const double far = at(2.0 * eps) - at(-2.0 * eps);
    values[i] = saved;
    const double numeric = (8.0 * near - far) / (12.0 * eps);
    if (std::abs(analytic[i]) <= zero_floor && std::abs(numeric) <= zero_floor) continue;
    worst = std::max(worst, relative_error(analytic[i], numeric));
  }
  return worst;
}

const char* layer_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::avg_pool: return "avg_pool";
    case LayerKind::max_pool: return "max_pool";
    case LayerKind::dense: return "dense";
    case LayerKind::relu: return "relu";
    case LayerKind::batch_norm: return "batch_norm";
    case LayerKind::softmax_cross_entropy: return "softmax_cross_entropy";
  }
  return "unknown";
}

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = scale * standard_normal(rng);
  return t;
}

double project(const Tensor& out, const Tensor& weights) {
  double acc = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) acc += out[i] * weights[i];
  return acc;
}

// Keeps inputs at least `gap` away from the ReLU kink so ±2eps never crosses it.
void push_off_zero(Tensor& t, double gap) {
  for (double& v : t.data()) {
    if (std::abs(v) < gap) v = v < 0 ? v - gap : v + gap;
  }
}

// Makes every max-pool window have a unique, well separated maximum.
void separate_values(Tensor& t, Rng& rng) {
  std::vector<std::size_t> order(t.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    t[order[rank]] = 0.01 * static_cast<double>(rank) - 0.005 * static_cast<double>(order.size());
  }
}

}  // namespace

double grad_check_layer(const LayerProbe& probe, std::uint64_t seed, double eps) {
  Rng rng(seed);
  double worst = 0.0;
  switch (probe.kind) {
    case LayerKind::conv2d: {
      Tensor input = random_tensor(probe.input_shape, rng);
      const std::size_t c_in = input.rank() == 4 ? input.dim(1) : input.dim(0);
      Tensor filters = random_tensor(
          {probe.out_channels, c_in, probe.conv.kernel_height, probe.conv.kernel_width}, rng, 0.5);
      std::vector<double> bias(probe.out_channels);
      for (double& b : bias) b = standard_normal(rng);
      const Tensor out = conv2d(input, filters, bias, probe.conv);
      const Tensor proj = random_tensor(out.shape(), rng);
      const ConvGrads g = conv2d_backward(input, filters, probe.conv, proj);
      auto loss = [&] { return project(conv2d(input, filters, bias, probe.conv), proj); };
      worst = std::max(worst, grad_check(input.data(), loss, g.input.data(), eps));
      worst = std::max(worst, grad_check(filters.data(), loss, g.filters.data(), eps));
      worst = std::max(worst, grad_check(bias, loss, g.bias, eps));
      break;
    }
    case LayerKind::avg_pool: {
      Tensor input = random_tensor(probe.input_shape, rng);
      PoolSpec spec = probe.pool;
      spec.kind = PoolKind::average;
      const Tensor proj = random_tensor(avg_pool(input, spec).shape(), rng);
      const Tensor g = avg_pool_backward(input.shape(), spec, proj);
      auto loss = [&] { return project(avg_pool(input, spec), proj); };
      worst = grad_check(input.data(), loss, g.data(), eps);
      break;
    }
    case LayerKind::max_pool: {
      Tensor input(probe.input_shape);
      separate_values(input, rng);
      PoolSpec spec = probe.pool;
      spec.kind = PoolKind::max;
      const MaxPoolResult fwd = max_pool(input, spec);
      const Tensor proj = random_tensor(fwd.output.shape(), rng);
      const Tensor g = max_pool_backward(input.shape(), fwd.argmax, proj);
      auto loss = [&] { return project(max_pool(input, spec).output, proj); };
      worst = grad_check(input.data(), loss, g.data(), eps);
      break;
    }
    case LayerKind::dense: {
      const std::size_t batch = probe.input_shape.at(0);
      const std::size_t in_dim = shape_volume(probe.input_shape) / batch;
      Tensor input = random_tensor({batch, in_dim}, rng);
      DenseParams params{random_tensor({probe.out_channels, in_dim}, rng, 0.5),
                         std::vector<double>(probe.out_channels)};
      for (double& b : params.bias) b = standard_normal(rng);
      const Tensor proj = random_tensor({batch, probe.out_channels}, rng);
      const DenseGrads g = dense_backward(input, params, proj);
      auto loss = [&] { return project(dense(input, params), proj); };
      worst = std::max(worst, grad_check(input.data(), loss, g.input.data(), eps));
      worst = std::max(worst, grad_check(params.weights.data(), loss, g.weights.data(), eps));
      worst = std::max(worst, grad_check(params.bias, loss, g.bias, eps));
      break;
    }
    case LayerKind::relu: {
      Tensor input = random_tensor(probe.input_shape, rng);
      push_off_zero(input, std::max(1e-3, 4.0 * eps));
      const Tensor proj = random_tensor(input.shape(), rng);
      const Tensor g = relu_backward(input, proj);
      auto loss = [&] { return project(relu(input), proj); };
      worst = grad_check(input.data(), loss, g.data(), eps);
      break;
    }
    case LayerKind::batch_norm: {
      Tensor input = random_tensor(probe.input_shape, rng);
      const std::size_t channels = input.dim(1);
      BatchNormParams params = BatchNormParams::identity(channels);
      for (std::size_t c = 0; c < channels; ++c) {
        // gamma near zero scales the input gradient down to rounding noise
        params.gamma[c] = (rng() % 2 ? 1.0 : -1.0) * uniform(rng, 0.5, 1.5);
        params.beta[c] = standard_normal(rng);
      }
      BatchNormResult fwd = batch_norm(input, params, Mode::train);
      const Tensor proj = random_tensor(fwd.output.shape(), rng);
      const BatchNormGrads g = batch_norm_backward(fwd.cache, params, proj);
      auto loss = [&] {
        BatchNormParams scratch = params;
        return project(batch_norm(input, scratch, Mode::train).output, proj);
      };
      worst = std::max(worst, grad_check(input.data(), loss, g.input.data(), eps));
      worst = std::max(worst, grad_check(params.gamma, loss, g.gamma, eps));
      worst = std::max(worst, grad_check(params.beta, loss, g.beta, eps));
      break;
    }
    case LayerKind::softmax_cross_entropy: {
      const std::size_t batch = probe.input_shape.at(0);
      Tensor logits = random_tensor({batch, probe.out_channels}, rng, 2.0);
      std::vector<int> labels(batch);
      for (int& l : labels) l = static_cast<int>(rng() % probe.out_channels);
      const SoftmaxCrossEntropy fwd = softmax_cross_entropy(logits, labels);
      auto loss = [&] { return softmax_cross_entropy(logits, labels).loss; };
      worst = grad_check(logits.data(), loss, fwd.grad.data(), eps);
      break;
    }
  }
  return worst;
}

}  // namespace hybridboost::nn
