#include "hybridboost/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "hybridboost/errors.hpp"
#include "hybridboost/parallel.hpp"

namespace hybridboost::nn {
namespace {

// Views rank-3 [C,H,W] input as a batch of one.
Shape as_batch(const Tensor& t, const char* what) {
  if (t.rank() == 4) return t.shape();
  if (t.rank() == 3) return {1, t.dim(0), t.dim(1), t.dim(2)};
  throw DimensionError(std::string(what) + " expects a [C,H,W] or [N,C,H,W] tensor, got " +
                       shape_string(t.shape()));
}

Shape restore_rank(const Tensor& like, Shape batched) {
  if (like.rank() == 3) batched.erase(batched.begin());
  return batched;
}

void require_same_shape(const Shape& expected, const Tensor& upstream, const char* layer) {
  if (upstream.shape() != expected) {
    throw StateError(std::string(layer) + " backward: upstream gradient shape " +
                     shape_string(upstream.shape()) + " does not match forward output " +
                     shape_string(expected));
  }
}

struct ConvGeometry {
  std::size_t batch, in_c, in_h, in_w;
  std::size_t out_c, r, s;
  std::size_t out_h, out_w;
  std::size_t pad_top, pad_left, stride;

  // Output columns x whose source column x*stride + ks - pad_left lies in [0, in_w).
  std::pair<std::size_t, std::size_t> x_range(std::size_t ks) const {
    const long offset = static_cast<long>(ks) - static_cast<long>(pad_left);
    long lo = 0;
    if (offset < 0) lo = (-offset + static_cast<long>(stride) - 1) / static_cast<long>(stride);
    long hi = (static_cast<long>(in_w) - 1 - offset);
    hi = hi < 0 ? 0 : hi / static_cast<long>(stride) + 1;
    hi = std::min<long>(hi, static_cast<long>(out_w));
    if (lo > hi) lo = hi;
    return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
  }

  // Source row for output row y and kernel row kr, or -1 when in padding.
  long source_row(std::size_t y, std::size_t kr) const {
    return static_cast<long>(y * stride + kr) - static_cast<long>(pad_top);
  }
};

ConvGeometry conv_geometry(const Tensor& input, const Tensor& filters, const ConvSpec& spec) {
  const Shape in = as_batch(input, "conv2d");
  if (filters.rank() != 4) {
    throw DimensionError("conv2d filters must be [C_out,C_in,r,s], got " +
                         shape_string(filters.shape()));
  }
  if (spec.stride == 0 || spec.kernel_height == 0 || spec.kernel_width == 0) {
    throw ConfigError("conv2d kernel extents and stride must be positive");
  }
  if (filters.dim(1) != in[1]) {
    throw DimensionError("conv2d channel mismatch: filters axis 1 (C_in) is " +
                         std::to_string(filters.dim(1)) + " but input channel axis is " +
                         std::to_string(in[1]));
  }
  if (filters.dim(2) != spec.kernel_height || filters.dim(3) != spec.kernel_width) {
    throw DimensionError("conv2d filters axes 2,3 are " + std::to_string(filters.dim(2)) + "x" +
                         std::to_string(filters.dim(3)) + " but spec kernel is " +
                         std::to_string(spec.kernel_height) + "x" +
                         std::to_string(spec.kernel_width));
  }
  ConvGeometry g{};
  g.batch = in[0];
  g.in_c = in[1];
  g.in_h = in[2];
  g.in_w = in[3];
  g.out_c = filters.dim(0);
  g.r = spec.kernel_height;
  g.s = spec.kernel_width;
  g.stride = spec.stride;
  const auto [oh, ow] = conv_output_hw(g.in_h, g.in_w, spec);
  g.out_h = oh;
  g.out_w = ow;
  if (spec.padding == Padding::same) {
    g.pad_top = (g.r - 1) / 2;
    g.pad_left = (g.s - 1) / 2;
  }
  return g;
}

}  // namespace

BatchNormParams BatchNormParams::identity(std::size_t channels) {
  BatchNormParams p;
  p.gamma.assign(channels, 1.0);
  p.beta.assign(channels, 0.0);
  p.running_mean.assign(channels, 0.0);
  p.running_var.assign(channels, 1.0);
  return p;
}

std::pair<std::size_t, std::size_t> conv_output_hw(std::size_t h, std::size_t w,
                                                   const ConvSpec& spec) {
  if (spec.padding == Padding::same) {
    if (spec.stride != 1) throw ConfigError("same padding requires stride 1");
    return {h, w};
  }
  if (spec.kernel_height > h) {
    throw DimensionError("conv2d kernel height " + std::to_string(spec.kernel_height) +
                         " exceeds input height (axis H) " + std::to_string(h));
  }
  if (spec.kernel_width > w) {
    throw DimensionError("conv2d kernel width " + std::to_string(spec.kernel_width) +
                         " exceeds input width (axis W) " + std::to_string(w));
  }
  return {(h - spec.kernel_height) / spec.stride + 1, (w - spec.kernel_width) / spec.stride + 1};
}

Tensor conv2d(const Tensor& input, const Tensor& filters, std::span<const double> bias,
              const ConvSpec& spec) {
  const ConvGeometry g = conv_geometry(input, filters, spec);
  if (bias.size() != g.out_c) {
    throw DimensionError("conv2d bias length " + std::to_string(bias.size()) +
                         " does not match filters axis 0 (C_out) " + std::to_string(g.out_c));
  }
  Tensor out(restore_rank(input, {g.batch, g.out_c, g.out_h, g.out_w}));
  const double* in_base = input.data().data();
  const double* w_base = filters.data().data();
  double* out_base = out.data().data();
  const std::size_t in_plane = g.in_h * g.in_w;
  const std::size_t out_plane = g.out_h * g.out_w;

  parallel_for(g.batch, [&](std::size_t n) {
    const double* in_n = in_base + n * g.in_c * in_plane;
    double* out_n = out_base + n * g.out_c * out_plane;
    for (std::size_t oc = 0; oc < g.out_c; ++oc) {
      double* o = out_n + oc * out_plane;
      std::fill(o, o + out_plane, bias[oc]);
      for (std::size_t ic = 0; ic < g.in_c; ++ic) {
        const double* src = in_n + ic * in_plane;
        const double* w = w_base + ((oc * g.in_c + ic) * g.r) * g.s;
        for (std::size_t kr = 0; kr < g.r; ++kr) {
          for (std::size_t ks = 0; ks < g.s; ++ks) {
            const double wv = w[kr * g.s + ks];
            const auto [x_lo, x_hi] = g.x_range(ks);
            const long col0 = static_cast<long>(ks) - static_cast<long>(g.pad_left);
            for (std::size_t y = 0; y < g.out_h; ++y) {
              const long iy = g.source_row(y, kr);
              if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
              const double* row = src + static_cast<std::size_t>(iy) * g.in_w;
              double* orow = o + y * g.out_w;
              if (g.stride == 1) {
                const double* shifted = row + (col0 + static_cast<long>(x_lo));
                double* target = orow + x_lo;
                for (std::size_t i = 0; i < x_hi - x_lo; ++i) target[i] += wv * shifted[i];
              } else {
                for (std::size_t x = x_lo; x < x_hi; ++x) {
                  orow[x] += wv * row[static_cast<long>(x * g.stride) + col0];
                }
              }
            }
          }
        }
      }
    }
  });
  return out;
}

ConvGrads conv2d_backward(const Tensor& input, const Tensor& filters, const ConvSpec& spec,
                          const Tensor& upstream) {
  const ConvGeometry g = conv_geometry(input, filters, spec);
  require_same_shape(restore_rank(input, {g.batch, g.out_c, g.out_h, g.out_w}), upstream,
                     "conv2d");
  ConvGrads grads{Tensor(input.shape()), Tensor(filters.shape()),
                  std::vector<double>(g.out_c, 0.0)};

  const std::size_t in_plane = g.in_h * g.in_w;
  const std::size_t out_plane = g.out_h * g.out_w;
  const std::size_t wsize = filters.size();
  // Per-sample parameter gradients, reduced afterwards in sample order so the
  // result does not depend on the thread count.
  std::vector<double> dw_per_sample(g.batch * wsize, 0.0);
  std::vector<double> db_per_sample(g.batch * g.out_c, 0.0);

  const double* in_base = input.data().data();
  const double* w_base = filters.data().data();
  const double* g_base = upstream.data().data();
  double* din_base = grads.input.data().data();

  parallel_for(g.batch, [&](std::size_t n) {
    const double* in_n = in_base + n * g.in_c * in_plane;
    const double* g_n = g_base + n * g.out_c * out_plane;
    double* din_n = din_base + n * g.in_c * in_plane;
    double* dw_n = dw_per_sample.data() + n * wsize;
    double* db_n = db_per_sample.data() + n * g.out_c;
    for (std::size_t oc = 0; oc < g.out_c; ++oc) {
      const double* go = g_n + oc * out_plane;
      double acc = 0.0;
      for (std::size_t i = 0; i < out_plane; ++i) acc += go[i];
      db_n[oc] = acc;
      for (std::size_t ic = 0; ic < g.in_c; ++ic) {
        const double* src = in_n + ic * in_plane;
        double* dsrc = din_n + ic * in_plane;
        const std::size_t wofs = ((oc * g.in_c + ic) * g.r) * g.s;
        for (std::size_t kr = 0; kr < g.r; ++kr) {
          for (std::size_t ks = 0; ks < g.s; ++ks) {
            const double wv = w_base[wofs + kr * g.s + ks];
            const auto [x_lo, x_hi] = g.x_range(ks);
            const long col0 = static_cast<long>(ks) - static_cast<long>(g.pad_left);
            double dwv = 0.0;
            for (std::size_t y = 0; y < g.out_h; ++y) {
              const long iy = g.source_row(y, kr);
              if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
              const std::size_t row_ofs = static_cast<std::size_t>(iy) * g.in_w;
              const double* grow = go + y * g.out_w;
              for (std::size_t x = x_lo; x < x_hi; ++x) {
                const std::size_t ix =
                    static_cast<std::size_t>(static_cast<long>(x * g.stride) + col0);
                dwv += grow[x] * src[row_ofs + ix];
                dsrc[row_ofs + ix] += wv * grow[x];
              }
            }
            dw_n[wofs + kr * g.s + ks] = dwv;
          }
        }
      }
    }
  });

  double* dw = grads.filters.data().data();
  for (std::size_t n = 0; n < g.batch; ++n) {
    const double* src = dw_per_sample.data() + n * wsize;
    for (std::size_t i = 0; i < wsize; ++i) dw[i] += src[i];
    for (std::size_t oc = 0; oc < g.out_c; ++oc) grads.bias[oc] += db_per_sample[n * g.out_c + oc];
  }
  return grads;
}

std::pair<std::size_t, std::size_t> pool_output_hw(std::size_t h, std::size_t w,
                                                   const PoolSpec& spec) {
  if (spec.window == 0) throw ConfigError("pool window must be positive");
  if (spec.window > h || spec.window > w) {
    throw DimensionError("pool window " + std::to_string(spec.window) +
                         " larger than input spatial extent " + std::to_string(h) + "x" +
                         std::to_string(w));
  }
  const std::size_t stride = spec.effective_stride();
  return {(h - spec.window) / stride + 1, (w - spec.window) / stride + 1};
}

Tensor avg_pool(const Tensor& input, const PoolSpec& spec) {
  const Shape in = as_batch(input, "avg_pool");
  const auto [oh, ow] = pool_output_hw(in[2], in[3], spec);
  const std::size_t t = spec.window;
  const std::size_t stride = spec.effective_stride();
  const double norm = 1.0 / static_cast<double>(t * t);
  Tensor out(restore_rank(input, {in[0], in[1], oh, ow}));
  const double* src = input.data().data();
  double* dst = out.data().data();
  for (std::size_t p = 0; p < in[0] * in[1]; ++p) {
    const double* plane = src + p * in[2] * in[3];
    double* oplane = dst + p * oh * ow;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (std::size_t dy = 0; dy < t; ++dy) {
          const double* row = plane + (y * stride + dy) * in[3] + x * stride;
          for (std::size_t dx = 0; dx < t; ++dx) acc += row[dx];
        }
        oplane[y * ow + x] = acc * norm;
      }
    }
  }
  return out;
}

Tensor avg_pool_backward(const Shape& input_shape, const PoolSpec& spec, const Tensor& upstream) {
  const Tensor probe(input_shape);
  const Shape in = as_batch(probe, "avg_pool_backward");
  const auto [oh, ow] = pool_output_hw(in[2], in[3], spec);
  require_same_shape(restore_rank(probe, {in[0], in[1], oh, ow}), upstream, "avg_pool");
  const std::size_t t = spec.window;
  const std::size_t stride = spec.effective_stride();
  const double norm = 1.0 / static_cast<double>(t * t);
  Tensor grad(input_shape);
  const double* g = upstream.data().data();
  double* d = grad.data().data();
  for (std::size_t p = 0; p < in[0] * in[1]; ++p) {
    double* plane = d + p * in[2] * in[3];
    const double* gplane = g + p * oh * ow;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        const double share = gplane[y * ow + x] * norm;
        for (std::size_t dy = 0; dy < t; ++dy) {
          double* row = plane + (y * stride + dy) * in[3] + x * stride;
          for (std::size_t dx = 0; dx < t; ++dx) row[dx] += share;
        }
      }
    }
  }
  return grad;
}

MaxPoolResult max_pool(const Tensor& input, const PoolSpec& spec) {
  const Shape in = as_batch(input, "max_pool");
  const auto [oh, ow] = pool_output_hw(in[2], in[3], spec);
  const std::size_t t = spec.window;
  const std::size_t stride = spec.effective_stride();
  MaxPoolResult result{Tensor(restore_rank(input, {in[0], in[1], oh, ow})), {}};
  result.argmax.resize(result.output.size());
  const double* src = input.data().data();
  double* dst = result.output.data().data();
  const std::size_t plane_size = in[2] * in[3];
  for (std::size_t p = 0; p < in[0] * in[1]; ++p) {
    const std::size_t base = p * plane_size;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        std::size_t best = base + (y * stride) * in[3] + x * stride;
        double best_v = src[best];
        for (std::size_t dy = 0; dy < t; ++dy) {
          for (std::size_t dx = 0; dx < t; ++dx) {
            const std::size_t idx = base + (y * stride + dy) * in[3] + x * stride + dx;
            if (src[idx] > best_v) {
              best_v = src[idx];
              best = idx;
            }
          }
        }
        const std::size_t o = p * oh * ow + y * ow + x;
        dst[o] = best_v;
        result.argmax[o] = best;
      }
    }
  }
  return result;
}

Tensor max_pool_backward(const Shape& input_shape, std::span<const std::size_t> argmax,
                         const Tensor& upstream) {
  if (argmax.size() != upstream.size()) {
    throw StateError("max_pool backward: " + std::to_string(argmax.size()) +
                     " recorded argmax indices but upstream has " +
                     std::to_string(upstream.size()) + " elements");
  }
  Tensor grad(input_shape);
  for (std::size_t o = 0; o < argmax.size(); ++o) {
    if (argmax[o] >= grad.size()) throw StateError("max_pool backward: argmax index out of range");
    grad[argmax[o]] += upstream[o];
  }
  return grad;
}

Tensor dense(const Tensor& input, const DenseParams& params) {
  if (params.weights.rank() != 2) {
    throw DimensionError("dense weights must be [out_dim,in_dim], got " +
                         shape_string(params.weights.shape()));
  }
  const std::size_t in_dim = params.in_dim();
  const std::size_t out_dim = params.out_dim();
  if (params.bias.size() != out_dim) {
    throw DimensionError("dense bias length " + std::to_string(params.bias.size()) +
                         " does not match out_dim " + std::to_string(out_dim));
  }
  std::size_t batch = 1;
  if (input.rank() == 1) {
    if (input.dim(0) != in_dim) {
      throw DimensionError("dense input length " + std::to_string(input.dim(0)) +
                           " does not match in_dim " + std::to_string(in_dim));
    }
  } else if (input.rank() == 2) {
    batch = input.dim(0);
    if (input.dim(1) != in_dim) {
      throw DimensionError("dense input axis 1 length " + std::to_string(input.dim(1)) +
                           " does not match in_dim " + std::to_string(in_dim));
    }
  } else {
    throw DimensionError("dense expects [in_dim] or [N,in_dim], got " +
                         shape_string(input.shape()));
  }
  Tensor out(input.rank() == 1 ? Shape{out_dim} : Shape{batch, out_dim});
  const double* w = params.weights.data().data();
  for (std::size_t n = 0; n < batch; ++n) {
    const double* x = input.data().data() + n * in_dim;
    double* y = out.data().data() + n * out_dim;
    for (std::size_t o = 0; o < out_dim; ++o) {
      const double* wr = w + o * in_dim;
      double acc = 0.0;
      for (std::size_t i = 0; i < in_dim; ++i) acc += wr[i] * x[i];
      y[o] = acc + params.bias[o];
    }
  }
  return out;
}

DenseGrads dense_backward(const Tensor& input, const DenseParams& params,
                          const Tensor& upstream) {
  const std::size_t in_dim = params.in_dim();
  const std::size_t out_dim = params.out_dim();
  const std::size_t batch = input.rank() == 1 ? 1 : input.dim(0);
  const Shape expected = input.rank() == 1 ? Shape{out_dim} : Shape{batch, out_dim};
  require_same_shape(expected, upstream, "dense");
  if (input.size() != batch * in_dim) {
    throw StateError("dense backward: cached input " + shape_string(input.shape()) +
                     " does not match in_dim " + std::to_string(in_dim));
  }
  DenseGrads grads{Tensor(input.shape()), Tensor(params.weights.shape()),
                   std::vector<double>(out_dim, 0.0)};
  const double* w = params.weights.data().data();
  double* dw = grads.weights.data().data();
  for (std::size_t n = 0; n < batch; ++n) {
    const double* x = input.data().data() + n * in_dim;
    const double* g = upstream.data().data() + n * out_dim;
    double* dx = grads.input.data().data() + n * in_dim;
    for (std::size_t o = 0; o < out_dim; ++o) {
      const double go = g[o];
      grads.bias[o] += go;
      const double* wr = w + o * in_dim;
      double* dwr = dw + o * in_dim;
      for (std::size_t i = 0; i < in_dim; ++i) {
        dwr[i] += go * x[i];
        dx[i] += go * wr[i];
      }
    }
  }
  return grads;
}

Tensor relu(const Tensor& input) {
  Tensor out = input;
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& upstream) {
  require_same_shape(input.shape(), upstream, "relu");
  Tensor grad(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) grad[i] = input[i] > 0.0 ? upstream[i] : 0.0;
  return grad;
}

namespace {

struct ChannelLayout {
  std::size_t batch, channels, spatial;
};

ChannelLayout channel_layout(const Tensor& input, std::size_t expected_channels) {
  if (input.rank() < 2) {
    throw DimensionError("batch_norm expects [N,C,...], got " + shape_string(input.shape()));
  }
  if (input.dim(1) != expected_channels) {
    throw DimensionError("batch_norm channel axis 1 has " + std::to_string(input.dim(1)) +
                         " channels but params have " + std::to_string(expected_channels));
  }
  return {input.dim(0), input.dim(1), input.size() / (input.dim(0) * input.dim(1))};
}

BatchNormResult normalize_with(const Tensor& input, const BatchNormParams& params,
                               const std::vector<double>& mean,
                               const std::vector<double>& var, Mode mode) {
  const ChannelLayout l = channel_layout(input, params.channels());
  BatchNormResult r{Tensor(input.shape()), {Tensor(input.shape()), {}, mode}};
  r.cache.inv_std.resize(l.channels);
  for (std::size_t c = 0; c < l.channels; ++c) {
    r.cache.inv_std[c] = 1.0 / std::sqrt(var[c] + params.epsilon);
  }
  for (std::size_t n = 0; n < l.batch; ++n) {
    for (std::size_t c = 0; c < l.channels; ++c) {
      const std::size_t base = (n * l.channels + c) * l.spatial;
      for (std::size_t i = 0; i < l.spatial; ++i) {
        const double xhat = (input[base + i] - mean[c]) * r.cache.inv_std[c];
        r.cache.normalized[base + i] = xhat;
        r.output[base + i] = params.gamma[c] * xhat + params.beta[c];
      }
    }
  }
  return r;
}

}  // namespace

BatchNormResult batch_norm(const Tensor& input, BatchNormParams& params, Mode mode) {
  if (mode == Mode::infer) return batch_norm(input, std::as_const(params));
  const ChannelLayout l = channel_layout(input, params.channels());
  const std::size_t count = l.batch * l.spatial;
  std::vector<double> mean(l.channels, 0.0), var(l.channels, 0.0);
  for (std::size_t c = 0; c < l.channels; ++c) {
    double acc = 0.0;
    for (std::size_t n = 0; n < l.batch; ++n) {
      const std::size_t base = (n * l.channels + c) * l.spatial;
      for (std::size_t i = 0; i < l.spatial; ++i) acc += input[base + i];
    }
    mean[c] = acc / static_cast<double>(count);
    double sq = 0.0;
    for (std::size_t n = 0; n < l.batch; ++n) {
      const std::size_t base = (n * l.channels + c) * l.spatial;
      for (std::size_t i = 0; i < l.spatial; ++i) {
        const double d = input[base + i] - mean[c];
        sq += d * d;
      }
    }
    var[c] = sq / static_cast<double>(count);
    if (l.batch == 1 && var[c] == 0.0) {
      throw DegenerateError("batch_norm: training batch of one sample has zero variance in "
                            "channel " + std::to_string(c));
    }
  }
  BatchNormResult r = normalize_with(input, params, mean, var, Mode::train);
  const double m = params.momentum;
  const double unbias = count > 1 ? static_cast<double>(count) / static_cast<double>(count - 1) : 1.0;
  for (std::size_t c = 0; c < l.channels; ++c) {
    params.running_mean[c] = (1.0 - m) * params.running_mean[c] + m * mean[c];
    params.running_var[c] = (1.0 - m) * params.running_var[c] + m * var[c] * unbias;
  }
  return r;
}

BatchNormResult batch_norm(const Tensor& input, const BatchNormParams& params) {
  return normalize_with(input, params, params.running_mean, params.running_var, Mode::infer);
}

BatchNormGrads batch_norm_backward(const BatchNormCache& cache, const BatchNormParams& params,
                                   const Tensor& upstream) {
  require_same_shape(cache.normalized.shape(), upstream, "batch_norm");
  const ChannelLayout l = channel_layout(upstream, params.channels());
  BatchNormGrads grads{Tensor(upstream.shape()), std::vector<double>(l.channels, 0.0),
                       std::vector<double>(l.channels, 0.0)};
  const double count = static_cast<double>(l.batch * l.spatial);
  for (std::size_t c = 0; c < l.channels; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t n = 0; n < l.batch; ++n) {
      const std::size_t base = (n * l.channels + c) * l.spatial;
      for (std::size_t i = 0; i < l.spatial; ++i) {
        sum_dy += upstream[base + i];
        sum_dy_xhat += upstream[base + i] * cache.normalized[base + i];
      }
    }
    grads.beta[c] = sum_dy;
    grads.gamma[c] = sum_dy_xhat;
    const double scale = params.gamma[c] * cache.inv_std[c];
    for (std::size_t n = 0; n < l.batch; ++n) {
      const std::size_t base = (n * l.channels + c) * l.spatial;
      for (std::size_t i = 0; i < l.spatial; ++i) {
        if (cache.mode == Mode::infer) {
          grads.input[base + i] = scale * upstream[base + i];
        } else {
          grads.input[base + i] =
              scale * (upstream[base + i] - sum_dy / count -
                       cache.normalized[base + i] * sum_dy_xhat / count);
        }
      }
    }
  }
  return grads;
}

DropoutResult dropout(const Tensor& input, double rate, Mode mode, Rng& rng) {
  if (!(rate >= 0.0) || rate >= 1.0) {
    throw ConfigError("dropout rate must lie in [0,1), got " + std::to_string(rate));
  }
  if (mode == Mode::infer || rate == 0.0) return {input, {}};
  DropoutResult r{Tensor(input.shape()), std::vector<double>(input.size())};
  const double keep_scale = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < input.size(); ++i) {
    r.mask[i] = uniform01(rng) < rate ? 0.0 : keep_scale;
    r.output[i] = input[i] * r.mask[i];
  }
  return r;
}

Tensor dropout_backward(std::span<const double> mask, const Tensor& upstream) {
  if (mask.empty()) return upstream;
  if (mask.size() != upstream.size()) {
    throw StateError("dropout backward: mask length " + std::to_string(mask.size()) +
                     " does not match upstream size " + std::to_string(upstream.size()));
  }
  Tensor grad(upstream.shape());
  for (std::size_t i = 0; i < mask.size(); ++i) grad[i] = upstream[i] * mask[i];
  return grad;
}

Tensor softmax(const Tensor& logits) {
  if (logits.rank() != 2) {
    throw DimensionError("softmax expects [N,C] logits, got " + shape_string(logits.shape()));
  }
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  Tensor probs(logits.shape());
  for (std::size_t n = 0; n < rows; ++n) {
    const double* z = logits.data().data() + n * cols;
    double* p = probs.data().data() + n * cols;
    const double zmax = *std::max_element(z, z + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      p[c] = std::exp(z[c] - zmax);
      total += p[c];
    }
    for (std::size_t c = 0; c < cols; ++c) p[c] /= total;
  }
  return probs;
}

SoftmaxCrossEntropy softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2) {
    throw DimensionError("softmax_cross_entropy expects [N,C] logits, got " +
                         shape_string(logits.shape()));
  }
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  if (labels.size() != rows) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(rows) + " rows");
  }
  SoftmaxCrossEntropy r{0.0, Tensor(logits.shape()), Tensor(logits.shape())};
  const double inv_n = 1.0 / static_cast<double>(rows);
  double total_loss = 0.0;
  for (std::size_t n = 0; n < rows; ++n) {
    const int label = labels[n];
    if (label < 0 || static_cast<std::size_t>(label) >= cols) {
      throw LabelError("label " + std::to_string(label) + " at row " + std::to_string(n) +
                       " outside [0," + std::to_string(cols) + ")");
    }
    const double* z = logits.data().data() + n * cols;
    double* p = r.probs.data().data() + n * cols;
    double* g = r.grad.data().data() + n * cols;
    const double zmax = *std::max_element(z, z + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += std::exp(z[c] - zmax);
    const double log_total = std::log(total);
    for (std::size_t c = 0; c < cols; ++c) p[c] = std::exp(z[c] - zmax - log_total);
    total_loss += log_total - (z[label] - zmax);
    for (std::size_t c = 0; c < cols; ++c) {
      g[c] = (p[c] - (static_cast<int>(c) == label ? 1.0 : 0.0)) * inv_n;
    }
  }
  r.loss = total_loss * inv_n;
  return r;
}

}  // namespace hybridboost::nn
