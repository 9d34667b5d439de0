#include "hybridboost/brain_renet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hybridboost/binary_io.hpp"
#include "hybridboost/errors.hpp"

namespace hybridboost::renet {

using nn::Mode;

// ---- config ----------------------------------------------------------------

void BrainReNetConfig::validate() const {
  if (conv_channels.empty() || conv_channels.size() > 6) {
    throw ConfigError("BRAIN-RENet needs 1..6 blocks, got " + std::to_string(conv_channels.size()));
  }
  if (conv_channels.size() != 6 && !allow_reduced_depth) {
    throw ConfigError("BRAIN-RENet has exactly six convolutional blocks, got " +
                      std::to_string(conv_channels.size()));
  }
  for (std::size_t c : conv_channels) {
    if (c == 0) throw ConfigError("conv_channels entries must be positive");
  }
  if (num_classes == 0) throw ConfigError("num_classes must be positive");
  if (kernel_height == 0 || kernel_width == 0) throw ConfigError("kernel extents must be positive");
  if (pool_window == 0 || pool_stride == 0) throw ConfigError("pool window and stride must be positive");
  if (fc1_width == 0) throw ConfigError("fc1_width must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout_rate must lie in [0,1)");
  if (!(bn_epsilon > 0.0)) throw ConfigError("bn_epsilon must be positive");
  if (!(bn_momentum > 0.0 && bn_momentum < 1.0)) throw ConfigError("bn_momentum must lie in (0,1)");
  if (input_height == 0 || input_width == 0) throw ConfigError("input size must be positive");
  std::size_t h = input_height, w = input_width;
  for (std::size_t b = 0; b < conv_channels.size(); ++b) {
    if (h < pool_window || w < pool_window) {
      throw ConfigError("input " + std::to_string(input_height) + "x" +
                        std::to_string(input_width) + " is too small: block " + std::to_string(b) +
                        " receives " + std::to_string(h) + "x" + std::to_string(w) +
                        ", smaller than the pooling window " + std::to_string(pool_window));
    }
    h = (h - pool_window) / pool_stride + 1;
    w = (w - pool_window) / pool_stride + 1;
  }
}

std::vector<std::pair<std::size_t, std::size_t>> BrainReNetConfig::spatial_trace() const {
  std::vector<std::pair<std::size_t, std::size_t>> trace{{input_height, input_width}};
  std::size_t h = input_height, w = input_width;
  for (std::size_t b = 0; b < conv_channels.size(); ++b) {
    h = (h - pool_window) / pool_stride + 1;
    w = (w - pool_window) / pool_stride + 1;
    trace.emplace_back(h, w);
  }
  return trace;
}

std::size_t BrainReNetConfig::block_output_channels(std::size_t block) const {
  const std::size_t c = conv_channels.at(block);
  return pooling == PoolingMode::parallel_concat ? 2 * c : c;
}

std::size_t BrainReNetConfig::flatten_length() const {
  const auto [h, w] = spatial_trace().back();
  return block_output_channels(conv_channels.size() - 1) * h * w;
}

std::size_t BrainReNetConfig::parameter_count() const {
  std::size_t total = 0;
  std::size_t c_in = 1;
  for (std::size_t b = 0; b < conv_channels.size(); ++b) {
    const std::size_t c_out = conv_channels[b];
    total += c_out * c_in * kernel_height * kernel_width + 3 * c_out;
    c_in = block_output_channels(b);
  }
  total += flatten_length() * fc1_width + fc1_width;
  total += fc1_width * num_classes + num_classes;
  return total;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0,1)");
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  augment_spec.validate();
}

namespace {
const char* pooling_name(PoolingMode m) {
  return m == PoolingMode::parallel_concat ? "parallel_concat" : "alternating";
}
PoolingMode parse_pooling(const std::string& s) {
  if (s == "parallel_concat") return PoolingMode::parallel_concat;
  if (s == "alternating") return PoolingMode::alternating;
  throw ConfigError("unknown pooling mode '" + s + "'");
}

template <class T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) {
    try {
      j.at(key).get_to(out);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("config field '") + key + "': " + e.what());
    }
  }
}
}  // namespace

void to_json(nlohmann::json& j, const BrainReNetConfig& c) {
  j = {{"input_height", c.input_height},
       {"input_width", c.input_width},
       {"num_classes", c.num_classes},
       {"conv_channels", c.conv_channels},
       {"kernel_height", c.kernel_height},
       {"kernel_width", c.kernel_width},
       {"pool_window", c.pool_window},
       {"pool_stride", c.pool_stride},
       {"fc1_width", c.fc1_width},
       {"dropout_rate", c.dropout_rate},
       {"pooling", pooling_name(c.pooling)},
       {"bn_epsilon", c.bn_epsilon},
       {"bn_momentum", c.bn_momentum}};
}

void from_json(const nlohmann::json& j, BrainReNetConfig& c) {
  read_opt(j, "input_height", c.input_height);
  read_opt(j, "input_width", c.input_width);
  read_opt(j, "num_classes", c.num_classes);
  read_opt(j, "conv_channels", c.conv_channels);
  read_opt(j, "kernel_height", c.kernel_height);
  read_opt(j, "kernel_width", c.kernel_width);
  read_opt(j, "pool_window", c.pool_window);
  read_opt(j, "pool_stride", c.pool_stride);
  read_opt(j, "fc1_width", c.fc1_width);
  read_opt(j, "dropout_rate", c.dropout_rate);
  read_opt(j, "bn_epsilon", c.bn_epsilon);
  read_opt(j, "bn_momentum", c.bn_momentum);
  if (j.contains("pooling")) c.pooling = parse_pooling(j.at("pooling").get<std::string>());
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  const auto& a = c.augment_spec;
  j = {{"learning_rate", c.learning_rate},
       {"momentum", c.momentum},
       {"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"weight_decay", c.weight_decay},
       {"shuffle_seed", c.shuffle_seed},
       {"augment", c.augment},
       {"augment_spec",
        {{"rotation_degrees", {a.rotation_min_degrees, a.rotation_max_degrees}},
         {"shear", {a.shear_min, a.shear_max}},
         {"scale", {a.scale_min, a.scale_max}},
         {"reflect_horizontal", a.reflect_horizontal}}}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  read_opt(j, "learning_rate", c.learning_rate);
  read_opt(j, "momentum", c.momentum);
  read_opt(j, "epochs", c.epochs);
  read_opt(j, "batch_size", c.batch_size);
  read_opt(j, "weight_decay", c.weight_decay);
  read_opt(j, "shuffle_seed", c.shuffle_seed);
  read_opt(j, "augment", c.augment);
  if (j.contains("augment_spec")) {
    const auto& a = j.at("augment_spec");
    auto range = [&](const char* key, double& lo, double& hi) {
      if (!a.contains(key)) return;
      const auto& r = a.at(key);
      if (!r.is_array() || r.size() != 2) throw ConfigError(std::string(key) + " must be [min,max]");
      lo = r[0].get<double>();
      hi = r[1].get<double>();
    };
    range("rotation_degrees", c.augment_spec.rotation_min_degrees, c.augment_spec.rotation_max_degrees);
    range("shear", c.augment_spec.shear_min, c.augment_spec.shear_max);
    range("scale", c.augment_spec.scale_min, c.augment_spec.scale_max);
    read_opt(a, "reflect_horizontal", c.augment_spec.reflect_horizontal);
  }
}

// ---- model -------------------------------------------------------------------

std::vector<std::span<double>> BrainReNetModel::parameters() {
  std::vector<std::span<double>> out;
  for (auto& b : blocks) {
    out.emplace_back(b.filters.data());
    out.emplace_back(b.bias);
    out.emplace_back(b.bn.gamma);
    out.emplace_back(b.bn.beta);
  }
  out.emplace_back(fc1.weights.data());
  out.emplace_back(fc1.bias);
  out.emplace_back(fc2.weights.data());
  out.emplace_back(fc2.bias);
  return out;
}

std::vector<std::span<const double>> BrainReNetModel::parameters() const {
  std::vector<std::span<const double>> out;
  for (auto s : const_cast<BrainReNetModel*>(this)->parameters()) out.emplace_back(s);
  return out;
}

std::size_t BrainReNetModel::parameter_count() const {
  std::size_t total = 0;
  for (auto s : parameters()) total += s.size();
  return total;
}

bool BrainReNetModel::all_finite() const {
  for (auto s : parameters()) {
    for (double v : s) {
      if (!std::isfinite(v)) return false;
    }
  }
  for (const auto& b : blocks) {
    for (double v : b.bn.running_mean) if (!std::isfinite(v)) return false;
    for (double v : b.bn.running_var) if (!std::isfinite(v)) return false;
  }
  return true;
}

namespace {

void he_fill(Tensor& t, std::size_t fan_in, Rng& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (double& v : t.data()) v = dist(rng);
}

nn::ConvSpec conv_spec(const BrainReNetConfig& c) {
  return {c.kernel_height, c.kernel_width, 1, nn::Padding::same};
}

nn::PoolSpec pool_spec(const BrainReNetConfig& c, nn::PoolKind kind) {
  return {c.pool_window, c.pool_stride, kind};
}

bool block_uses_avg(const BrainReNetConfig& c, std::size_t b) {
  return c.pooling == PoolingMode::parallel_concat || b % 2 == 0;
}

bool block_uses_max(const BrainReNetConfig& c, std::size_t b) {
  return c.pooling == PoolingMode::parallel_concat || b % 2 == 1;
}

// [N,C,H,W] + [N,C,H,W] -> [N,2C,H,W]
Tensor concat_channels(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.dim(0), c = a.dim(1), plane = a.dim(2) * a.dim(3);
  Tensor out({n, 2 * c, a.dim(2), a.dim(3)});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.data().data() + i * c * plane, c * plane, out.data().data() + i * 2 * c * plane);
    std::copy_n(b.data().data() + i * c * plane, c * plane,
                out.data().data() + (i * 2 + 1) * c * plane);
  }
  return out;
}

std::pair<Tensor, Tensor> split_channels(const Tensor& t) {
  const std::size_t n = t.dim(0), c = t.dim(1) / 2, plane = t.dim(2) * t.dim(3);
  Tensor a({n, c, t.dim(2), t.dim(3)}), b({n, c, t.dim(2), t.dim(3)});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(t.data().data() + i * 2 * c * plane, c * plane, a.data().data() + i * c * plane);
    std::copy_n(t.data().data() + (i * 2 + 1) * c * plane, c * plane,
                b.data().data() + i * c * plane);
  }
  return {std::move(a), std::move(b)};
}

void check_batch(const BrainReNetModel& model, const Tensor& batch) {
  const auto& c = model.config;
  if (batch.rank() != 4 || batch.dim(1) != 1 || batch.dim(2) != c.input_height ||
      batch.dim(3) != c.input_width) {
    throw DimensionError("BRAIN-RENet expects [N,1," + std::to_string(c.input_height) + "," +
                         std::to_string(c.input_width) + "] input, got " +
                         shape_string(batch.shape()));
  }
}

std::size_t argmax_row(const Tensor& m, std::size_t row) {
  const std::size_t cols = m.dim(1);
  const double* r = m.data().data() + row * cols;
  return static_cast<std::size_t>(std::max_element(r, r + cols) - r);
}

}  // namespace

BrainReNetModel build_model(const BrainReNetConfig& config, std::uint64_t seed) {
  config.validate();
  BrainReNetModel m;
  m.config = config;
  m.seed = seed;
  Rng rng(seed);
  std::size_t c_in = 1;
  for (std::size_t b = 0; b < config.num_blocks(); ++b) {
    const std::size_t c_out = config.conv_channels[b];
    ConvBlock block;
    block.filters = Tensor({c_out, c_in, config.kernel_height, config.kernel_width});
    he_fill(block.filters, c_in * config.kernel_height * config.kernel_width, rng);
    block.bias.assign(c_out, 0.0);
    block.bn = nn::BatchNormParams::identity(c_out);
    block.bn.epsilon = config.bn_epsilon;
    block.bn.momentum = config.bn_momentum;
    m.blocks.push_back(std::move(block));
    c_in = config.block_output_channels(b);
  }
  const std::size_t flat = config.flatten_length();
  m.fc1.weights = Tensor({config.fc1_width, flat});
  he_fill(m.fc1.weights, flat, rng);
  m.fc1.bias.assign(config.fc1_width, 0.0);
  m.fc2.weights = Tensor({config.num_classes, config.fc1_width});
  he_fill(m.fc2.weights, config.fc1_width, rng);
  m.fc2.bias.assign(config.num_classes, 0.0);
  return m;
}

Tensor to_batch(std::span<const data::GrayImage> images) {
  if (images.empty()) throw DataError("cannot build a batch from zero images");
  const std::size_t h = images[0].height, w = images[0].width;
  Tensor batch({images.size(), 1, h, w});
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].height != h || images[i].width != w) {
      throw DimensionError("image " + std::to_string(i) + " is " + std::to_string(images[i].width) +
                           "x" + std::to_string(images[i].height) + ", batch expects " +
                           std::to_string(w) + "x" + std::to_string(h));
    }
    std::copy(images[i].pixels.begin(), images[i].pixels.end(),
              batch.data().begin() + static_cast<std::ptrdiff_t>(i * h * w));
  }
  return batch;
}

ForwardResult forward(const BrainReNetModel& model, const Tensor& batch) {
  check_batch(model, batch);
  const auto& cfg = model.config;
  Tensor x = batch;
  for (std::size_t b = 0; b < model.blocks.size(); ++b) {
    const ConvBlock& blk = model.blocks[b];
    Tensor z = nn::relu(nn::conv2d(x, blk.filters, blk.bias, conv_spec(cfg)));
    Tensor normed = nn::batch_norm(z, blk.bn).output;
    if (cfg.pooling == PoolingMode::parallel_concat) {
      x = concat_channels(nn::avg_pool(normed, pool_spec(cfg, nn::PoolKind::average)),
                          nn::max_pool(normed, pool_spec(cfg, nn::PoolKind::max)).output);
    } else if (block_uses_avg(cfg, b)) {
      x = nn::avg_pool(normed, pool_spec(cfg, nn::PoolKind::average));
    } else {
      x = nn::max_pool(normed, pool_spec(cfg, nn::PoolKind::max)).output;
    }
  }
  const std::size_t n = batch.dim(0);
  Tensor flat = x.reshaped({n, x.size() / n});
  ForwardResult r;
  r.fc1_activations = nn::relu(nn::dense(flat, model.fc1));
  r.logits = nn::dense(r.fc1_activations, model.fc2);
  return r;
}

ForwardTrace forward_train(BrainReNetModel& model, const Tensor& batch, Rng& rng) {
  check_batch(model, batch);
  const auto& cfg = model.config;
  ForwardTrace t;
  Tensor x = batch;
  for (std::size_t b = 0; b < model.blocks.size(); ++b) {
    ConvBlock& blk = model.blocks[b];
    ForwardTrace::Block fb;
    fb.input = x;
    fb.conv_out = nn::conv2d(x, blk.filters, blk.bias, conv_spec(cfg));
    nn::BatchNormResult bn = nn::batch_norm(nn::relu(fb.conv_out), blk.bn, Mode::train);
    fb.bn = std::move(bn.cache);
    fb.bn_shape = bn.output.shape();
    fb.used_avg = block_uses_avg(cfg, b);
    fb.used_max = block_uses_max(cfg, b);
    Tensor avg, mx;
    if (fb.used_avg) avg = nn::avg_pool(bn.output, pool_spec(cfg, nn::PoolKind::average));
    if (fb.used_max) {
      nn::MaxPoolResult mp = nn::max_pool(bn.output, pool_spec(cfg, nn::PoolKind::max));
      mx = std::move(mp.output);
      fb.argmax = std::move(mp.argmax);
    }
    if (fb.used_avg && fb.used_max) {
      x = concat_channels(avg, mx);
    } else {
      x = fb.used_avg ? std::move(avg) : std::move(mx);
    }
    t.blocks.push_back(std::move(fb));
  }
  const std::size_t n = batch.dim(0);
  t.flat = x.reshaped({n, x.size() / n});
  t.fc1_pre = nn::dense(t.flat, model.fc1);
  t.fc1_act = nn::relu(t.fc1_pre);
  nn::DropoutResult d = nn::dropout(t.fc1_act, cfg.dropout_rate, Mode::train, rng);
  t.dropped = std::move(d.output);
  t.dropout_mask = std::move(d.mask);
  t.logits = nn::dense(t.dropped, model.fc2);
  return t;
}

ModelGradients backward(const BrainReNetModel& model, const ForwardTrace& trace,
                        const Tensor& logits_grad) {
  if (trace.blocks.size() != model.blocks.size()) {
    throw StateError("backward: trace has " + std::to_string(trace.blocks.size()) +
                     " blocks, model has " + std::to_string(model.blocks.size()));
  }
  const auto& cfg = model.config;
  const std::size_t nb = model.blocks.size();
  ModelGradients g;
  g.params.resize(4 * nb + 4);

  nn::DenseGrads fc2 = nn::dense_backward(trace.dropped, model.fc2, logits_grad);
  g.params[4 * nb + 2] = std::move(fc2.weights.values());
  g.params[4 * nb + 3] = std::move(fc2.bias);
  Tensor d = nn::dropout_backward(trace.dropout_mask, fc2.input);
  d = nn::relu_backward(trace.fc1_pre, d);
  nn::DenseGrads fc1 = nn::dense_backward(trace.flat, model.fc1, d);
  g.params[4 * nb + 0] = std::move(fc1.weights.values());
  g.params[4 * nb + 1] = std::move(fc1.bias);

  const auto& last_shape = trace.blocks.back().bn_shape;
  const auto [oh, ow] = cfg.spatial_trace().back();
  d = fc1.input.reshaped({last_shape[0], cfg.block_output_channels(nb - 1), oh, ow});

  for (std::size_t bi = nb; bi-- > 0;) {
    const ConvBlock& blk = model.blocks[bi];
    const ForwardTrace::Block& fb = trace.blocks[bi];
    Tensor d_bn(fb.bn_shape);
    if (fb.used_avg && fb.used_max) {
      auto [d_avg, d_max] = split_channels(d);
      d_bn = nn::avg_pool_backward(fb.bn_shape, pool_spec(cfg, nn::PoolKind::average), d_avg);
      const Tensor from_max = nn::max_pool_backward(fb.bn_shape, fb.argmax, d_max);
      for (std::size_t i = 0; i < d_bn.size(); ++i) d_bn[i] += from_max[i];
    } else if (fb.used_avg) {
      d_bn = nn::avg_pool_backward(fb.bn_shape, pool_spec(cfg, nn::PoolKind::average), d);
    } else {
      d_bn = nn::max_pool_backward(fb.bn_shape, fb.argmax, d);
    }
    nn::BatchNormGrads bn = nn::batch_norm_backward(fb.bn, blk.bn, d_bn);
    Tensor d_conv = nn::relu_backward(fb.conv_out, bn.input);
    nn::ConvGrads conv = nn::conv2d_backward(fb.input, blk.filters, conv_spec(cfg), d_conv);
    g.params[4 * bi + 0] = std::move(conv.filters.values());
    g.params[4 * bi + 1] = std::move(conv.bias);
    g.params[4 * bi + 2] = std::move(bn.gamma);
    g.params[4 * bi + 3] = std::move(bn.beta);
    d = std::move(conv.input);
  }
  g.input = std::move(d);
  return g;
}

// ---- training ----------------------------------------------------------------

namespace {

// Batch boundaries over n items; a trailing batch of one is folded into its
// predecessor so train-mode batch-norm always sees at least two samples.
std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, std::size_t bs) {
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  for (std::size_t start = 0; start < n; start += bs) ranges.emplace_back(start, std::min(n, start + bs));
  if (ranges.size() > 1 && ranges.back().second - ranges.back().first == 1) {
    ranges.pop_back();
    ranges.back().second = n;
  }
  return ranges;
}

template <class Fn>
void for_each_chunk(const data::Dataset& set, std::size_t chunk, Fn&& fn) {
  for (std::size_t start = 0; start < set.size(); start += chunk) {
    const std::size_t end = std::min(set.size(), start + chunk);
    const Tensor batch = to_batch(std::span(set.images).subspan(start, end - start));
    fn(start, end, batch);
  }
}

constexpr std::size_t kInferenceChunk = 64;

}  // namespace

std::pair<double, double> evaluate(const BrainReNetModel& model, const data::Dataset& set) {
  if (set.size() == 0) {
    return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  }
  double loss = 0.0;
  std::size_t correct = 0;
  for_each_chunk(set, kInferenceChunk, [&](std::size_t start, std::size_t end, const Tensor& batch) {
    const ForwardResult r = forward(model, batch);
    const std::span<const int> labels(set.labels.data() + start, end - start);
    loss += nn::softmax_cross_entropy(r.logits, labels).loss * static_cast<double>(end - start);
    for (std::size_t i = 0; i < end - start; ++i) {
      correct += static_cast<int>(argmax_row(r.logits, i)) == labels[i];
    }
  });
  const auto n = static_cast<double>(set.size());
  return {loss / n, static_cast<double>(correct) / n};
}

TrainResult train(BrainReNetModel model, const data::Dataset& train_set,
                  const data::Dataset& val, const TrainConfig& tc, std::uint64_t seed) {
  tc.validate();
  TrainResult result{model, {}};
  if (tc.epochs == 0) return result;
  if (train_set.size() == 0) throw DataError("BRAIN-RENet training set is empty");
  train_set.validate();

  Rng shuffle_rng(tc.shuffle_seed);
  Rng augment_rng(derive_seed(seed, 1));
  Rng dropout_rng(derive_seed(seed, 2));
  auto params = model.parameters();
  std::vector<std::vector<double>> velocity;
  for (auto p : params) velocity.emplace_back(p.size(), 0.0);

  std::vector<std::size_t> order(train_set.size());
  double best_val = -1.0;
  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (const auto& [start, end] : batch_ranges(order.size(), tc.batch_size)) {
      std::vector<data::GrayImage> images;
      std::vector<int> labels;
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t idx = order[k];
        images.push_back(tc.augment ? data::augment(train_set.images[idx], tc.augment_spec, augment_rng)
                                    : train_set.images[idx]);
        labels.push_back(train_set.labels[idx]);
      }
      const ForwardTrace trace = forward_train(model, to_batch(images), dropout_rng);
      const nn::SoftmaxCrossEntropy ce = nn::softmax_cross_entropy(trace.logits, labels);
      const ModelGradients grads = backward(model, trace, ce.grad);
      for (std::size_t p = 0; p < params.size(); ++p) {
        auto w = params[p];
        auto& v = velocity[p];
        const auto& g = grads.params[p];
        for (std::size_t i = 0; i < w.size(); ++i) {
          v[i] = tc.momentum * v[i] - tc.learning_rate * (g[i] + tc.weight_decay * w[i]);
          w[i] += v[i];
        }
      }
      loss_sum += ce.loss * static_cast<double>(end - start);
      for (std::size_t i = 0; i < labels.size(); ++i) {
        correct += static_cast<int>(argmax_row(trace.logits, i)) == labels[i];
      }
    }
    if (!model.all_finite()) {
      throw ConvergenceError("BRAIN-RENet training diverged in epoch " + std::to_string(epoch),
                             std::numeric_limits<double>::infinity());
    }
    const auto n = static_cast<double>(train_set.size());
    result.history.train_loss.push_back(loss_sum / n);
    result.history.train_accuracy.push_back(static_cast<double>(correct) / n);
    const auto [val_loss, val_acc] = evaluate(model, val);
    result.history.val_loss.push_back(val_loss);
    result.history.val_accuracy.push_back(val_acc);
    const bool last = epoch + 1 == tc.epochs;
    if (val.size() > 0 ? val_acc > best_val : last) {
      best_val = val_acc;
      result.model = model;
      result.history.selected_epoch = static_cast<int>(epoch);
    }
  }
  return result;
}

FeatureMatrix extract_deep_features(const BrainReNetModel& model, const data::Dataset& set) {
  FeatureMatrix fm{Matrix(set.size(), model.config.fc1_width), set.labels, "renet"};
  for_each_chunk(set, kInferenceChunk, [&](std::size_t start, std::size_t end, const Tensor& batch) {
    const ForwardResult r = forward(model, batch);
    std::copy(r.fc1_activations.data().begin(), r.fc1_activations.data().end(),
              fm.values.row(start).begin());
    (void)end;
  });
  return fm;
}

Matrix predict_proba(const BrainReNetModel& model, const data::Dataset& set) {
  Matrix probs(set.size(), model.config.num_classes);
  for_each_chunk(set, kInferenceChunk, [&](std::size_t start, std::size_t, const Tensor& batch) {
    const Tensor p = nn::softmax(forward(model, batch).logits);
    std::copy(p.data().begin(), p.data().end(), probs.row(start).begin());
  });
  return probs;
}

// ---- serialization -------------------------------------------------------------

namespace {
constexpr std::string_view kMagic = "BRNR";
}

std::vector<std::uint8_t> encode_model(const BrainReNetModel& model) {
  const auto& c = model.config;
  io::ByteWriter w;
  w.magic(kMagic);
  w.u32(kModelFileVersion);
  w.u32(static_cast<std::uint32_t>(c.input_height));
  w.u32(static_cast<std::uint32_t>(c.input_width));
  w.u32(static_cast<std::uint32_t>(c.num_classes));
  w.u32(static_cast<std::uint32_t>(c.num_blocks()));
  for (std::size_t ch : c.conv_channels) w.u32(static_cast<std::uint32_t>(ch));
  w.u32(static_cast<std::uint32_t>(c.kernel_height));
  w.u32(static_cast<std::uint32_t>(c.kernel_width));
  w.u32(static_cast<std::uint32_t>(c.pool_window));
  w.u32(static_cast<std::uint32_t>(c.pool_stride));
  w.u32(static_cast<std::uint32_t>(c.fc1_width));
  w.u32(c.pooling == PoolingMode::parallel_concat ? 0 : 1);
  w.u32(c.allow_reduced_depth ? 1 : 0);
  w.f64(c.dropout_rate);
  w.f64(c.bn_epsilon);
  w.f64(c.bn_momentum);
  w.u64(model.seed);
  for (const auto& b : model.blocks) {
    w.f32s(b.filters.data());
    w.f32s(b.bias);
    w.f32s(b.bn.gamma);
    w.f32s(b.bn.beta);
    w.f32s(b.bn.running_mean);
    w.f32s(b.bn.running_var);
  }
  w.f32s(model.fc1.weights.data());
  w.f32s(model.fc1.bias);
  w.f32s(model.fc2.weights.data());
  w.f32s(model.fc2.bias);
  return w.bytes();
}

BrainReNetModel decode_model(std::vector<std::uint8_t> bytes, const std::string& origin) {
  io::ByteReader r(std::move(bytes), origin);
  r.expect_magic(kMagic);
  r.expect_version(kModelFileVersion);
  BrainReNetConfig c;
  c.input_height = r.u32();
  c.input_width = r.u32();
  c.num_classes = r.u32();
  const std::uint32_t blocks = r.u32();
  if (blocks == 0 || blocks > 6) {
    throw FormatError(origin + ": block count " + std::to_string(blocks) + " outside 1..6");
  }
  c.conv_channels.resize(blocks);
  for (auto& ch : c.conv_channels) ch = r.u32();
  c.kernel_height = r.u32();
  c.kernel_width = r.u32();
  c.pool_window = r.u32();
  c.pool_stride = r.u32();
  c.fc1_width = r.u32();
  const std::uint32_t pooling = r.u32();
  if (pooling > 1) throw FormatError(origin + ": unknown pooling mode " + std::to_string(pooling));
  c.pooling = pooling == 0 ? PoolingMode::parallel_concat : PoolingMode::alternating;
  c.allow_reduced_depth = r.u32() != 0;
  c.dropout_rate = r.f64();
  c.bn_epsilon = r.f64();
  c.bn_momentum = r.f64();
  const std::uint64_t seed = r.u64();
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw FormatError(origin + ": invalid config block: " + e.what());
  }
  const std::size_t running = 2 * std::accumulate(c.conv_channels.begin(), c.conv_channels.end(),
                                                   std::size_t{0});
  const std::size_t expected = r.offset() + 4 * (c.parameter_count() + running);
  if (expected != r.size()) {
    throw CorruptionError(origin + ": config implies " + std::to_string(expected) +
                          " bytes but file has " + std::to_string(r.size()));
  }
  BrainReNetModel m = build_model(c, seed);
  for (auto& b : m.blocks) {
    r.f32s(b.filters.data());
    r.f32s(b.bias);
    r.f32s(b.bn.gamma);
    r.f32s(b.bn.beta);
    r.f32s(b.bn.running_mean);
    r.f32s(b.bn.running_var);
  }
  r.f32s(m.fc1.weights.data());
  r.f32s(m.fc1.bias);
  r.f32s(m.fc2.weights.data());
  r.f32s(m.fc2.bias);
  r.expect_end();
  return m;
}

void save_model(const BrainReNetModel& model, const std::filesystem::path& path) {
  io::write_file(path, encode_model(model));
}

BrainReNetModel load_model(const std::filesystem::path& path) {
  return decode_model(io::read_file(path), path.string());
}

}  // namespace hybridboost::renet
