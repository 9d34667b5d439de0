#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "hybridboost/brain_renet.hpp"
#include "hybridboost/grad_check.hpp"
#include "hybridboost/layers.hpp"

namespace support {

/// Two-block 16x16 network used for end-to-end gradient checks.
inline hybridboost::renet::BrainReNetConfig toy_config() {
  hybridboost::renet::BrainReNetConfig c;
  c.input_height = 16;
  c.input_width = 16;
  c.num_classes = 3;
  c.conv_channels = {2, 3};
  c.fc1_width = 8;
  c.dropout_rate = 0.5;
  c.allow_reduced_depth = true;
  return c;
}

/// Largest relative error between backprop and central differences over
/// every parameter and input pixel of the toy network on a 2-sample batch.
/// Dropout draws from a freshly seeded generator on every evaluation so the
/// loss is a fixed function of the weights.
inline double toy_network_grad_error(std::uint64_t seed, double eps = 1e-6) {
  using namespace hybridboost;
  renet::BrainReNetModel model = renet::build_model(toy_config(), seed);
  Rng rng(seed ^ 0xabcdefULL);
  Tensor batch({2, 1, 16, 16});
  for (double& v : batch.data()) v = uniform01(rng);
  const std::vector<int> labels{0, 2};
  const std::uint64_t drop_seed = seed + 7;

  auto loss = [&]() {
    Rng drop(drop_seed);
    const auto trace = renet::forward_train(model, batch, drop);
    return nn::softmax_cross_entropy(trace.logits, labels).loss;
  };
  Rng drop(drop_seed);
  const auto trace = renet::forward_train(model, batch, drop);
  const auto sce = nn::softmax_cross_entropy(trace.logits, labels);
  const renet::ModelGradients grads = renet::backward(model, trace, sce.grad);

  double worst = 0.0;
  auto params = model.parameters();
  for (std::size_t p = 0; p < params.size(); ++p) {
    worst = std::max(worst, nn::grad_check(params[p], loss, grads.params[p], eps));
  }
  worst = std::max(worst, nn::grad_check(batch.data(), loss, grads.input.data(), eps));
  return worst;
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("hybridboost_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace support
