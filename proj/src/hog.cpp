#include "hybridboost/hog.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "hybridboost/errors.hpp"
#include "hybridboost/parallel.hpp"

namespace hybridboost::hog {

void HogConfig::validate() const {
  if (cell_size == 0) throw ConfigError("hog cell_size must be positive");
  if (block_cells == 0) throw ConfigError("hog block_cells must be positive");
  if (block_stride == 0) throw ConfigError("hog block_stride must be positive");
  if (bins < 2) throw ConfigError("hog needs at least 2 bins, got " + std::to_string(bins));
  if (!(l2hys_clip > 0.0)) throw ConfigError("hog l2hys_clip must be positive");
}

void HogConfig::check_image(std::size_t width, std::size_t height) const {
  validate();
  if (width % cell_size != 0 || height % cell_size != 0) {
    throw ConfigError("image " + std::to_string(width) + "x" + std::to_string(height) +
                      " is not divisible by hog cell_size " + std::to_string(cell_size));
  }
  if (width / cell_size < block_cells || height / cell_size < block_cells) {
    throw ConfigError("image " + std::to_string(width) + "x" + std::to_string(height) +
                      " holds fewer cells than one hog block");
  }
}

std::size_t HogConfig::descriptor_length(std::size_t width, std::size_t height) const {
  check_image(width, height);
  const std::size_t by = (height / cell_size - block_cells) / block_stride + 1;
  const std::size_t bx = (width / cell_size - block_cells) / block_stride + 1;
  return by * bx * block_cells * block_cells * bins;
}

void to_json(nlohmann::json& j, const HogConfig& c) {
  j = {{"cell_size", c.cell_size},
       {"block_cells", c.block_cells},
       {"block_stride", c.block_stride},
       {"bins", c.bins},
       {"l2hys_clip", c.l2hys_clip}};
}

void from_json(const nlohmann::json& j, HogConfig& c) {
  try {
    if (j.contains("cell_size")) j.at("cell_size").get_to(c.cell_size);
    if (j.contains("block_cells")) j.at("block_cells").get_to(c.block_cells);
    if (j.contains("block_stride")) j.at("block_stride").get_to(c.block_stride);
    if (j.contains("bins")) j.at("bins").get_to(c.bins);
    if (j.contains("l2hys_clip")) j.at("l2hys_clip").get_to(c.l2hys_clip);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("hog config: ") + e.what());
  }
}

Gradients image_gradients(const data::GrayImage& image) {
  const std::size_t w = image.width, h = image.height;
  if (w < 3 || h < 3) {
    throw DimensionError("image_gradients needs at least 3x3 pixels, got " + std::to_string(w) +
                         "x" + std::to_string(h));
  }
  Gradients g{w, h, std::vector<double>(w * h), std::vector<double>(w * h)};
  for (std::size_t y = 0; y < h; ++y) {
    const std::size_t up = y == 0 ? 0 : y - 1;
    const std::size_t down = y + 1 == h ? y : y + 1;
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t left = x == 0 ? 0 : x - 1;
      const std::size_t right = x + 1 == w ? x : x + 1;
      g.gx[y * w + x] = (image.at(right, y) - image.at(left, y)) / 2.0;
      g.gy[y * w + x] = (image.at(x, down) - image.at(x, up)) / 2.0;
    }
  }
  return g;
}

namespace {

constexpr double kZeroNorm = 1e-12;

void l2hys(std::span<double> v, double clip) {
  auto norm = [&] {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
  };
  double n = norm();
  if (n < kZeroNorm) {
    std::fill(v.begin(), v.end(), 0.0);
    return;
  }
  for (double& x : v) x = std::min(x / n, clip);
  n = norm();
  for (double& x : v) x /= n;
}

}  // namespace

HogDescriptor hog_descriptor(const data::GrayImage& image, const HogConfig& config) {
  config.check_image(image.width, image.height);
  const Gradients g = image_gradients(image);
  const std::size_t cells_x = image.width / config.cell_size;
  const std::size_t cells_y = image.height / config.cell_size;
  const std::size_t bins = config.bins;
  const double bin_width = 180.0 / static_cast<double>(bins);

  std::vector<double> cells(cells_x * cells_y * bins, 0.0);
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      const double gx = g.gx[y * image.width + x];
      const double gy = g.gy[y * image.width + x];
      const double mag = std::hypot(gx, gy);
      if (mag == 0.0) continue;
      double angle = std::atan2(gy, gx) * 180.0 / std::numbers::pi;
      if (angle < 0.0) angle += 180.0;
      if (angle >= 180.0) angle -= 180.0;
      const double pos = angle / bin_width - 0.5;
      const double lo_f = std::floor(pos);
      const double frac = pos - lo_f;
      const auto lo = static_cast<std::size_t>((static_cast<long>(lo_f) + static_cast<long>(bins)) %
                                               static_cast<long>(bins));
      const std::size_t hi = (lo + 1) % bins;
      double* hist = &cells[((y / config.cell_size) * cells_x + x / config.cell_size) * bins];
      hist[lo] += (1.0 - frac) * mag;
      hist[hi] += frac * mag;
    }
  }

  HogDescriptor d;
  d.blocks_y = (cells_y - config.block_cells) / config.block_stride + 1;
  d.blocks_x = (cells_x - config.block_cells) / config.block_stride + 1;
  d.cells_per_block = config.block_cells * config.block_cells;
  d.bins = bins;
  d.values.reserve(d.blocks_y * d.blocks_x * d.block_length());
  for (std::size_t by = 0; by < d.blocks_y; ++by) {
    for (std::size_t bx = 0; bx < d.blocks_x; ++bx) {
      const std::size_t start = d.values.size();
      for (std::size_t cy = 0; cy < config.block_cells; ++cy) {
        for (std::size_t cx = 0; cx < config.block_cells; ++cx) {
          const std::size_t cell = (by * config.block_stride + cy) * cells_x +
                                   bx * config.block_stride + cx;
          d.values.insert(d.values.end(), cells.begin() + static_cast<std::ptrdiff_t>(cell * bins),
                          cells.begin() + static_cast<std::ptrdiff_t>((cell + 1) * bins));
        }
      }
      l2hys(std::span(d.values).subspan(start), config.l2hys_clip);
    }
  }
  return d;
}

FeatureMatrix hog_features(const data::Dataset& dataset, const HogConfig& config) {
  if (dataset.size() == 0) return FeatureMatrix{Matrix(0, 0), {}, "hog"};
  const auto& first = dataset.images.front();
  const std::size_t dim = config.descriptor_length(first.width, first.height);
  FeatureMatrix fm{Matrix(dataset.size(), dim), dataset.labels, "hog"};
  parallel_for(dataset.size(), [&](std::size_t i) {
    const HogDescriptor d = hog_descriptor(dataset.images[i], config);
    if (d.values.size() != dim) {
      throw DimensionError("image " + std::to_string(i) + " yields a hog descriptor of length " +
                           std::to_string(d.values.size()) + ", expected " + std::to_string(dim));
    }
    std::copy(d.values.begin(), d.values.end(), fm.values.row(i).begin());
  });
  return fm;
}

}  // namespace hybridboost::hog
