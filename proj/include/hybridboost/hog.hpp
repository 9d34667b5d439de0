#pragma once

#include <cstddef>
#include <vector>

#include "json.hpp"

#include "hybridboost/dataset.hpp"
#include "hybridboost/image.hpp"
#include "hybridboost/matrix.hpp"

namespace hybridboost::hog {

/// Unsigned-orientation (0..180 degrees) HOG parameters.
struct HogConfig {
  std::size_t cell_size = 8;    // pixels per cell side
  std::size_t block_cells = 2;  // cells per block side
  std::size_t block_stride = 1; // in cells
  std::size_t bins = 9;
  double l2hys_clip = 0.2;

  /// Throws ConfigError on zero sizes, bins < 2, or a non-positive clip.
  void validate() const;
  /// Throws ConfigError when an image of this size cannot be described.
  void check_image(std::size_t width, std::size_t height) const;
  std::size_t descriptor_length(std::size_t width, std::size_t height) const;

  bool operator==(const HogConfig&) const = default;
};

void to_json(nlohmann::json& j, const HogConfig& c);
void from_json(const nlohmann::json& j, HogConfig& c);

struct Gradients {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> gx;
  std::vector<double> gy;
};

/// Central differences (I[x+1] - I[x-1]) / 2 in each direction, with
/// replicated borders. Requires at least 3x3 pixels.
Gradients image_gradients(const data::GrayImage& image);

struct HogDescriptor {
  std::size_t blocks_y = 0;
  std::size_t blocks_x = 0;
  std::size_t cells_per_block = 0;
  std::size_t bins = 0;
  /// Blocks in row-major order; inside a block, cells row-major, then bins.
  std::vector<double> values;

  std::size_t block_length() const { return cells_per_block * bins; }
};

HogDescriptor hog_descriptor(const data::GrayImage& image, const HogConfig& config);

/// One descriptor row per image (source tag "hog").
FeatureMatrix hog_features(const data::Dataset& dataset, const HogConfig& config);

}  // namespace hybridboost::hog
