#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace hybridboost::data {

/// Single-channel raster with intensities in [0, 1], row-major.
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> pixels;

  GrayImage() = default;
  GrayImage(std::size_t w, std::size_t h, double fill = 0.0)
      : width(w), height(h), pixels(w * h, fill) {}
  GrayImage(std::size_t w, std::size_t h, std::vector<double> values);

  double& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
  double at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }

  void clamp_unit();
  double mean() const;

  bool operator==(const GrayImage&) const = default;
};

/// Decodes binary PGM (P5), 8- or 16-bit, rescaling by maxval.
GrayImage decode_pgm(std::span<const std::uint8_t> bytes, const std::string& origin = "<memory>");
/// Encodes as 8-bit P5 (maxval 255) or 16-bit P5 when `maxval` > 255.
std::vector<std::uint8_t> encode_pgm(const GrayImage& image, std::uint16_t maxval = 255);
void save_pgm(const GrayImage& image, const std::filesystem::path& path,
              std::uint16_t maxval = 255);

/// True when this build can decode PNG files.
bool png_supported();

/// Reads a .pgm file, or a .png file when png_supported().
GrayImage load_image(const std::filesystem::path& path);

/// Bilinear resampling with half-pixel centers; edges are clamped.
GrayImage resize_bilinear(const GrayImage& image, std::size_t out_width, std::size_t out_height);

}  // namespace hybridboost::data
