#include "hybridboost/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "hybridboost/errors.hpp"

namespace hybridboost::data {

void AugmentSpec::validate() const {
  if (rotation_min_degrees > rotation_max_degrees || shear_min > shear_max ||
      scale_min > scale_max) {
    throw ConfigError("augment ranges must satisfy min <= max");
  }
  if (scale_min <= 0.0) throw ConfigError("augment scale must be positive");
}

AffineParams sample_affine(const AugmentSpec& spec, Rng& rng) {
  spec.validate();
  AffineParams p;
  p.rotation_degrees = uniform(rng, spec.rotation_min_degrees, spec.rotation_max_degrees);
  p.shear = uniform(rng, spec.shear_min, spec.shear_max);
  p.scale = uniform(rng, spec.scale_min, spec.scale_max);
  p.reflect = spec.reflect_horizontal && uniform01(rng) < 0.5;
  return p;
}

namespace {

double sample_zero_fill(const GrayImage& image, double u, double v) {
  const double fx = std::floor(u);
  const double fy = std::floor(v);
  const double wx = u - fx;
  const double wy = v - fy;
  const long x0 = static_cast<long>(fx);
  const long y0 = static_cast<long>(fy);
  auto pixel = [&](long x, long y) {
    if (x < 0 || y < 0 || x >= static_cast<long>(image.width) ||
        y >= static_cast<long>(image.height)) {
      return 0.0;
    }
    return image.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y));
  };
  const double top = pixel(x0, y0) * (1.0 - wx) + pixel(x0 + 1, y0) * wx;
  const double bottom = pixel(x0, y0 + 1) * (1.0 - wx) + pixel(x0 + 1, y0 + 1) * wx;
  return top * (1.0 - wy) + bottom * wy;
}

}  // namespace

GrayImage apply_affine(const GrayImage& image, const AffineParams& params) {
  if (params.scale <= 0.0) throw ConfigError("affine scale must be positive");
  const double theta = params.rotation_degrees * std::numbers::pi / 180.0;
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const double flip = params.reflect ? -1.0 : 1.0;
  const double k = params.scale;
  const double h = params.shear;
  // Forward A = R * [[1,h],[0,1]] * k * diag(flip,1). Its inverse:
  //   A^-1 = diag(flip,1) * (1/k) * [[1,-h],[0,1]] * R^T
  const double cx = (static_cast<double>(image.width) - 1.0) / 2.0;
  const double cy = (static_cast<double>(image.height) - 1.0) / 2.0;
  GrayImage out(image.width, image.height);
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      const double dx = static_cast<double>(x) - cx;
      const double dy = static_cast<double>(y) - cy;
      const double rx = c * dx + s * dy;
      const double ry = -s * dx + c * dy;
      const double sx = (rx - h * ry) / k;
      const double sy = ry / k;
      const double u = flip * sx + cx;
      const double v = sy + cy;
      out.at(x, y) = std::clamp(sample_zero_fill(image, u, v), 0.0, 1.0);
    }
  }
  return out;
}

GrayImage augment(const GrayImage& image, const AugmentSpec& spec, Rng& rng) {
  return apply_affine(image, sample_affine(spec, rng));
}

}  // namespace hybridboost::data
