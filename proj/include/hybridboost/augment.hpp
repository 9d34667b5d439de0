#pragma once

#include "hybridboost/image.hpp"
#include "hybridboost/rng.hpp"

namespace hybridboost::data {

/// Sampling ranges for the online training augmentation. Each image draws
/// one rotation, shear and scale uniformly from its range plus a fair coin
/// for horizontal mirroring.
struct AugmentSpec {
  double rotation_min_degrees = 0.0;
  double rotation_max_degrees = 360.0;
  double shear_min = -0.5;
  double shear_max = 0.05;
  double scale_min = 0.5;
  double scale_max = 1.0;
  bool reflect_horizontal = true;

  void validate() const;
  bool operator==(const AugmentSpec&) const = default;
};

/// One concrete transform. Applied about the image center as
/// rotate * shear * scale * reflect (reflect acts first).
struct AffineParams {
  double rotation_degrees = 0.0;
  double shear = 0.0;
  double scale = 1.0;
  bool reflect = false;
};

AffineParams sample_affine(const AugmentSpec& spec, Rng& rng);

/// Inverse-maps each output pixel and samples bilinearly; pixels that land
/// outside the source are 0. Output dims equal input dims.
GrayImage apply_affine(const GrayImage& image, const AffineParams& params);

GrayImage augment(const GrayImage& image, const AugmentSpec& spec, Rng& rng);

}  // namespace hybridboost::data
