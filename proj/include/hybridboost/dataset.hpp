#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "hybridboost/image.hpp"

namespace hybridboost::data {

struct Dataset {
  std::vector<GrayImage> images;
  std::vector<int> labels;
  std::vector<std::string> class_names;

  std::size_t size() const { return images.size(); }
  std::size_t num_classes() const { return class_names.size(); }
  std::vector<std::size_t> class_counts() const;
  /// Throws DataError on length mismatch or out-of-range labels.
  void validate() const;
};

Dataset subset(const Dataset& dataset, std::span<const std::size_t> indices);
Dataset resize_all(const Dataset& dataset, std::size_t width, std::size_t height);

/// Index partition of a dataset. Each list is sorted ascending.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
  std::vector<std::string> warnings;

  /// train followed by validation.
  std::vector<std::size_t> training_portion() const;
};

/// Per class: shuffle from `seed`, send round(n * train_fraction) to the
/// training portion and the rest to test, then carve
/// round(validation_fraction * portion) of the training portion off as
/// validation.
Split stratified_split(std::span<const int> labels, double train_fraction, std::uint64_t seed,
                       double validation_fraction = 0.1);

/// Layout `root/<class_name>/*.pgm` (and *.png when supported). Classes are
/// sorted by directory name, files by filename.
Dataset load_image_directory(const std::filesystem::path& root);

/// CSV with header `path,label`; relative paths resolve against the manifest's
/// directory. Labels are class names or integer ids.
Dataset load_manifest(const std::filesystem::path& manifest);

/// Writes `root/<class>/<index>.pgm` for every image plus `root/manifest.csv`.
void write_image_directory(const Dataset& dataset, const std::filesystem::path& root);

enum class SynthKind {
  detect2,    // normal vs tumor
  classify3,  // disk / annulus / bar lesions
  screen4,    // normal plus the three lesion shapes, for chained runs
};

SynthKind parse_synth_kind(const std::string& name);
std::string synth_kind_name(SynthKind kind);

/// Deterministic toy MRI-like phantoms. Every image has a smooth
/// Gaussian-blob brain background, lesion classes add a bright structure,
/// and all images get additive Gaussian noise with sigma `noise_sigma`.
Dataset synth_dataset(SynthKind kind, std::size_t n_per_class, std::size_t image_size,
                      std::uint64_t seed, double noise_sigma = 0.05);

}  // namespace hybridboost::data
