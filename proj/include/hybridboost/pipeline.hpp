#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "hybridboost/brain_renet.hpp"
#include "hybridboost/classifiers.hpp"
#include "hybridboost/dataset.hpp"
#include "hybridboost/hog.hpp"
#include "hybridboost/metrics.hpp"

namespace hybridboost::pipeline {

enum class Phase { detect, classify };

std::string phase_name(Phase phase);

struct SynthSource {
  data::SynthKind kind = data::SynthKind::detect2;
  std::size_t n_per_class = 100;
  double noise = 0.05;
};

/// Exactly one of the members is set.
struct DataSource {
  std::optional<SynthSource> synth;
  std::optional<std::filesystem::path> image_dir;
  std::optional<std::filesystem::path> manifest;
  std::vector<std::filesystem::path> feature_files;

  void validate() const;
  bool is_features() const { return !feature_files.empty(); }
};

struct ExperimentConfig {
  Phase phase = Phase::detect;
  DataSource data;
  std::uint64_t seed = 0;
  /// Images are resized to image_size x image_size on load.
  std::size_t image_size = 64;
  double train_fraction = 0.6;
  double validation_fraction = 0.1;
  /// Internal feature sources for image data: "renet" and/or "hog".
  std::vector<std::string> sources{"renet", "hog"};
  renet::BrainReNetConfig renet;
  renet::TrainConfig train;
  hog::HogConfig hog;
  clf::SvmConfig svm;
  clf::MlpConfig mlp;
  clf::AdaBoostConfig adaboost;
  /// Z-score every source block on training rows before use.
  bool normalize = true;
  metrics::MetricMode metric_mode = metrics::MetricMode::standard;
  /// classify only: screen with a detection stage first and classify the
  /// test samples it flags as lesions.
  bool chained = false;
  bool scatter = true;

  void validate() const;
};

/// Phase-dependent defaults: detect uses a 0.6 split and an RBF SVM,
/// classify a 0.8 split and a degree-2 polynomial SVM.
ExperimentConfig default_config(Phase phase);

/// Reads a config object over default_config(phase). The seed is required
/// unless `seed_override` is given. Throws ConfigError.
ExperimentConfig parse_config(const nlohmann::json& j, std::optional<Phase> phase,
                              std::optional<std::uint64_t> seed_override);
nlohmann::json config_to_json(const ExperimentConfig& config);

data::Dataset load_dataset(const DataSource& source, std::size_t image_size, std::uint64_t seed);

struct RunResult {
  nlohmann::json body;
  std::string body_sha256;
  nlohmann::json timings;
  /// Solver iteration caps that were hit; `--strict` turns them into errors.
  std::vector<std::string> convergence_warnings;
  std::vector<std::filesystem::path> files;
};

/// Runs the configured phase and writes every artifact into `out_dir`:
/// report.json, summary.csv, roc.csv, pr.csv, curves/, scatter_*.csv/json,
/// models/.
RunResult run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);

/// Writes report.json (hashed body plus unhashed timings and location).
void write_report(const RunResult& result, const std::filesystem::path& out_dir);

}  // namespace hybridboost::pipeline
