#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "hybridboost/matrix.hpp"

namespace hybridboost::fusion {

/// Column-wise concatenation in input order. Every part must have the same
/// row count and label vector; otherwise AlignmentError names the first
/// offending part. Source tags are joined with '+'.
FeatureMatrix concat_features(std::span<const FeatureMatrix> parts);

/// Per-dimension mean and population standard deviation of training rows.
struct NormalizerStats {
  std::vector<double> mean;
  std::vector<double> stddev;

  std::size_t dim() const { return mean.size(); }
  bool operator==(const NormalizerStats&) const = default;
};

NormalizerStats fit_normalizer(const FeatureMatrix& train);
/// (x - mean) / std per column; columns with std < 1e-12 become 0.
FeatureMatrix apply_normalizer(const NormalizerStats& stats, const FeatureMatrix& features);

struct PcaResult {
  /// k x dim, orthonormal rows.
  Matrix components;
  /// Non-increasing eigenvalues of the sample covariance (divisor n - 1).
  std::vector<double> explained_variance;
  double total_variance = 0.0;
  /// n x k projections of the centered rows.
  Matrix projections;
  std::vector<double> mean;
  std::size_t iterations = 0;
};

struct PcaOptions {
  double tol = 1e-9;
  std::size_t max_iterations = 1000;
};

/// Top-k principal components by block power iteration with Rayleigh-Ritz
/// extraction, working on the n x n Gram matrix when dim > n. Each
/// component's largest-magnitude entry is made positive. Throws ConfigError
/// unless 1 <= k <= min(n - 1, dim), and ConvergenceError carrying the
/// residual when the iteration cap is hit.
PcaResult pca_top_k(const FeatureMatrix& X, std::size_t k, const PcaOptions& options = {});

/// CSV `pc1,pc2,label` (k must be >= 2) plus a JSON sidecar with the
/// explained variances.
void write_scatter(const PcaResult& pca, std::span<const int> labels,
                   const std::filesystem::path& csv_path, const std::filesystem::path& json_path,
                   const nlohmann::json& extra = nlohmann::json::object());

}  // namespace hybridboost::fusion
