#include "hybridboost/fusion.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "hybridboost/binary_io.hpp"
#include "hybridboost/errors.hpp"
#include "hybridboost/rng.hpp"

namespace hybridboost::fusion {

FeatureMatrix concat_features(std::span<const FeatureMatrix> parts) {
  if (parts.empty()) throw DataError("concat_features needs at least one part");
  const FeatureMatrix& first = parts[0];
  std::size_t dim = 0;
  std::string tag;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto& part = parts[p];
    const std::string name = "part " + std::to_string(p) + " ('" + part.source_tag + "')";
    if (part.n() != first.n()) {
      throw AlignmentError(name + " has " + std::to_string(part.n()) + " rows, expected " +
                           std::to_string(first.n()));
    }
    if (part.labels != first.labels) throw AlignmentError(name + " has a different label vector");
    dim += part.dim();
    tag += (p ? "+" : "") + part.source_tag;
  }
  FeatureMatrix out{Matrix(first.n(), dim), first.labels, tag};
  for (std::size_t r = 0; r < first.n(); ++r) {
    auto dst = out.values.row(r).begin();
    for (const auto& part : parts) dst = std::copy(part.values.row(r).begin(), part.values.row(r).end(), dst);
  }
  return out;
}

NormalizerStats fit_normalizer(const FeatureMatrix& train) {
  if (train.n() == 0) throw DataError("fit_normalizer: empty training matrix");
  const std::size_t n = train.n(), d = train.dim();
  NormalizerStats s{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) s.mean[c] += train.values(r, c);
  }
  for (double& m : s.mean) m /= static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      const double dv = train.values(r, c) - s.mean[c];
      s.stddev[c] += dv * dv;
    }
  }
  for (double& v : s.stddev) v = std::sqrt(v / static_cast<double>(n));
  return s;
}

FeatureMatrix apply_normalizer(const NormalizerStats& stats, const FeatureMatrix& features) {
  if (features.dim() != stats.dim()) {
    throw DimensionError("normalizer fit on " + std::to_string(stats.dim()) +
                         " dims applied to " + std::to_string(features.dim()));
  }
  FeatureMatrix out = features;
  for (std::size_t r = 0; r < out.n(); ++r) {
    for (std::size_t c = 0; c < out.dim(); ++c) {
      double& v = out.values(r, c);
      v = stats.stddev[c] < 1e-12 ? 0.0 : (v - stats.mean[c]) / stats.stddev[c];
    }
  }
  return out;
}

namespace {

using Mat = Eigen::MatrixXd;

// Orthonormalizes the columns of Q in place (modified Gram-Schmidt, two
// passes). Columns that vanish are replaced by fresh vectors from `rng`.
void orthonormalize(Mat& Q, Rng& rng) {
  for (Eigen::Index j = 0; j < Q.cols(); ++j) {
    for (int attempt = 0;; ++attempt) {
      const double before = Q.col(j).norm();
      for (int pass = 0; pass < 2; ++pass) {
        for (Eigen::Index i = 0; i < j; ++i) Q.col(j) -= Q.col(i).dot(Q.col(j)) * Q.col(i);
      }
      const double after = Q.col(j).norm();
      if (after > 1e-10 * std::max(before, 1e-300) && after > 1e-150) {
        Q.col(j) /= after;
        break;
      }
      if (attempt > 8) throw ConvergenceError("pca: cannot build an orthonormal basis", after);
      for (Eigen::Index r = 0; r < Q.rows(); ++r) Q(r, j) = standard_normal(rng);
    }
  }
}

}  // namespace

PcaResult pca_top_k(const FeatureMatrix& X, std::size_t k, const PcaOptions& options) {
  const std::size_t n = X.n(), d = X.dim();
  if (n < 2 || k == 0 || k > std::min(n - 1, d)) {
    throw ConfigError("pca_top_k: k=" + std::to_string(k) + " must lie in [1, min(n-1, dim)] for n=" +
                      std::to_string(n) + ", dim=" + std::to_string(d));
  }
  PcaResult res;
  res.mean.assign(d, 0.0);
  Mat Xc(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) res.mean[c] += X.values(r, c);
  }
  for (double& m : res.mean) m /= static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) Xc(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = X.values(r, c) - res.mean[c];
  }
  const double scale = 1.0 / static_cast<double>(n - 1);
  res.total_variance = Xc.squaredNorm() * scale;

  // Operate on the covariance (dim x dim) or, when dim > n, on the Gram
  // matrix (n x n); both are applied implicitly through Xc.
  const bool gram = d > n;
  const Eigen::Index m = static_cast<Eigen::Index>(gram ? n : d);
  auto apply = [&](const Mat& Q) -> Mat {
    return gram ? Mat(Xc * (Xc.transpose() * Q) * scale) : Mat(Xc.transpose() * (Xc * Q) * scale);
  };
  const Eigen::Index kk = static_cast<Eigen::Index>(k);
  const Eigen::Index block = std::min<Eigen::Index>(kk + 6, m);

  Rng rng(0x5eedULL);
  Mat Q(m, block);
  for (Eigen::Index j = 0; j < block; ++j) {
    for (Eigen::Index r = 0; r < m; ++r) Q(r, j) = standard_normal(rng);
  }
  orthonormalize(Q, rng);

  Mat vecs;
  Eigen::VectorXd vals;
  double residual = std::numeric_limits<double>::infinity();
  std::size_t iter = 0;
  for (; iter < options.max_iterations; ++iter) {
    const Mat AQ = apply(Q);
    const Mat T = Q.transpose() * AQ;
    Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (T + T.transpose()));
    // Eigen sorts ascending; take the largest `block` in descending order.
    const Mat W = eig.eigenvectors().rowwise().reverse();
    vals = eig.eigenvalues().reverse();
    vecs = Q * W;
    const Mat R = AQ * W - vecs * vals.asDiagonal();
    const double ref = std::max(1.0, std::abs(vals(0)));
    residual = 0.0;
    for (Eigen::Index i = 0; i < kk; ++i) residual = std::max(residual, R.col(i).norm() / ref);
    if (residual <= options.tol) break;
    Q = AQ * W;
    orthonormalize(Q, rng);
  }
  if (residual > options.tol) {
    throw ConvergenceError("pca did not converge in " + std::to_string(options.max_iterations) +
                           " iterations (residual " + std::to_string(residual) + ")", residual);
  }
  res.iterations = iter + 1;

  // Components in feature space, near-null directions zeroed in value.
  const double zero_cut = 1e-12 * std::max(1.0, std::abs(vals(0)));
  Mat V(static_cast<Eigen::Index>(d), kk);
  for (Eigen::Index i = 0; i < kk; ++i) {
    double lambda = vals(i);
    if (lambda < zero_cut) lambda = 0.0;
    res.explained_variance.push_back(lambda);
    if (!gram) {
      V.col(i) = vecs.col(i);
    } else if (lambda > 0.0) {
      V.col(i) = Xc.transpose() * vecs.col(i);
      V.col(i).normalize();
    } else {
      V.col(i).setZero();
    }
  }
  // Complete null directions (only reachable under the Gram path) with
  // vectors orthogonal to everything found so far.
  for (Eigen::Index i = 0; i < kk; ++i) {
    if (V.col(i).norm() > 0.5) continue;
    for (Eigen::Index r = 0; r < V.rows(); ++r) V(r, i) = standard_normal(rng);
    Mat sub = V.leftCols(i + 1);
    orthonormalize(sub, rng);
    V.col(i) = sub.col(i);
  }
  for (Eigen::Index i = 0; i < kk; ++i) {
    Eigen::Index arg = 0;
    for (Eigen::Index r = 1; r < V.rows(); ++r) {
      if (std::abs(V(r, i)) > std::abs(V(arg, i))) arg = r;
    }
    if (V(arg, i) < 0.0) V.col(i) = -V.col(i);
  }
  res.components = Matrix(k, d);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t c = 0; c < d; ++c) res.components(i, c) = V(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(i));
  }
  const Mat P = Xc * V;
  res.projections = Matrix(n, k);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < k; ++i) res.projections(r, i) = P(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i));
  }
  return res;
}

void write_scatter(const PcaResult& pca, std::span<const int> labels,
                   const std::filesystem::path& csv_path, const std::filesystem::path& json_path,
                   const nlohmann::json& extra) {
  if (pca.projections.cols() < 2) throw ConfigError("scatter output needs two components");
  if (pca.projections.rows() != labels.size()) {
    throw AlignmentError("scatter: " + std::to_string(pca.projections.rows()) + " rows vs " +
                         std::to_string(labels.size()) + " labels");
  }
  std::ostringstream csv;
  csv.precision(17);
  csv << "pc1,pc2,label\n";
  for (std::size_t r = 0; r < labels.size(); ++r) {
    csv << pca.projections(r, 0) << ',' << pca.projections(r, 1) << ',' << labels[r] << '\n';
  }
  io::write_text(csv_path, csv.str());
  nlohmann::json j = extra;
  j["explained_variance"] = pca.explained_variance;
  j["total_variance"] = pca.total_variance;
  j["iterations"] = pca.iterations;
  io::write_text(json_path, j.dump(2) + "\n");
}

}  // namespace hybridboost::fusion
