#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace hybridboost {

/// Row-major real matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return rows_ == 0; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  Matrix select_rows(std::span<const std::size_t> indices) const;
  bool all_finite() const;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// n x dim features with one integer label per row; the hand-off format
/// between extractors, fusion and classifiers.
struct FeatureMatrix {
  Matrix values;
  std::vector<int> labels;
  std::string source_tag;

  std::size_t n() const { return values.rows(); }
  std::size_t dim() const { return values.cols(); }

  /// Throws DataError on non-finite values or a label count != n.
  void validate() const;
  FeatureMatrix select_rows(std::span<const std::size_t> indices) const;

  bool operator==(const FeatureMatrix&) const = default;
};

}  // namespace hybridboost
