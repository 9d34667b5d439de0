#include "hybridboost/matrix.hpp"

#include <algorithm>
#include <cmath>

#include "hybridboost/errors.hpp"

namespace hybridboost {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw DimensionError("matrix data length " + std::to_string(data_.size()) + " != " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Matrix Matrix::select_rows(std::span<const std::size_t> indices) const {
  Matrix out(indices.size(), cols_);
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= rows_) {
      throw DimensionError("row index " + std::to_string(indices[k]) + " out of range (" +
                           std::to_string(rows_) + " rows)");
    }
    const auto src = row(indices[k]);
    std::copy(src.begin(), src.end(), out.row(k).begin());
  }
  return out;
}

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void FeatureMatrix::validate() const {
  if (labels.size() != n()) {
    throw DataError("feature matrix '" + source_tag + "' has " + std::to_string(n()) +
                    " rows but " + std::to_string(labels.size()) + " labels");
  }
  if (!values.all_finite()) {
    throw DataError("feature matrix '" + source_tag + "' contains non-finite values");
  }
}

FeatureMatrix FeatureMatrix::select_rows(std::span<const std::size_t> indices) const {
  FeatureMatrix out{values.select_rows(indices), {}, source_tag};
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) out.labels.push_back(labels.at(i));
  return out;
}

}  // namespace hybridboost
