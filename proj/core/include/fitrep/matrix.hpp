#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace fitrep {

// Dense row-major float32 matrix. The working currency of the pipeline:
// encoder vectors, embeddings and fused vectors are all rows of one of these.
class Matrix {
 public:
  Matrix() = default;
  Matrix(size_t rows, size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0f) {}
  Matrix(size_t rows, size_t cols, std::vector<float> data);

  size_t rows() const { return rows_; }
  size_t cols() const { return cols_; }
  bool empty() const { return rows_ == 0; }

  float* row(size_t i) { return data_.data() + i * cols_; }
  const float* row(size_t i) const { return data_.data() + i * cols_; }
  std::span<float> row_span(size_t i) { return {row(i), cols_}; }
  std::span<const float> row_span(size_t i) const { return {row(i), cols_}; }

  float& at(size_t r, size_t c) { return data_[r * cols_ + c]; }
  float at(size_t r, size_t c) const { return data_[r * cols_ + c]; }

  std::vector<float>& data() { return data_; }
  const std::vector<float>& data() const { return data_; }

  bool all_finite() const;

  bool operator==(const Matrix& other) const = default;

 private:
  size_t rows_ = 0;
  size_t cols_ = 0;
  std::vector<float> data_;
};

// Inner products and distances accumulate in double regardless of storage
// precision; several downstream identities are checked at 1e-6.
double dot(std::span<const float> a, std::span<const float> b);
double squared_distance(std::span<const float> a, std::span<const float> b);
double euclidean_distance(std::span<const float> a, std::span<const float> b);
double norm(std::span<const float> a);

}  // namespace fitrep
