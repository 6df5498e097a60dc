#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace dive {

// Dense row-major float matrix. Reductions inside the free functions below
// accumulate in double.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, float fill = 0.0f)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<float> data);

  // Convenience for tests and small literals: {{1, 2}, {3, 4}}.
  static Matrix from_rows(const std::vector<std::vector<float>>& rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  float operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<float> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const float> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<float>& data() { return data_; }
  const std::vector<float>& data() const { return data_; }

  void fill(float v);
  std::string shape_string() const;

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

double dot(std::span<const float> a, std::span<const float> b);
double norm(std::span<const float> a);

// y = x * w^T  (x: B x in, w: out x in)
Matrix matmul_nt(const Matrix& x, const Matrix& w);
// y = a * b  (a: m x n, b: n x p)
Matrix matmul(const Matrix& a, const Matrix& b);
// y = a^T * b  (a: n x m, b: n x p)
Matrix matmul_tn(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& m);
Matrix slice_cols(const Matrix& m, std::size_t begin, std::size_t end);
Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows);
Matrix gather_cols(const Matrix& m, std::span<const std::size_t> cols);

// Elementwise a += scale * b.
void axpy(Matrix& a, const Matrix& b, float scale = 1.0f);

bool all_finite(const Matrix& m);
double frobenius_norm(const Matrix& m);
double max_abs_diff(const Matrix& a, const Matrix& b);

void require_same_shape(const Matrix& a, const Matrix& b, const char* context);

}  // namespace dive
