#include "dive/matrix.hpp"

#include <algorithm>
#include <cmath>

#include "dive/errors.hpp"

namespace dive {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<float> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw DimensionError("matrix data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_string());
  }
}

Matrix Matrix::from_rows(const std::vector<std::vector<float>>& rows) {
  if (rows.empty()) return {};
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols()) throw DimensionError("ragged row literal");
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  }
  return m;
}

void Matrix::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

std::string Matrix::shape_string() const {
  return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
}

double dot(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += double(a[i]) * double(b[i]);
  return acc;
}

double norm(std::span<const float> a) { return std::sqrt(dot(a, a)); }

Matrix matmul_nt(const Matrix& x, const Matrix& w) {
  if (x.cols() != w.cols()) {
    throw DimensionError("matmul_nt: " + x.shape_string() + " vs " + w.shape_string());
  }
  Matrix y(x.rows(), w.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto xi = x.row(i);
    for (std::size_t j = 0; j < w.rows(); ++j) y(i, j) = float(dot(xi, w.row(j)));
  }
  return y;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + a.shape_string() + " vs " + b.shape_string());
  }
  Matrix y(a.rows(), b.cols());
  std::vector<double> acc(b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto bk = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) acc[j] += aik * double(bk[j]);
    }
    for (std::size_t j = 0; j < b.cols(); ++j) y(i, j) = float(acc[j]);
  }
  return y;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw DimensionError("matmul_tn: " + a.shape_string() + " vs " + b.shape_string());
  }
  std::vector<double> acc(a.cols() * b.cols(), 0.0);
  for (std::size_t n = 0; n < a.rows(); ++n) {
    auto an = a.row(n);
    auto bn = b.row(n);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double ai = an[i];
      if (ai == 0.0) continue;
      double* out = acc.data() + i * b.cols();
      for (std::size_t j = 0; j < b.cols(); ++j) out[j] += ai * double(bn[j]);
    }
  }
  Matrix y(a.cols(), b.cols());
  for (std::size_t i = 0; i < acc.size(); ++i) y.data()[i] = float(acc[i]);
  return y;
}

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
  return t;
}

Matrix slice_cols(const Matrix& m, std::size_t begin, std::size_t end) {
  if (begin > end || end > m.cols()) {
    throw DimensionError("slice_cols [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") out of range for " + m.shape_string());
  }
  Matrix out(m.rows(), end - begin);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto src = m.row(i);
    std::copy(src.begin() + begin, src.begin() + end, out.row(i).begin());
  }
  return out;
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= m.rows()) throw DimensionError("gather_rows: row index out of range");
    auto src = m.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

Matrix gather_cols(const Matrix& m, std::span<const std::size_t> cols) {
  Matrix out(m.rows(), cols.size());
  for (std::size_t j = 0; j < cols.size(); ++j) {
    if (cols[j] >= m.cols()) throw DimensionError("gather_cols: column index out of range");
  }
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j) out(i, j) = m(i, cols[j]);
  return out;
}

void axpy(Matrix& a, const Matrix& b, float scale) {
  require_same_shape(a, b, "axpy");
  auto& ad = a.data();
  const auto& bd = b.data();
  for (std::size_t i = 0; i < ad.size(); ++i) ad[i] += scale * bd[i];
}

bool all_finite(const Matrix& m) {
  return std::all_of(m.data().begin(), m.data().end(), [](float v) { return std::isfinite(v); });
}

double frobenius_norm(const Matrix& m) { return norm(m.data()); }

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(double(a.data()[i]) - double(b.data()[i])));
  return worst;
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* context) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(context) + ": shape mismatch " + a.shape_string() +
                         " vs " + b.shape_string());
  }
}

}  // namespace dive
