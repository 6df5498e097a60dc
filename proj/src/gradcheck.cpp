#include "dive/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace dive {

Matrix finite_difference_grad(const std::function<double()>& f, Matrix& values, float step) {
  Matrix grad(values.rows(), values.cols());
  auto& v = values.data();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const float orig = v[i];
    const float hi = orig + step;
    const float lo = orig - step;
    v[i] = hi;
    const double f_hi = f();
    v[i] = lo;
    const double f_lo = f();
    v[i] = orig;
    grad.data()[i] = float((f_hi - f_lo) / (double(hi) - double(lo)));
  }
  return grad;
}

double gradient_relative_error(const Matrix& analytic, const Matrix& numeric) {
  require_same_shape(analytic, numeric, "gradient_relative_error");
  double scale = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    scale = std::max(scale, double(std::abs(analytic.data()[i])));
    scale = std::max(scale, double(std::abs(numeric.data()[i])));
  }
  if (scale == 0.0) return 0.0;
  return max_abs_diff(analytic, numeric) / scale;
}

}  // namespace dive
