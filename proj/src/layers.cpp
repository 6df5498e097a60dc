#include "dive/layers.hpp"

#include <cmath>

#include "dive/errors.hpp"

namespace dive {

namespace {

constexpr double kMinRowNorm = 1e-12;

void require_bias(const ParamTensor& w, const ParamTensor& b) {
  if (b.value.rows() != 1 || b.value.cols() != w.value.rows()) {
    throw DimensionError("linear bias " + b.value.shape_string() + " does not match weight " +
                         w.value.shape_string());
  }
}

}  // namespace

Matrix linear_forward(const Matrix& x, const ParamTensor& w, const ParamTensor& b) {
  if (x.cols() != w.value.cols()) {
    throw DimensionError("linear_forward: input " + x.shape_string() + " vs weight " +
                         w.value.shape_string());
  }
  require_bias(w, b);
  Matrix y = matmul_nt(x, w.value);
  for (std::size_t i = 0; i < y.rows(); ++i) {
    auto yi = y.row(i);
    for (std::size_t j = 0; j < y.cols(); ++j) yi[j] += b.value(0, j);
  }
  return y;
}

LinearGrads linear_backward(const Matrix& x, ParamTensor& w, ParamTensor& b,
                            const Matrix& upstream) {
  if (x.cols() != w.value.cols() || upstream.cols() != w.value.rows() ||
      upstream.rows() != x.rows()) {
    throw DimensionError("linear_backward: input " + x.shape_string() + ", weight " +
                         w.value.shape_string() + ", upstream " + upstream.shape_string());
  }
  require_bias(w, b);
  LinearGrads g;
  g.grad_x = matmul(upstream, w.value);
  g.grad_w = matmul_tn(upstream, x);
  g.grad_b = Matrix(1, upstream.cols());
  for (std::size_t j = 0; j < upstream.cols(); ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < upstream.rows(); ++i) acc += upstream(i, j);
    g.grad_b(0, j) = float(acc);
  }
  axpy(w.grad, g.grad_w);
  axpy(b.grad, g.grad_b);
  return g;
}

Matrix relu_forward(const Matrix& x) {
  Matrix y = x;
  for (float& v : y.data()) v = v > 0.0f ? v : 0.0f;
  return y;
}

Matrix relu_backward(const Matrix& x, const Matrix& upstream) {
  require_same_shape(x, upstream, "relu_backward");
  Matrix g(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i)
    g.data()[i] = x.data()[i] > 0.0f ? upstream.data()[i] : 0.0f;
  return g;
}

BatchNorm::BatchNorm(std::size_t features, float eps_, float momentum_)
    : gamma("bn.gamma", 1, features, false),
      beta("bn.beta", 1, features, false),
      running_mean(features, 0.0f),
      running_var(features, 1.0f),
      eps(eps_),
      momentum(momentum_) {
  gamma.value.fill(1.0f);
}

Matrix BatchNorm::forward(const Matrix& x, Mode m, Cache* cache) {
  const std::size_t n = x.rows();
  const std::size_t f = x.cols();
  if (f != features()) {
    throw DimensionError("batchnorm_forward: input " + x.shape_string() + " vs " +
                         std::to_string(features()) + " features");
  }
  Matrix x_hat(n, f);
  std::vector<double> inv_std(f);

  if (m == Mode::kEval) {
    for (std::size_t j = 0; j < f; ++j)
      inv_std[j] = 1.0 / std::sqrt(double(running_var[j]) + double(eps));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < f; ++j)
        x_hat(i, j) = float((double(x(i, j)) - double(running_mean[j])) * inv_std[j]);
  } else {
    if (n < 2) {
      throw BatchTooSmallError("batchnorm in training mode needs at least 2 rows, got " +
                               std::to_string(n));
    }
    std::vector<double> mean(f, 0.0), var(f, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < f; ++j) mean[j] += x(i, j);
    for (std::size_t j = 0; j < f; ++j) mean[j] /= double(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < f; ++j) {
        const double c = double(x(i, j)) - mean[j];
        var[j] += c * c;
      }
    for (std::size_t j = 0; j < f; ++j) {
      var[j] /= double(n);
      inv_std[j] = 1.0 / std::sqrt(var[j] + double(eps));
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < f; ++j)
        x_hat(i, j) = float((double(x(i, j)) - mean[j]) * inv_std[j]);

    if (m == Mode::kTrain) {
      const double unbias = double(n) / double(n - 1);
      for (std::size_t j = 0; j < f; ++j) {
        running_mean[j] = float((1.0 - momentum) * running_mean[j] + momentum * mean[j]);
        running_var[j] = float((1.0 - momentum) * running_var[j] + momentum * var[j] * unbias);
      }
    }
  }

  Matrix y(n, f);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < f; ++j)
      y(i, j) = gamma.value(0, j) * x_hat(i, j) + beta.value(0, j);

  if (cache) {
    cache->mode = m;
    cache->x_hat = std::move(x_hat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

Matrix BatchNorm::backward(const Cache& cache, const Matrix& upstream) {
  require_same_shape(cache.x_hat, upstream, "batchnorm_backward");
  const std::size_t n = upstream.rows();
  const std::size_t f = upstream.cols();

  std::vector<double> sum_up(f, 0.0), sum_up_xhat(f, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < f; ++j) {
      sum_up[j] += upstream(i, j);
      sum_up_xhat[j] += double(upstream(i, j)) * double(cache.x_hat(i, j));
    }
  for (std::size_t j = 0; j < f; ++j) {
    gamma.grad(0, j) += float(sum_up_xhat[j]);
    beta.grad(0, j) += float(sum_up[j]);
  }

  Matrix gx(n, f);
  if (cache.mode == Mode::kEval) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < f; ++j)
        gx(i, j) = float(double(upstream(i, j)) * gamma.value(0, j) * cache.inv_std[j]);
    return gx;
  }
  // d x_hat = up * gamma; dx = inv_std / n * (n dxh - sum dxh - x_hat sum(dxh x_hat))
  for (std::size_t j = 0; j < f; ++j) {
    const double g = gamma.value(0, j);
    const double s1 = g * sum_up[j];
    const double s2 = g * sum_up_xhat[j];
    const double scale = cache.inv_std[j] / double(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double dxh = g * upstream(i, j);
      gx(i, j) = float(scale * (double(n) * dxh - s1 - double(cache.x_hat(i, j)) * s2));
    }
  }
  return gx;
}

Matrix l2_normalize_forward(const Matrix& x, std::size_t chunk, NormalizeCache* cache) {
  if (chunk == 0) chunk = x.cols();
  if (chunk == 0 || x.cols() % chunk != 0) {
    throw DimensionError("l2_normalize: chunk " + std::to_string(chunk) +
                         " does not divide " + x.shape_string());
  }
  const std::size_t per_row = x.cols() / chunk;
  Matrix y(x.rows(), x.cols());
  std::vector<double> norms(x.rows() * per_row);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t c = 0; c < per_row; ++c) {
      auto src = x.row(i).subspan(c * chunk, chunk);
      const double n = norm(src);
      if (!std::isfinite(n)) {
        throw NumericError("l2_normalize: row " + std::to_string(i) + " has a non-finite norm");
      }
      if (n < kMinRowNorm) {
        throw DegenerateRowError(i, "l2_normalize: row " + std::to_string(i) +
                                        (per_row > 1 ? " chunk " + std::to_string(c) : "") +
                                        " has norm below 1e-12");
      }
      norms[i * per_row + c] = n;
      auto dst = y.row(i).subspan(c * chunk, chunk);
      for (std::size_t j = 0; j < chunk; ++j) dst[j] = float(double(src[j]) / n);
    }
  }
  if (cache) {
    cache->output = y;
    cache->norms = std::move(norms);
    cache->chunk = chunk;
  }
  return y;
}

Matrix l2_normalize_backward(const NormalizeCache& cache, const Matrix& upstream) {
  require_same_shape(cache.output, upstream, "l2_normalize_backward");
  const std::size_t chunk = cache.chunk;
  const std::size_t per_row = upstream.cols() / chunk;
  Matrix g(upstream.rows(), upstream.cols());
  for (std::size_t i = 0; i < upstream.rows(); ++i) {
    for (std::size_t c = 0; c < per_row; ++c) {
      auto y = cache.output.row(i).subspan(c * chunk, chunk);
      auto up = upstream.row(i).subspan(c * chunk, chunk);
      auto out = g.row(i).subspan(c * chunk, chunk);
      const double proj = dot(y, up);
      const double inv = 1.0 / cache.norms[i * per_row + c];
      for (std::size_t j = 0; j < chunk; ++j)
        out[j] = float((double(up[j]) - double(y[j]) * proj) * inv);
    }
  }
  return g;
}

}  // namespace dive
