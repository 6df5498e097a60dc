#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dive/matrix.hpp"

namespace dive {

// A trainable tensor and its accumulated gradient. `decay` marks tensors
// that AdamW applies decoupled weight decay to (weight matrices only).
struct ParamTensor {
  ParamTensor() = default;
  ParamTensor(std::string name, std::size_t rows, std::size_t cols, bool decay)
      : name(std::move(name)), value(rows, cols), grad(rows, cols), decay(decay) {}

  std::string name;
  Matrix value;
  Matrix grad;
  bool decay = false;

  void zero_grad() { grad.fill(0.0f); }
};

// ---- linear ---------------------------------------------------------------

// y = x W^T + b; w is out x in, b is 1 x out.
Matrix linear_forward(const Matrix& x, const ParamTensor& w, const ParamTensor& b);

struct LinearGrads {
  Matrix grad_x;
  Matrix grad_w;
  Matrix grad_b;
};

// Returns the gradients and also accumulates grad_w/grad_b into w.grad/b.grad.
LinearGrads linear_backward(const Matrix& x, ParamTensor& w, ParamTensor& b,
                            const Matrix& upstream);

// ---- relu -----------------------------------------------------------------

Matrix relu_forward(const Matrix& x);
// Passes upstream where x > 0; the subgradient at exactly 0 is 0.
Matrix relu_backward(const Matrix& x, const Matrix& upstream);

// ---- batch norm -----------------------------------------------------------

struct BatchNorm {
  enum class Mode {
    kTrain,       // batch statistics, running stats updated
    kBatchStats,  // batch statistics, running stats left alone (probes)
    kEval,        // frozen running statistics
  };

  struct Cache {
    Mode mode = Mode::kEval;
    Matrix x_hat;
    std::vector<double> inv_std;
  };

  BatchNorm() = default;
  explicit BatchNorm(std::size_t features, float eps = 1e-5f, float momentum = 0.1f);

  std::size_t features() const { return gamma.value.cols(); }

  Matrix forward(const Matrix& x, Mode mode, Cache* cache = nullptr);

  // Returns grad_x; accumulates into gamma.grad / beta.grad. Works for every
  // mode: batch-stat modes include the mean/variance paths, eval mode is the
  // plain per-feature affine map.
  Matrix backward(const Cache& cache, const Matrix& upstream);

  ParamTensor gamma;
  ParamTensor beta;
  std::vector<float> running_mean;
  std::vector<float> running_var;
  float eps = 1e-5f;
  float momentum = 0.1f;
};

// ---- row / chunk L2 normalisation ------------------------------------------

struct NormalizeCache {
  Matrix output;
  std::vector<double> norms;  // one per (row, chunk), row-major
  std::size_t chunk = 0;
};

// Splits each row into cols/chunk consecutive chunks and scales each to
// unit L2 norm. chunk == 0 means the whole row.
Matrix l2_normalize_forward(const Matrix& x, std::size_t chunk = 0,
                            NormalizeCache* cache = nullptr);
// Applies (I - y y^T) / ||x|| per chunk.
Matrix l2_normalize_backward(const NormalizeCache& cache, const Matrix& upstream);

inline Matrix l2_normalize_rows(const Matrix& x) { return l2_normalize_forward(x); }

}  // namespace dive
