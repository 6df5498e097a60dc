#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dive/checkpoint.hpp"
#include "dive/layers.hpp"
#include "dive/matrix.hpp"

namespace dive {

// B samples x H heads x k dims, stored as a B x (H*k) matrix where head h
// of sample i occupies columns [h*k, (h+1)*k) of row i.
class HeadTensor {
 public:
  HeadTensor() = default;
  HeadTensor(std::size_t heads, std::size_t dim, Matrix data);

  std::size_t batch() const { return data_.rows(); }
  std::size_t heads() const { return heads_; }
  std::size_t dim() const { return dim_; }

  std::span<const float> at(std::size_t sample, std::size_t head) const {
    return data_.row(sample).subspan(head * dim_, dim_);
  }
  std::span<float> at(std::size_t sample, std::size_t head) {
    return data_.row(sample).subspan(head * dim_, dim_);
  }

  Matrix head(std::size_t h) const { return slice_cols(data_, h * dim_, (h + 1) * dim_); }

  const Matrix& matrix() const { return data_; }
  Matrix& matrix() { return data_; }

 private:
  std::size_t heads_ = 0;
  std::size_t dim_ = 0;
  Matrix data_;
};

// Writes `head_grad` (B x k) into the columns of head h of a zero B x (H*k)
// gradient, or accumulates into an existing one.
void add_head_grad(Matrix& full, std::size_t head, std::size_t dim, const Matrix& head_grad);

float xavier_bound(std::size_t fan_in, std::size_t fan_out);

// ---- DIVE multi-head adapter -----------------------------------------------

struct DiveConfig {
  std::size_t in_dim = 4096;
  std::size_t hidden1 = 2048;
  std::size_t hidden2 = 1024;
  std::size_t target_dim = 128;
  std::size_t num_heads = 4;

  // Hidden sizes follow (d/2, d/4), which gives 2048/1024 at d = 4096.
  static DiveConfig for_input(std::size_t in_dim, std::size_t target_dim, std::size_t num_heads);

  std::size_t output_dim() const { return target_dim * num_heads; }
  void validate() const;
};

// Trainable scalars: three weight matrices, three biases, BatchNorm gamma
// and beta. Running statistics are state, not parameters.
std::size_t dive_param_count(const DiveConfig& config);

class DiveAdapter {
 public:
  struct Forward {
    BatchNorm::Mode mode = BatchNorm::Mode::kEval;
    Matrix input;
    Matrix bn_input;     // W1 z + b1
    BatchNorm::Cache bn;
    Matrix bn_output;    // pre-ReLU
    Matrix h1;
    Matrix pre2;         // W2 h1 + b2
    Matrix h2;
    Matrix h3;           // W3 h2 + b3, un-normalised
    NormalizeCache norm;
    HeadTensor heads;
  };

  DiveAdapter() = default;
  // Xavier-uniform weights, zero biases, gamma = 1, beta = 0.
  DiveAdapter(const DiveConfig& config, std::uint64_t seed);

  const DiveConfig& config() const { return config_; }

  Forward forward(const Matrix& z, BatchNorm::Mode mode);
  HeadTensor forward_all_heads(const Matrix& z, BatchNorm::Mode mode) {
    return forward(z, mode).heads;
  }
  // Eval-mode retrieval embedding: head 1 of the all-heads output.
  Matrix forward_inference(const Matrix& z);

  // Accumulates parameter gradients given dL/d(heads), a B x (H*k) matrix.
  void backward(const Forward& fw, const Matrix& grad_heads);

  std::vector<ParamTensor*> params();
  std::vector<const ParamTensor*> params() const;
  void zero_grad();

  BatchNorm& batch_norm() { return bn_; }
  const BatchNorm& batch_norm() const { return bn_; }

  Checkpoint to_checkpoint() const;
  static DiveAdapter from_checkpoint(const Checkpoint& ckpt);

 private:
  DiveConfig config_;
  ParamTensor w1_, b1_;
  BatchNorm bn_;
  ParamTensor w2_, b2_, w3_, b3_;
};

// ---- residual MLP baselines (Matryoshka-Adaptor, Search-Adaptor) ----------

enum class InitScheme { kZerosLast, kXavier };

class ResidualAdapter {
 public:
  struct Forward {
    Matrix input;
    Matrix pre;  // W_in z + b_in
    Matrix hidden;
    Matrix output;  // z + W_out relu(pre) + b_out
  };

  ResidualAdapter() = default;
  // Both layers start Xavier-uniform; kZerosLast then zeroes the output
  // layer so the adapter is the identity at step 0.
  ResidualAdapter(std::size_t in_dim, std::size_t hidden, InitScheme scheme, std::uint64_t seed);

  std::size_t in_dim() const { return w_in_.value.cols(); }
  std::size_t hidden_dim() const { return w_in_.value.rows(); }
  InitScheme init_scheme() const { return scheme_; }

  Forward forward(const Matrix& z) const;
  Matrix operator()(const Matrix& z) const { return forward(z).output; }
  // Accumulates parameter gradients; the identity path's gradient w.r.t.
  // the frozen input is not needed and is not computed.
  void backward(const Forward& fw, const Matrix& grad_out);

  std::vector<ParamTensor*> params();
  std::vector<const ParamTensor*> params() const;
  void zero_grad();

  void append_to(Checkpoint& ckpt, const std::string& prefix) const;
  static ResidualAdapter from_checkpoint(const Checkpoint& ckpt, const std::string& prefix,
                                         std::size_t in_dim, std::size_t hidden);

 private:
  InitScheme scheme_ = InitScheme::kXavier;
  ParamTensor w_in_, b_in_, w_out_, b_out_;
};

// ---- SMEC: residual MLP + adaptive dimension selection ----------------------

// The target_dim coordinates with the largest logits, ties to the lower
// index, returned in ascending index order.
std::vector<std::size_t> select_top_dims(std::span<const float> logits, std::size_t target_dim);

class SmecAdapter {
 public:
  struct Forward {
    ResidualAdapter::Forward residual;
    std::vector<std::size_t> selected;
    bool training = false;
    std::vector<double> gate_slope;  // sigmoid'(logit) per selected coord
    NormalizeCache norm;
    Matrix output;
  };

  SmecAdapter() = default;
  SmecAdapter(std::size_t in_dim, std::size_t hidden, std::uint64_t seed);

  std::size_t in_dim() const { return residual_.in_dim(); }

  // Residual forward, top-k coordinate selection by ADS logits, straight-
  // through gate in training mode (value exactly 1, gradient through the
  // sigmoid), then row L2 normalisation.
  Forward compress(const Matrix& z, std::size_t target_dim, bool training) const;
  void backward(const Forward& fw, const Matrix& grad_out);

  // Value of the straight-through gate for every coordinate: always 1.
  static std::vector<float> gate_values(std::span<const float> logits);

  ResidualAdapter& residual() { return residual_; }
  const ResidualAdapter& residual() const { return residual_; }
  ParamTensor& ads_logits() { return ads_logits_; }
  const ParamTensor& ads_logits() const { return ads_logits_; }

  std::vector<ParamTensor*> params();
  std::vector<const ParamTensor*> params() const;
  void zero_grad();

  Checkpoint to_checkpoint(std::size_t target_dim) const;
  static SmecAdapter from_checkpoint(const Checkpoint& ckpt);

 private:
  ResidualAdapter residual_;
  ParamTensor ads_logits_;
};

// Residual checkpoints (Matryoshka / Search-Adaptor).
Checkpoint residual_to_checkpoint(const ResidualAdapter& adapter, ModelKind kind,
                                  std::size_t target_dim);
ResidualAdapter residual_from_checkpoint(const Checkpoint& ckpt);

// Concatenated trainable values, for parameter-displacement measurements.
std::vector<float> flatten_values(const std::vector<const ParamTensor*>& params);
std::size_t count_scalars(const std::vector<const ParamTensor*>& params);

}  // namespace dive
