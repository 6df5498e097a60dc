#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "dive/checkpoint.hpp"
#include "dive/data.hpp"
#include "dive/layers.hpp"
#include "dive/matrix.hpp"

namespace dive {

// ---- symmetric eigendecomposition ----------------------------------------------

struct EigenResult {
  std::vector<double> values;                // descending
  std::vector<std::vector<double>> vectors;  // vectors[i] pairs with values[i], unit norm
};

// Cyclic Jacobi on a dense symmetric n x n matrix (row-major, double).
// Each eigenvector's largest-magnitude entry is made positive.
EigenResult jacobi_eigen(std::vector<double> a, std::size_t n, std::size_t max_sweeps = 100);

// ---- PCA ----------------------------------------------------------------------------

struct PcaModel {
  Matrix mean;                       // 1 x d
  Matrix components;                 // k x d, orthonormal rows
  std::vector<double> eigenvalues;   // k, descending
  double total_variance = 0.0;       // trace of the covariance

  std::size_t in_dim() const { return components.cols(); }
  std::size_t target_dim() const { return components.rows(); }
  double explained_variance_ratio() const;

  Checkpoint to_checkpoint() const;
  static PcaModel from_checkpoint(const Checkpoint& ckpt);
};

// Top-k eigenpairs of the mean-centred sample covariance (divisor N - 1).
// Requires k < min(N, d).
PcaModel pca_fit(const Matrix& x, std::size_t k);
inline PcaModel pca_fit(const EmbeddingStore& store, std::size_t k) {
  return pca_fit(store.matrix(), k);
}

// (x - mean) C^T without normalisation.
Matrix pca_project_raw(const PcaModel& model, const Matrix& x);
// Row-normalised projection used for retrieval; a row at the mean raises
// DegenerateRowError.
Matrix pca_project(const PcaModel& model, const Matrix& x);
// raw_projection C + mean.
Matrix pca_reconstruct(const PcaModel& model, const Matrix& raw_projection);

// ---- autoencoder -------------------------------------------------------------------

struct AutoencoderOptions {
  std::size_t target_dim = 128;
  std::size_t hidden = 0;  // 0 = in_dim / 2
  std::size_t epochs = 50;
  double lr = 2e-4;
  double weight_decay = 0.01;
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;
};

// d -> hidden -> k encoder and k -> hidden -> d decoder, ReLU on the
// hidden layers, linear code and output.
class Autoencoder {
 public:
  struct Forward {
    Matrix input, pre1, h1, code, pre2, h2, output;
  };

  Autoencoder() = default;
  Autoencoder(std::size_t in_dim, std::size_t hidden, std::size_t target_dim, std::uint64_t seed);

  std::size_t in_dim() const { return enc1_w_.value.cols(); }
  std::size_t hidden_dim() const { return enc1_w_.value.rows(); }
  std::size_t target_dim() const { return enc2_w_.value.rows(); }

  Forward forward(const Matrix& x) const;
  Matrix encode_raw(const Matrix& x) const;
  // Row-normalised code used for retrieval.
  Matrix encode(const Matrix& x) const;
  Matrix reconstruct(const Matrix& x) const { return forward(x).output; }
  // Mean over all entries of (reconstruction - x)^2.
  double reconstruction_mse(const Matrix& x) const;

  // Gradient of the MSE objective accumulated into every parameter.
  double backward_mse(const Forward& fw);

  std::vector<ParamTensor*> params();
  std::vector<const ParamTensor*> params() const;
  void zero_grad();

  Checkpoint to_checkpoint() const;
  static Autoencoder from_checkpoint(const Checkpoint& ckpt);

 private:
  ParamTensor enc1_w_, enc1_b_, enc2_w_, enc2_b_;
  ParamTensor dec1_w_, dec1_b_, dec2_w_, dec2_b_;
};

struct AutoencoderFit {
  Autoencoder model;
  std::vector<double> epoch_loss;  // mean batch MSE per epoch
};

// Mini-batch AdamW on the reconstruction MSE with a seeded reshuffle each
// epoch. Requires N >= batch_size.
AutoencoderFit autoencoder_train(const Matrix& x, const AutoencoderOptions& options);

}  // namespace dive
