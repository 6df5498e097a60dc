#include "dive/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dive/adamw.hpp"
#include "dive/adapters.hpp"
#include "dive/errors.hpp"
#include "dive/rng.hpp"

namespace dive {

namespace {

void xavier_fill(ParamTensor& w, Rng& rng) {
  const double bound = xavier_bound(w.value.cols(), w.value.rows());
  for (float& v : w.value.data()) v = float(rng.uniform(-bound, bound));
}

}  // namespace

// ---- Jacobi -------------------------------------------------------------------------

EigenResult jacobi_eigen(std::vector<double> a, std::size_t n, std::size_t max_sweeps) {
  if (a.size() != n * n) throw DimensionError("jacobi_eigen: matrix is not n x n");
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;

  double scale = 0.0;
  for (double x : a) scale += x * x;
  const double tol = 1e-30 * std::max(scale, 1e-300);

  for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a[p * n + q] * a[p * n + q];
    if (off <= tol) break;

    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (apq == 0.0) continue;
        const double theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k * n + p], akq = a[k * n + q];
          a[k * n + p] = c * akp - s * akq;
          a[k * n + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p * n + k], aqk = a[q * n + k];
          a[p * n + k] = c * apk - s * aqk;
          a[q * n + k] = s * apk + c * aqk;
        }
        a[p * n + q] = a[q * n + p] = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v[k * n + p], vkq = v[k * n + q];
          v[k * n + p] = c * vkp - s * vkq;
          v[k * n + q] = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a[i * n + i] > a[j * n + j]; });

  EigenResult out;
  for (std::size_t idx : order) {
    out.values.push_back(a[idx * n + idx]);
    std::vector<double> vec(n);
    std::size_t arg = 0;
    for (std::size_t k = 0; k < n; ++k) {
      vec[k] = v[k * n + idx];
      if (std::abs(vec[k]) > std::abs(vec[arg])) arg = k;
    }
    if (vec[arg] < 0)
      for (double& x : vec) x = -x;
    out.vectors.push_back(std::move(vec));
  }
  return out;
}

// ---- PCA ------------------------------------------------------------------------------

double PcaModel::explained_variance_ratio() const {
  if (total_variance <= 0.0) return 0.0;
  return std::accumulate(eigenvalues.begin(), eigenvalues.end(), 0.0) / total_variance;
}

PcaModel pca_fit(const Matrix& x, std::size_t k) {
  const std::size_t n = x.rows(), d = x.cols();
  if (k == 0 || k >= std::min(n, d)) {
    throw ContractError("pca_fit: k=" + std::to_string(k) + " must satisfy 1 <= k < min(N=" +
                        std::to_string(n) + ", d=" + std::to_string(d) + ")");
  }
  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += x(i, j);
  for (double& m : mean) m /= double(n);

  std::vector<double> centred(n * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) centred[i * d + j] = double(x(i, j)) - mean[j];

  std::vector<double> cov(d * d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* r = &centred[i * d];
    for (std::size_t a = 0; a < d; ++a) {
      const double ra = r[a];
      if (ra == 0.0) continue;
      for (std::size_t b = a; b < d; ++b) cov[a * d + b] += ra * r[b];
    }
  }
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = a; b < d; ++b) {
      cov[a * d + b] /= double(n - 1);
      cov[b * d + a] = cov[a * d + b];
    }

  PcaModel model;
  for (std::size_t a = 0; a < d; ++a) model.total_variance += cov[a * d + a];
  const EigenResult eig = jacobi_eigen(std::move(cov), d);

  model.mean = Matrix(1, d);
  for (std::size_t j = 0; j < d; ++j) model.mean(0, j) = float(mean[j]);
  model.components = Matrix(k, d);
  for (std::size_t c = 0; c < k; ++c) {
    model.eigenvalues.push_back(eig.values[c]);
    for (std::size_t j = 0; j < d; ++j) model.components(c, j) = float(eig.vectors[c][j]);
  }
  return model;
}

Matrix pca_project_raw(const PcaModel& model, const Matrix& x) {
  if (x.cols() != model.in_dim()) {
    throw DimensionError("pca_project: input " + x.shape_string() + " vs model dim " +
                         std::to_string(model.in_dim()));
  }
  Matrix out(x.rows(), model.target_dim());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t c = 0; c < model.target_dim(); ++c) {
      double acc = 0.0;
      for (std::size_t j = 0; j < x.cols(); ++j)
        acc += (double(x(i, j)) - double(model.mean(0, j))) * double(model.components(c, j));
      out(i, c) = float(acc);
    }
  return out;
}

Matrix pca_project(const PcaModel& model, const Matrix& x) {
  return l2_normalize_rows(pca_project_raw(model, x));
}

Matrix pca_reconstruct(const PcaModel& model, const Matrix& raw_projection) {
  if (raw_projection.cols() != model.target_dim()) {
    throw DimensionError("pca_reconstruct: projection " + raw_projection.shape_string() +
                         " vs k=" + std::to_string(model.target_dim()));
  }
  Matrix out = matmul(raw_projection, model.components);
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += model.mean(0, j);
  return out;
}

Checkpoint PcaModel::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.kind = ModelKind::kPca;
  ckpt.config = {in_dim(), target_dim()};
  ckpt.add("mean", mean);
  ckpt.add("components", components);
  Matrix eig(1, eigenvalues.size());
  for (std::size_t i = 0; i < eigenvalues.size(); ++i) eig(0, i) = float(eigenvalues[i]);
  ckpt.add("eigenvalues", eig);
  ckpt.add("total_variance", Matrix(1, 1, float(total_variance)));
  return ckpt;
}

PcaModel PcaModel::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != ModelKind::kPca || ckpt.config.size() != 2) {
    throw DataError("checkpoint does not hold a PCA model");
  }
  const std::size_t d = ckpt.config[0], k = ckpt.config[1];
  PcaModel m;
  m.mean = ckpt.tensor("mean", 1, d);
  m.components = ckpt.tensor("components", k, d);
  const Matrix& eig = ckpt.tensor("eigenvalues", 1, k);
  for (float v : eig.data()) m.eigenvalues.push_back(v);
  m.total_variance = ckpt.tensor("total_variance", 1, 1)(0, 0);
  return m;
}

// ---- autoencoder ----------------------------------------------------------------------

Autoencoder::Autoencoder(std::size_t in_dim, std::size_t hidden, std::size_t target_dim,
                         std::uint64_t seed)
    : enc1_w_("enc1.w", hidden, in_dim, true),
      enc1_b_("enc1.b", 1, hidden, false),
      enc2_w_("enc2.w", target_dim, hidden, true),
      enc2_b_("enc2.b", 1, target_dim, false),
      dec1_w_("dec1.w", hidden, target_dim, true),
      dec1_b_("dec1.b", 1, hidden, false),
      dec2_w_("dec2.w", in_dim, hidden, true),
      dec2_b_("dec2.b", 1, in_dim, false) {
  if (in_dim == 0 || hidden == 0 || target_dim == 0) {
    throw ContractError("autoencoder: dimensions must be >= 1");
  }
  Rng rng(seed);
  xavier_fill(enc1_w_, rng);
  xavier_fill(enc2_w_, rng);
  xavier_fill(dec1_w_, rng);
  xavier_fill(dec2_w_, rng);
}

Autoencoder::Forward Autoencoder::forward(const Matrix& x) const {
  if (x.cols() != in_dim()) {
    throw DimensionError("autoencoder: input " + x.shape_string() + " vs in_dim " +
                         std::to_string(in_dim()));
  }
  Forward fw;
  fw.input = x;
  fw.pre1 = linear_forward(x, enc1_w_, enc1_b_);
  fw.h1 = relu_forward(fw.pre1);
  fw.code = linear_forward(fw.h1, enc2_w_, enc2_b_);
  fw.pre2 = linear_forward(fw.code, dec1_w_, dec1_b_);
  fw.h2 = relu_forward(fw.pre2);
  fw.output = linear_forward(fw.h2, dec2_w_, dec2_b_);
  return fw;
}

Matrix Autoencoder::encode_raw(const Matrix& x) const {
  if (x.cols() != in_dim()) {
    throw DimensionError("autoencoder: input " + x.shape_string() + " vs in_dim " +
                         std::to_string(in_dim()));
  }
  return linear_forward(relu_forward(linear_forward(x, enc1_w_, enc1_b_)), enc2_w_, enc2_b_);
}

Matrix Autoencoder::encode(const Matrix& x) const { return l2_normalize_rows(encode_raw(x)); }

double Autoencoder::reconstruction_mse(const Matrix& x) const {
  const Matrix out = reconstruct(x);
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double diff = double(out.data()[i]) - double(x.data()[i]);
    acc += diff * diff;
  }
  return x.empty() ? 0.0 : acc / double(x.size());
}

double Autoencoder::backward_mse(const Forward& fw) {
  const std::size_t count = fw.output.size();
  Matrix grad(fw.output.rows(), fw.output.cols());
  double loss = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const double diff = double(fw.output.data()[i]) - double(fw.input.data()[i]);
    loss += diff * diff;
    grad.data()[i] = float(2.0 * diff / double(count));
  }
  auto g = linear_backward(fw.h2, dec2_w_, dec2_b_, grad).grad_x;
  g = relu_backward(fw.pre2, g);
  g = linear_backward(fw.code, dec1_w_, dec1_b_, g).grad_x;
  g = linear_backward(fw.h1, enc2_w_, enc2_b_, g).grad_x;
  g = relu_backward(fw.pre1, g);
  linear_backward(fw.input, enc1_w_, enc1_b_, g);
  return loss / double(count);
}

std::vector<ParamTensor*> Autoencoder::params() {
  return {&enc1_w_, &enc1_b_, &enc2_w_, &enc2_b_, &dec1_w_, &dec1_b_, &dec2_w_, &dec2_b_};
}

std::vector<const ParamTensor*> Autoencoder::params() const {
  return {&enc1_w_, &enc1_b_, &enc2_w_, &enc2_b_, &dec1_w_, &dec1_b_, &dec2_w_, &dec2_b_};
}

void Autoencoder::zero_grad() {
  for (ParamTensor* p : params()) p->zero_grad();
}

Checkpoint Autoencoder::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.kind = ModelKind::kAutoencoder;
  ckpt.config = {in_dim(), hidden_dim(), target_dim()};
  for (const ParamTensor* p : params()) ckpt.add(p->name, p->value);
  return ckpt;
}

Autoencoder Autoencoder::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != ModelKind::kAutoencoder || ckpt.config.size() != 3) {
    throw DataError("checkpoint does not hold an autoencoder");
  }
  Autoencoder ae(ckpt.config[0], ckpt.config[1], ckpt.config[2], 0);
  for (ParamTensor* p : ae.params())
    p->value = ckpt.tensor(p->name, p->value.rows(), p->value.cols());
  return ae;
}

AutoencoderFit autoencoder_train(const Matrix& x, const AutoencoderOptions& options) {
  if (options.batch_size == 0) throw ContractError("autoencoder: batch_size must be >= 1");
  if (x.rows() < options.batch_size) {
    throw ContractError("autoencoder: N=" + std::to_string(x.rows()) + " is below batch size " +
                        std::to_string(options.batch_size));
  }
  const std::size_t hidden = options.hidden ? options.hidden : std::max<std::size_t>(1, x.cols() / 2);
  AutoencoderFit fit{Autoencoder(x.cols(), hidden, options.target_dim, options.seed), {}};
  AdamWOptions adam;
  adam.lr = options.lr;
  adam.weight_decay = options.weight_decay;
  AdamW opt(fit.model.params(), adam);
  Rng order_rng(options.seed ^ 0xA5A5A5A5ull);

  std::vector<std::size_t> order(x.rows());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    order_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const Matrix batch = gather_rows(x, idx);
      opt.zero_grad();
      const auto fw = fit.model.forward(batch);
      const double loss = fit.model.backward_mse(fw);
      if (!std::isfinite(loss)) {
        throw NumericError("autoencoder: non-finite loss at epoch " + std::to_string(epoch + 1) +
                           ", batch " + std::to_string(batches + 1));
      }
      opt.step();
      loss_sum += loss;
      ++batches;
    }
    fit.epoch_loss.push_back(loss_sum / double(batches));
  }
  return fit;
}

}  // namespace dive
