#include "dive/adapters.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dive/errors.hpp"
#include "dive/rng.hpp"

namespace dive {

namespace {

void xavier_fill(ParamTensor& w, Rng& rng) {
  const double bound = xavier_bound(w.value.cols(), w.value.rows());
  for (float& v : w.value.data()) v = float(rng.uniform(-bound, bound));
}

void copy_into(ParamTensor& p, const Matrix& m) {
  require_same_shape(p.value, m, p.name.c_str());
  p.value = m;
}

}  // namespace

HeadTensor::HeadTensor(std::size_t heads, std::size_t dim, Matrix data)
    : heads_(heads), dim_(dim), data_(std::move(data)) {
  if (data_.cols() != heads_ * dim_) {
    throw DimensionError("head tensor " + data_.shape_string() + " is not " +
                         std::to_string(heads_) + " heads x " + std::to_string(dim_));
  }
}

void add_head_grad(Matrix& full, std::size_t head, std::size_t dim, const Matrix& head_grad) {
  if (head_grad.rows() != full.rows() || head_grad.cols() != dim || (head + 1) * dim > full.cols()) {
    throw DimensionError("add_head_grad: " + head_grad.shape_string() + " into " +
                         full.shape_string());
  }
  for (std::size_t i = 0; i < full.rows(); ++i)
    for (std::size_t j = 0; j < dim; ++j) full(i, head * dim + j) += head_grad(i, j);
}

float xavier_bound(std::size_t fan_in, std::size_t fan_out) {
  return float(std::sqrt(6.0 / double(fan_in + fan_out)));
}

DiveConfig DiveConfig::for_input(std::size_t in_dim, std::size_t target_dim,
                                 std::size_t num_heads) {
  DiveConfig c;
  c.in_dim = in_dim;
  c.hidden1 = std::max<std::size_t>(1, in_dim / 2);
  c.hidden2 = std::max<std::size_t>(1, in_dim / 4);
  c.target_dim = target_dim;
  c.num_heads = num_heads;
  return c;
}

void DiveConfig::validate() const {
  if (in_dim == 0 || hidden1 == 0 || hidden2 == 0) {
    throw ContractError("DIVE config: dimensions must be positive");
  }
  if (target_dim == 0 || num_heads == 0) {
    throw ContractError("DIVE config: target_dim and num_heads must be >= 1");
  }
}

std::size_t dive_param_count(const DiveConfig& c) {
  return c.hidden1 * c.in_dim + c.hidden1 +  // W1, b1
         c.hidden2 * c.hidden1 + c.hidden2 +  // W2, b2
         c.output_dim() * c.hidden2 + c.output_dim() +  // W3, b3
         2 * c.hidden1;  // gamma, beta
}

DiveAdapter::DiveAdapter(const DiveConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  w1_ = ParamTensor("w1", config_.hidden1, config_.in_dim, true);
  b1_ = ParamTensor("b1", 1, config_.hidden1, false);
  bn_ = BatchNorm(config_.hidden1);
  w2_ = ParamTensor("w2", config_.hidden2, config_.hidden1, true);
  b2_ = ParamTensor("b2", 1, config_.hidden2, false);
  w3_ = ParamTensor("w3", config_.output_dim(), config_.hidden2, true);
  b3_ = ParamTensor("b3", 1, config_.output_dim(), false);
  Rng rng(seed);
  xavier_fill(w1_, rng);
  xavier_fill(w2_, rng);
  xavier_fill(w3_, rng);
}

DiveAdapter::Forward DiveAdapter::forward(const Matrix& z, BatchNorm::Mode mode) {
  if (z.cols() != config_.in_dim) {
    throw DimensionError("DIVE adapter expects " + std::to_string(config_.in_dim) +
                         " input columns, got " + z.shape_string());
  }
  Forward fw;
  fw.mode = mode;
  fw.input = z;
  fw.bn_input = linear_forward(z, w1_, b1_);
  fw.bn_output = bn_.forward(fw.bn_input, mode, &fw.bn);
  fw.h1 = relu_forward(fw.bn_output);
  fw.pre2 = linear_forward(fw.h1, w2_, b2_);
  fw.h2 = relu_forward(fw.pre2);
  fw.h3 = linear_forward(fw.h2, w3_, b3_);
  Matrix normed = l2_normalize_forward(fw.h3, config_.target_dim, &fw.norm);
  fw.heads = HeadTensor(config_.num_heads, config_.target_dim, std::move(normed));
  return fw;
}

Matrix DiveAdapter::forward_inference(const Matrix& z) {
  return forward(z, BatchNorm::Mode::kEval).heads.head(0);
}

void DiveAdapter::backward(const Forward& fw, const Matrix& grad_heads) {
  const Matrix g_h3 = l2_normalize_backward(fw.norm, grad_heads);
  const Matrix g_h2 = linear_backward(fw.h2, w3_, b3_, g_h3).grad_x;
  const Matrix g_pre2 = relu_backward(fw.pre2, g_h2);
  const Matrix g_h1 = linear_backward(fw.h1, w2_, b2_, g_pre2).grad_x;
  const Matrix g_bn_out = relu_backward(fw.bn_output, g_h1);
  const Matrix g_a1 = bn_.backward(fw.bn, g_bn_out);
  linear_backward(fw.input, w1_, b1_, g_a1);
}

std::vector<ParamTensor*> DiveAdapter::params() {
  return {&w1_, &b1_, &bn_.gamma, &bn_.beta, &w2_, &b2_, &w3_, &b3_};
}

std::vector<const ParamTensor*> DiveAdapter::params() const {
  return {&w1_, &b1_, &bn_.gamma, &bn_.beta, &w2_, &b2_, &w3_, &b3_};
}

void DiveAdapter::zero_grad() {
  for (ParamTensor* p : params()) p->zero_grad();
}

Checkpoint DiveAdapter::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.kind = ModelKind::kDive;
  ckpt.config = {config_.in_dim, config_.hidden1, config_.hidden2, config_.target_dim,
                 config_.num_heads};
  for (const ParamTensor* p : params()) ckpt.add(p->name, p->value);
  ckpt.add("bn.running_mean", Matrix(1, bn_.running_mean.size(), bn_.running_mean));
  ckpt.add("bn.running_var", Matrix(1, bn_.running_var.size(), bn_.running_var));
  return ckpt;
}

DiveAdapter DiveAdapter::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != ModelKind::kDive || ckpt.config.size() != 5) {
    throw DataError("checkpoint does not hold a DIVE adapter");
  }
  DiveConfig c;
  c.in_dim = ckpt.config[0];
  c.hidden1 = ckpt.config[1];
  c.hidden2 = ckpt.config[2];
  c.target_dim = ckpt.config[3];
  c.num_heads = ckpt.config[4];
  DiveAdapter a(c, 0);
  for (ParamTensor* p : a.params())
    copy_into(*p, ckpt.tensor(p->name, p->value.rows(), p->value.cols()));
  a.bn_.running_mean = ckpt.tensor("bn.running_mean", 1, c.hidden1).data();
  a.bn_.running_var = ckpt.tensor("bn.running_var", 1, c.hidden1).data();
  return a;
}

// ---- residual -----------------------------------------------------------------

ResidualAdapter::ResidualAdapter(std::size_t in_dim, std::size_t hidden, InitScheme scheme,
                                 std::uint64_t seed)
    : scheme_(scheme),
      w_in_("w_in", hidden, in_dim, true),
      b_in_("b_in", 1, hidden, false),
      w_out_("w_out", in_dim, hidden, true),
      b_out_("b_out", 1, in_dim, false) {
  if (in_dim == 0 || hidden == 0) throw ContractError("residual adapter: zero dimension");
  Rng rng(seed);
  xavier_fill(w_in_, rng);
  xavier_fill(w_out_, rng);
  if (scheme == InitScheme::kZerosLast) w_out_.value.fill(0.0f);
}

ResidualAdapter::Forward ResidualAdapter::forward(const Matrix& z) const {
  if (z.cols() != in_dim()) {
    throw DimensionError("residual adapter expects " + std::to_string(in_dim()) +
                         " columns, got " + z.shape_string());
  }
  Forward fw;
  fw.input = z;
  fw.pre = linear_forward(z, w_in_, b_in_);
  fw.hidden = relu_forward(fw.pre);
  Matrix delta = linear_forward(fw.hidden, w_out_, b_out_);
  fw.output = z;
  axpy(fw.output, delta);
  return fw;
}

void ResidualAdapter::backward(const Forward& fw, const Matrix& grad_out) {
  const Matrix g_hidden = linear_backward(fw.hidden, w_out_, b_out_, grad_out).grad_x;
  const Matrix g_pre = relu_backward(fw.pre, g_hidden);
  linear_backward(fw.input, w_in_, b_in_, g_pre);
}

std::vector<ParamTensor*> ResidualAdapter::params() { return {&w_in_, &b_in_, &w_out_, &b_out_}; }

std::vector<const ParamTensor*> ResidualAdapter::params() const {
  return {&w_in_, &b_in_, &w_out_, &b_out_};
}

void ResidualAdapter::zero_grad() {
  for (ParamTensor* p : params()) p->zero_grad();
}

void ResidualAdapter::append_to(Checkpoint& ckpt, const std::string& prefix) const {
  for (const ParamTensor* p : params()) ckpt.add(prefix + p->name, p->value);
}

ResidualAdapter ResidualAdapter::from_checkpoint(const Checkpoint& ckpt, const std::string& prefix,
                                                 std::size_t in_dim, std::size_t hidden) {
  ResidualAdapter a(in_dim, hidden, InitScheme::kXavier, 0);
  for (ParamTensor* p : a.params())
    copy_into(*p, ckpt.tensor(prefix + p->name, p->value.rows(), p->value.cols()));
  return a;
}

Checkpoint residual_to_checkpoint(const ResidualAdapter& adapter, ModelKind kind,
                                  std::size_t target_dim) {
  Checkpoint ckpt;
  ckpt.kind = kind;
  ckpt.config = {adapter.in_dim(), adapter.hidden_dim(), target_dim,
                 adapter.init_scheme() == InitScheme::kZerosLast ? 0u : 1u};
  adapter.append_to(ckpt, "residual.");
  return ckpt;
}

ResidualAdapter residual_from_checkpoint(const Checkpoint& ckpt) {
  if ((ckpt.kind != ModelKind::kMatryoshka && ckpt.kind != ModelKind::kSearchAdaptor) ||
      ckpt.config.size() != 4) {
    throw DataError("checkpoint does not hold a residual adapter");
  }
  return ResidualAdapter::from_checkpoint(ckpt, "residual.", ckpt.config[0], ckpt.config[1]);
}

// ---- SMEC ----------------------------------------------------------------------

std::vector<std::size_t> select_top_dims(std::span<const float> logits, std::size_t target_dim) {
  if (target_dim > logits.size()) {
    throw ContractError("target_dim " + std::to_string(target_dim) + " exceeds input dim " +
                        std::to_string(logits.size()));
  }
  std::vector<std::size_t> order(logits.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return logits[a] > logits[b]; });
  order.resize(target_dim);
  std::sort(order.begin(), order.end());
  return order;
}

SmecAdapter::SmecAdapter(std::size_t in_dim, std::size_t hidden, std::uint64_t seed)
    : residual_(in_dim, hidden, InitScheme::kXavier, seed),
      ads_logits_("ads_logits", 1, in_dim, false) {}

std::vector<float> SmecAdapter::gate_values(std::span<const float> logits) {
  return std::vector<float>(logits.size(), 1.0f);
}

SmecAdapter::Forward SmecAdapter::compress(const Matrix& z, std::size_t target_dim,
                                           bool training) const {
  if (target_dim == 0 || target_dim > in_dim()) {
    throw ContractError("smec_compress: target_dim " + std::to_string(target_dim) +
                        " not in [1, " + std::to_string(in_dim()) + "]");
  }
  Forward fw;
  fw.training = training;
  fw.residual = residual_.forward(z);
  auto logits = ads_logits_.value.row(0);
  fw.selected = select_top_dims(logits, target_dim);
  // In training mode the gate multiplies by sigmoid(l) + (1 - sigmoid(l))
  // with the second term detached: the forward value is exactly 1, so the
  // selected columns are used as-is and only the backward pass differs.
  Matrix selected = gather_cols(fw.residual.output, fw.selected);
  if (training) {
    fw.gate_slope.resize(fw.selected.size());
    for (std::size_t j = 0; j < fw.selected.size(); ++j) {
      const double s = 1.0 / (1.0 + std::exp(-double(logits[fw.selected[j]])));
      fw.gate_slope[j] = s * (1.0 - s);
    }
  }
  fw.output = l2_normalize_forward(selected, 0, &fw.norm);
  return fw;
}

void SmecAdapter::backward(const Forward& fw, const Matrix& grad_out) {
  const Matrix g_sel = l2_normalize_backward(fw.norm, grad_out);
  const Matrix& res = fw.residual.output;
  Matrix g_res(res.rows(), res.cols());
  for (std::size_t i = 0; i < res.rows(); ++i)
    for (std::size_t j = 0; j < fw.selected.size(); ++j) g_res(i, fw.selected[j]) = g_sel(i, j);
  if (fw.training) {
    for (std::size_t j = 0; j < fw.selected.size(); ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < res.rows(); ++i)
        acc += double(g_sel(i, j)) * double(res(i, fw.selected[j]));
      ads_logits_.grad(0, fw.selected[j]) += float(acc * fw.gate_slope[j]);
    }
  }
  residual_.backward(fw.residual, g_res);
}

std::vector<ParamTensor*> SmecAdapter::params() {
  auto p = residual_.params();
  p.push_back(&ads_logits_);
  return p;
}

std::vector<const ParamTensor*> SmecAdapter::params() const {
  auto p = residual_.params();
  p.push_back(&ads_logits_);
  return p;
}

void SmecAdapter::zero_grad() {
  for (ParamTensor* p : params()) p->zero_grad();
}

Checkpoint SmecAdapter::to_checkpoint(std::size_t target_dim) const {
  Checkpoint ckpt;
  ckpt.kind = ModelKind::kSmec;
  ckpt.config = {residual_.in_dim(), residual_.hidden_dim(), target_dim};
  residual_.append_to(ckpt, "residual.");
  ckpt.add("ads_logits", ads_logits_.value);
  return ckpt;
}

SmecAdapter SmecAdapter::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != ModelKind::kSmec || ckpt.config.size() != 3) {
    throw DataError("checkpoint does not hold a SMEC adapter");
  }
  SmecAdapter a(ckpt.config[0], ckpt.config[1], 0);
  a.residual_ = ResidualAdapter::from_checkpoint(ckpt, "residual.", ckpt.config[0], ckpt.config[1]);
  copy_into(a.ads_logits_, ckpt.tensor("ads_logits", 1, ckpt.config[0]));
  return a;
}

// ---- helpers --------------------------------------------------------------------

std::vector<float> flatten_values(const std::vector<const ParamTensor*>& params) {
  std::vector<float> out;
  out.reserve(count_scalars(params));
  for (const ParamTensor* p : params)
    out.insert(out.end(), p->value.data().begin(), p->value.data().end());
  return out;
}

std::size_t count_scalars(const std::vector<const ParamTensor*>& params) {
  std::size_t n = 0;
  for (const ParamTensor* p : params) n += p->value.size();
  return n;
}

}  // namespace dive
