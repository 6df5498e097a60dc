#include "dive/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dive/errors.hpp"
#include "dive/layers.hpp"

namespace dive {

namespace {

constexpr double kUnitTolerance = 1e-5;

void require_unit_rows(const Matrix& m, const char* what) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double n = norm(m.row(i));
    if (std::abs(n - 1.0) > kUnitTolerance) {
      throw ContractError(std::string(what) + ": row " + std::to_string(i) + " has norm " +
                          std::to_string(n) + ", expected unit norm");
    }
  }
}

void require_triplet_shapes(const Matrix& a, const Matrix& b, const Matrix& c, const char* what) {
  require_same_shape(a, b, what);
  require_same_shape(a, c, what);
}

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(sum_{b in idx} exp(s[b])) with a max shift.
template <typename Pred>
double log_sum_exp(const std::vector<double>& s, Pred include) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t b = 0; b < s.size(); ++b)
    if (include(b)) mx = std::max(mx, s[b]);
  double acc = 0.0;
  for (std::size_t b = 0; b < s.size(); ++b)
    if (include(b)) acc += std::exp(s[b] - mx);
  return mx + std::log(acc);
}

// Normalised `dim`-prefix of x, with the cache needed to backprop into x.
struct Prefix {
  NormalizeCache cache;
  Matrix value;
};

Prefix normalized_prefix(const Matrix& x, std::size_t dim) {
  Prefix p;
  p.value = l2_normalize_forward(slice_cols(x, 0, dim), 0, &p.cache);
  return p;
}

void add_prefix_grad(Matrix& full, const Prefix& prefix, const Matrix& grad_prefix) {
  const Matrix g = l2_normalize_backward(prefix.cache, grad_prefix);
  for (std::size_t i = 0; i < g.rows(); ++i)
    for (std::size_t j = 0; j < g.cols(); ++j) full(i, j) += g(i, j);
}

}  // namespace

HingeResult hinge_triplet(const Matrix& q, const Matrix& p, const Matrix& n, double margin) {
  require_triplet_shapes(q, p, n, "hinge_triplet");
  require_unit_rows(q, "hinge_triplet query");
  require_unit_rows(p, "hinge_triplet positive");
  require_unit_rows(n, "hinge_triplet negative");

  const std::size_t batch = q.rows();
  HingeResult r;
  r.deltas.resize(batch);
  r.grad = {Matrix(q.rows(), q.cols()), Matrix(q.rows(), q.cols()), Matrix(q.rows(), q.cols())};
  if (batch == 0) return r;

  const double inv_b = 1.0 / double(batch);
  double sum = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    const double delta = dot(q.row(i), p.row(i)) - dot(q.row(i), n.row(i));
    r.deltas[i] = delta;
    if (!(delta < margin)) continue;  // gate closed: no loss, no gradient
    ++r.active;
    sum += margin - delta;
    auto qi = q.row(i);
    auto pi = p.row(i);
    auto ni = n.row(i);
    auto gq = r.grad.q.row(i);
    auto gp = r.grad.p.row(i);
    auto gn = r.grad.n.row(i);
    for (std::size_t j = 0; j < q.cols(); ++j) {
      gq[j] = float(-(double(pi[j]) - double(ni[j])) * inv_b);
      gp[j] = float(-double(qi[j]) * inv_b);
      gn[j] = float(double(qi[j]) * inv_b);
    }
  }
  r.loss = sum * inv_b;
  r.active_ratio = double(r.active) * inv_b;
  return r;
}

ContrastResult nt_xent_headwise(const HeadTensor& z, double tau, NtXentStats* stats) {
  const std::size_t batch = z.batch();
  const std::size_t heads = z.heads();
  const std::size_t dim = z.dim();
  if (heads < 2) {
    throw UndefinedObjectiveError(
        "head-wise contrastive loss needs at least 2 heads (no positive pairs with H=1)");
  }
  if (batch * heads < 2) throw ContractError("nt_xent: need at least 2 head vectors");
  if (!(tau > 0.0)) throw ContractError("nt_xent: temperature must be positive");

  const std::size_t total = batch * heads;
  // Flattened view: vector a = (sample a / H, head a % H).
  auto vec = [&](std::size_t a) { return z.at(a / heads, a % heads); };

  std::vector<double> sim(total * total);
  for (std::size_t a = 0; a < total; ++a)
    for (std::size_t b = a; b < total; ++b) {
      const double s = dot(vec(a), vec(b));
      sim[a * total + b] = s;
      sim[b * total + a] = s;
    }

  ContrastResult r;
  r.grad = Matrix(batch, heads * dim);
  std::vector<double> logits(total);
  std::vector<double> coeff(total);
  std::vector<double> grad_acc(total * dim, 0.0);
  const double inv_n = 1.0 / double(total);
  double loss = 0.0;

  for (std::size_t a = 0; a < total; ++a) {
    const std::size_t sample = a / heads;
    for (std::size_t b = 0; b < total; ++b) logits[b] = sim[a * total + b] / tau;
    auto in_all = [&](std::size_t b) { return b != a; };
    auto in_pos = [&](std::size_t b) { return b != a && b / heads == sample; };
    const double lse_all = log_sum_exp(logits, in_all);
    const double lse_pos = log_sum_exp(logits, in_pos);
    loss += lse_all - lse_pos;

    // d loss_a / d s_ab = softmax_all(b) - [b positive] softmax_pos(b)
    for (std::size_t b = 0; b < total; ++b) {
      if (b == a) {
        coeff[b] = 0.0;
        continue;
      }
      double c = std::exp(logits[b] - lse_all);
      if (in_pos(b)) c -= std::exp(logits[b] - lse_pos);
      coeff[b] = c * inv_n / tau;
      if (stats && c != 0.0) ++stats->nonzero_pairs;
    }
    auto za = vec(a);
    for (std::size_t b = 0; b < total; ++b) {
      const double c = coeff[b];
      if (c == 0.0) continue;
      auto zb = vec(b);
      double* ga = grad_acc.data() + a * dim;
      double* gb = grad_acc.data() + b * dim;
      for (std::size_t j = 0; j < dim; ++j) {
        ga[j] += c * double(zb[j]);
        gb[j] += c * double(za[j]);
      }
    }
  }
  r.loss = loss * inv_n;
  for (std::size_t a = 0; a < total; ++a) {
    auto out = r.grad.row(a / heads).subspan((a % heads) * dim, dim);
    for (std::size_t j = 0; j < dim; ++j) out[j] = float(grad_acc[a * dim + j]);
  }
  return r;
}

std::uint64_t pair_count(std::uint64_t batch, std::uint64_t heads) {
  return batch * heads * (heads - 1) + batch * (batch - 1) * heads * heads;
}

ContrastTotal contrast_total(const TripletHeads& heads, double tau) {
  ContrastResult lq = nt_xent_headwise(heads.q, tau);
  ContrastResult lp = nt_xent_headwise(heads.p, tau);
  ContrastResult ln = nt_xent_headwise(heads.n, tau);
  ContrastTotal t;
  t.loss = (lq.loss + lp.loss + ln.loss) / 3.0;
  const float third = float(1.0 / 3.0);
  for (Matrix* g : {&lq.grad, &lp.grad, &ln.grad})
    for (float& v : g->data()) v *= third;
  t.grad = {std::move(lq.grad), std::move(lp.grad), std::move(ln.grad)};
  return t;
}

DiveLossResult dive_loss(const TripletHeads& heads, double margin, double lambda, double tau) {
  const std::size_t k = heads.q.dim();
  const std::size_t h = heads.q.heads();
  if (heads.p.heads() != h || heads.n.heads() != h || heads.p.dim() != k || heads.n.dim() != k ||
      heads.p.batch() != heads.q.batch() || heads.n.batch() != heads.q.batch()) {
    throw DimensionError("dive_loss: q/p/n head tensors differ in shape");
  }
  if (h < 2 && lambda != 0.0) {
    throw UndefinedObjectiveError("dive_loss: contrastive weight must be 0 with a single head");
  }

  DiveLossResult r;
  const HingeResult hinge = hinge_triplet(heads.q.head(0), heads.p.head(0), heads.n.head(0), margin);
  const std::size_t batch = heads.q.batch();
  const std::size_t width = h * k;
  r.triplet_grad = {Matrix(batch, width), Matrix(batch, width), Matrix(batch, width)};
  add_head_grad(r.triplet_grad.q, 0, k, hinge.grad.q);
  add_head_grad(r.triplet_grad.p, 0, k, hinge.grad.p);
  add_head_grad(r.triplet_grad.n, 0, k, hinge.grad.n);

  double contrast = 0.0;
  if (lambda != 0.0) {
    ContrastTotal ct = contrast_total(heads, tau);
    contrast = ct.loss;
    r.contrast_grad = std::move(ct.grad);
  } else {
    r.contrast_grad = {Matrix(batch, width), Matrix(batch, width), Matrix(batch, width)};
  }

  r.total_grad = r.triplet_grad;
  if (lambda != 0.0) {
    axpy(r.total_grad.q, r.contrast_grad.q, float(lambda));
    axpy(r.total_grad.p, r.contrast_grad.p, float(lambda));
    axpy(r.total_grad.n, r.contrast_grad.n, float(lambda));
  }

  r.report.triplet = hinge.loss;
  r.report.contrast = contrast;
  r.report.total = hinge.loss + lambda * contrast;
  r.report.active_ratio = hinge.active_ratio;
  r.report.active = hinge.active;
  r.report.batch = batch;
  r.report.margin = margin;
  r.report.lambda = lambda;
  r.report.tau = tau;
  return r;
}

NestedResult matryoshka_nested_loss(const Matrix& a, const Matrix& p, const Matrix& n,
                                    const std::vector<std::size_t>& dims, double margin) {
  require_triplet_shapes(a, p, n, "matryoshka_nested_loss");
  const std::size_t batch = a.rows();
  NestedResult r;
  r.grad = {Matrix(batch, a.cols()), Matrix(batch, a.cols()), Matrix(batch, a.cols())};
  if (batch == 0) return r;
  for (std::size_t i = 1; i < dims.size(); ++i) {
    if (dims[i] <= dims[i - 1]) throw ContractError("nested dims must be strictly ascending");
  }
  std::vector<char> active(batch, 0);
  const double inv_b = 1.0 / double(batch);

  for (std::size_t dim : dims) {
    if (dim == 0 || dim > a.cols()) {
      throw ContractError("nested dim " + std::to_string(dim) + " exceeds embedding dim " +
                          std::to_string(a.cols()));
    }
    const Prefix am = normalized_prefix(a, dim);
    const Prefix pm = normalized_prefix(p, dim);
    const Prefix nm = normalized_prefix(n, dim);
    Matrix ga(batch, dim), gp(batch, dim), gn(batch, dim);
    double sum = 0.0;
    for (std::size_t i = 0; i < batch; ++i) {
      const double d_ap = 1.0 - dot(am.value.row(i), pm.value.row(i));
      const double d_an = 1.0 - dot(am.value.row(i), nm.value.row(i));
      const double term = d_ap - d_an + margin;
      if (!(term > 0.0)) continue;
      active[i] = 1;
      sum += term;
      for (std::size_t j = 0; j < dim; ++j) {
        ga(i, j) = float((-double(pm.value(i, j)) + double(nm.value(i, j))) * inv_b);
        gp(i, j) = float(-double(am.value(i, j)) * inv_b);
        gn(i, j) = float(double(am.value(i, j)) * inv_b);
      }
    }
    r.loss += sum * inv_b;
    add_prefix_grad(r.grad.q, am, ga);
    add_prefix_grad(r.grad.p, pm, gp);
    add_prefix_grad(r.grad.n, nm, gn);
  }
  r.active = std::size_t(std::count(active.begin(), active.end(), 1));
  return r;
}

std::vector<std::size_t> default_nested_dims(std::size_t target_dim, std::size_t in_dim) {
  std::vector<std::size_t> dims;
  for (std::size_t d = std::max<std::size_t>(1, target_dim); d < in_dim; d *= 2) dims.push_back(d);
  dims.push_back(in_dim);
  return dims;
}

SearchResult search_adaptor_loss(const Matrix& adapted_a, const Matrix& adapted_p,
                                 const Matrix& adapted_n, const Matrix& original_a,
                                 const Matrix& original_p, const Matrix& original_n,
                                 std::size_t dim, double alpha) {
  require_triplet_shapes(adapted_a, adapted_p, adapted_n, "search_adaptor_loss");
  require_same_shape(adapted_a, original_a, "search_adaptor_loss");
  require_same_shape(adapted_p, original_p, "search_adaptor_loss");
  require_same_shape(adapted_n, original_n, "search_adaptor_loss");
  if (alpha < 0.0) throw ContractError("search_adaptor_loss: alpha must be >= 0");
  if (dim == 0 || dim > adapted_a.cols()) throw ContractError("search_adaptor_loss: bad dim");

  const std::size_t batch = adapted_a.rows();
  const std::size_t width = adapted_a.cols();
  SearchResult r;
  r.grad = {Matrix(batch, width), Matrix(batch, width), Matrix(batch, width)};
  if (batch == 0) return r;

  const Prefix ea = normalized_prefix(adapted_a, dim);
  const Prefix ep = normalized_prefix(adapted_p, dim);
  const Prefix en = normalized_prefix(adapted_n, dim);
  Matrix ga(batch, dim), gp(batch, dim), gn(batch, dim);
  const double inv_b = 1.0 / double(batch);
  double rank = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    const double s_pos = dot(ea.value.row(i), ep.value.row(i));
    const double s_neg = dot(ea.value.row(i), en.value.row(i));
    const double x = s_neg - s_pos;
    rank += softplus(x);
    const double w = sigmoid(x) * inv_b;  // d/dx, then d x = d s_neg - d s_pos
    for (std::size_t j = 0; j < dim; ++j) {
      ga(i, j) = float(w * (double(en.value(i, j)) - double(ep.value(i, j))));
      gp(i, j) = float(-w * double(ea.value(i, j)));
      gn(i, j) = float(w * double(ea.value(i, j)));
    }
  }
  r.rank = rank * inv_b;
  add_prefix_grad(r.grad.q, ea, ga);
  add_prefix_grad(r.grad.p, ep, gp);
  add_prefix_grad(r.grad.n, en, gn);

  const double inv_elems = 1.0 / double(batch * width);
  auto l1 = [&](const Matrix& x, const Matrix& ref, Matrix& grad) {
    double acc = 0.0;
    const double scale = alpha * inv_elems / 3.0;
    for (std::size_t e = 0; e < x.size(); ++e) {
      const double d = double(x.data()[e]) - double(ref.data()[e]);
      acc += std::abs(d);
      if (d > 0.0) grad.data()[e] += float(scale);
      if (d < 0.0) grad.data()[e] -= float(scale);
    }
    return acc * inv_elems;
  };
  r.rec = (l1(adapted_a, original_a, r.grad.q) + l1(adapted_p, original_p, r.grad.p) +
           l1(adapted_n, original_n, r.grad.n)) /
          3.0;
  r.total = r.rank + alpha * r.rec;
  return r;
}

void SimilarityMemory::push(const Matrix& original, const Matrix& compressed) {
  if (capacity_ == 0) return;
  if (!entries_.empty() && (entries_.front().compressed.cols() != compressed.cols() ||
                            entries_.front().original.cols() != original.cols())) {
    entries_.clear();
  }
  entries_.push_back({l2_normalize_rows(original), compressed});
  while (entries_.size() > capacity_) entries_.pop_front();
}

std::size_t SimilarityMemory::rows() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.original.rows();
  return n;
}

double similarity_preservation_loss(const Matrix& original, const Matrix& compressed,
                                    const SimilarityMemory* memory, Matrix* grad_compressed) {
  if (original.rows() != compressed.rows()) {
    throw DimensionError("similarity_preservation_loss: " + original.shape_string() + " vs " +
                         compressed.shape_string());
  }
  const std::size_t batch = original.rows();
  const Matrix orig = l2_normalize_rows(original);

  // Reference rows: the current batch followed by the memory.
  std::vector<std::span<const float>> ref_orig, ref_comp;
  for (std::size_t i = 0; i < batch; ++i) {
    ref_orig.push_back(orig.row(i));
    ref_comp.push_back(compressed.row(i));
  }
  if (memory) {
    for (const auto& e : memory->entries()) {
      if (e.compressed.cols() != compressed.cols() || e.original.cols() != original.cols()) continue;
      for (std::size_t i = 0; i < e.original.rows(); ++i) {
        ref_orig.push_back(e.original.row(i));
        ref_comp.push_back(e.compressed.row(i));
      }
    }
  }
  const std::size_t refs = ref_orig.size();
  if (batch == 0 || refs == 0) return 0.0;
  const double inv_count = 1.0 / double(batch * refs);
  const std::size_t k = compressed.cols();
  std::vector<double> grad(batch * k, 0.0);
  double loss = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    for (std::size_t j = 0; j < refs; ++j) {
      const double diff = dot(compressed.row(i), ref_comp[j]) - dot(orig.row(i), ref_orig[j]);
      loss += diff * diff;
      const double g = 2.0 * diff * inv_count;
      for (std::size_t c = 0; c < k; ++c) grad[i * k + c] += g * double(ref_comp[j][c]);
      if (j < batch) {
        for (std::size_t c = 0; c < k; ++c) grad[j * k + c] += g * double(compressed(i, c));
      }
    }
  }
  if (grad_compressed) {
    *grad_compressed = Matrix(batch, k);
    for (std::size_t e = 0; e < grad.size(); ++e) grad_compressed->data()[e] = float(grad[e]);
  }
  return loss * inv_count;
}

SmecResult smec_stage_loss(const Matrix& compressed_a, const Matrix& compressed_p,
                           const Matrix& compressed_n, const Matrix& original_a, double alpha,
                           const SimilarityMemory* memory) {
  require_triplet_shapes(compressed_a, compressed_p, compressed_n, "smec_stage_loss");
  if (alpha < 0.0) throw ContractError("smec_stage_loss: alpha must be >= 0");
  const std::size_t batch = compressed_a.rows();
  const std::size_t k = compressed_a.cols();
  SmecResult r;
  r.grad = {Matrix(batch, k), Matrix(batch, k), Matrix(batch, k)};
  if (batch == 0) return r;
  const double inv_b = 1.0 / double(batch);
  double rank = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    const double x = dot(compressed_a.row(i), compressed_n.row(i)) -
                     dot(compressed_a.row(i), compressed_p.row(i));
    rank += softplus(x);
    const double w = sigmoid(x) * inv_b;
    for (std::size_t j = 0; j < k; ++j) {
      r.grad.q(i, j) = float(w * (double(compressed_n(i, j)) - double(compressed_p(i, j))));
      r.grad.p(i, j) = float(-w * double(compressed_a(i, j)));
      r.grad.n(i, j) = float(w * double(compressed_a(i, j)));
    }
  }
  r.rank = rank * inv_b;
  if (alpha != 0.0) {
    Matrix g;
    r.unsup = similarity_preservation_loss(original_a, compressed_a, memory, &g);
    axpy(r.grad.q, g, float(alpha));
  }
  r.total = r.rank + alpha * r.unsup;
  return r;
}

}  // namespace dive
