#include "dive/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <numeric>
#include <sstream>
#include <thread>
#include <utility>

#include "dive/adamw.hpp"
#include "dive/errors.hpp"
#include "dive/eval.hpp"
#include "dive/log.hpp"
#include "dive/losses.hpp"
#include "dive/rng.hpp"

namespace dive {

// ---- config ------------------------------------------------------------------------

Method parse_method(const std::string& name) {
  if (name == "dive") return Method::kDive;
  if (name == "dive_no_contrast") return Method::kDiveNoContrast;
  if (name == "dive_single_head") return Method::kDiveSingleHead;
  if (name == "matryoshka") return Method::kMatryoshka;
  if (name == "search_adaptor" || name == "search") return Method::kSearchAdaptor;
  if (name == "smec") return Method::kSmec;
  throw ContractError("unknown method '" + name + "'");
}

const char* method_name(Method method) {
  switch (method) {
    case Method::kDive: return "dive";
    case Method::kDiveNoContrast: return "dive_no_contrast";
    case Method::kDiveSingleHead: return "dive_single_head";
    case Method::kMatryoshka: return "matryoshka";
    case Method::kSearchAdaptor: return "search_adaptor";
    case Method::kSmec: return "smec";
  }
  return "unknown";
}

bool is_dive_family(Method method) {
  return method == Method::kDive || method == Method::kDiveNoContrast ||
         method == Method::kDiveSingleHead;
}

std::size_t TrainConfig::effective_heads() const {
  return method == Method::kDiveSingleHead ? 1 : heads;
}

double TrainConfig::effective_lambda() const {
  if (method == Method::kDiveSingleHead || method == Method::kDiveNoContrast) return 0.0;
  return lambda_contrast;
}

DiveConfig TrainConfig::dive_config(std::size_t in_dim) const {
  DiveConfig c = DiveConfig::for_input(in_dim, target_dim, effective_heads());
  if (hidden1) c.hidden1 = hidden1;
  if (hidden2) c.hidden2 = hidden2;
  return c;
}

std::size_t TrainConfig::residual_hidden(std::size_t in_dim) const {
  return hidden1 ? hidden1 : std::max<std::size_t>(1, in_dim / 2);
}

std::vector<std::size_t> TrainConfig::resolved_nested_dims(std::size_t in_dim) const {
  return nested_dims.empty() ? default_nested_dims(target_dim, in_dim) : nested_dims;
}

std::vector<std::size_t> TrainConfig::resolved_stage_dims(std::size_t in_dim) const {
  if (!smec_stage_dims.empty()) return smec_stage_dims;
  return {in_dim, std::min(in_dim, 4 * target_dim), std::min(in_dim, target_dim)};
}

std::vector<std::size_t> TrainConfig::resolved_stage_epochs() const {
  if (!smec_stage_epochs.empty()) return smec_stage_epochs;
  const std::size_t fifth = epochs / 5;
  return {fifth, fifth, epochs - 2 * fifth};
}

std::size_t TrainConfig::total_epochs() const {
  if (method != Method::kSmec) return epochs;
  const auto e = resolved_stage_epochs();
  return std::accumulate(e.begin(), e.end(), std::size_t(0));
}

void TrainConfig::validate(std::size_t in_dim) const {
  if (in_dim == 0) throw ContractError("training data has dimension 0");
  if (target_dim == 0) throw ContractError("target dim k must be >= 1");
  if (batch_size < 2) throw ContractError("batch size must be >= 2");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ContractError("learning rate must be > 0");
  if (!(weight_decay >= 0.0)) throw ContractError("weight decay must be >= 0");
  if (!std::isfinite(margin)) throw ContractError("margin must be finite");
  if (target_dim > in_dim) {
    throw ContractError("target dim " + std::to_string(target_dim) + " exceeds input dim " +
                        std::to_string(in_dim));
  }
  if (is_dive_family(method)) {
    if (heads == 0) throw ContractError("heads must be >= 1");
    if (!(tau > 0.0)) throw ContractError("tau must be > 0");
    if (!(lambda_contrast >= 0.0)) throw ContractError("lambda must be >= 0");
    if (effective_heads() < 2 && effective_lambda() != 0.0) {
      throw UndefinedObjectiveError(
          "the head-wise contrastive term needs at least 2 heads; use lambda 0 or "
          "method dive_single_head");
    }
    dive_config(in_dim).validate();
    return;
  }
  if (method == Method::kMatryoshka) {
    const auto dims = resolved_nested_dims(in_dim);
    if (dims.empty() || dims.back() > in_dim) throw ContractError("nested dims exceed input dim");
  }
  if (method == Method::kSearchAdaptor && !(search_alpha >= 0.0)) {
    throw ContractError("search alpha must be >= 0");
  }
  if (method == Method::kSmec) {
    if (!(smec_alpha >= 0.0)) throw ContractError("smec alpha must be >= 0");
    const auto dims = resolved_stage_dims(in_dim);
    const auto ep = resolved_stage_epochs();
    if (dims.size() != ep.size() || dims.empty()) {
      throw ContractError("smec stage dims and stage epochs must have the same non-zero length");
    }
    for (std::size_t d : dims)
      if (d == 0 || d > in_dim) throw ContractError("smec stage dim out of range");
    if (dims.back() != target_dim) throw ContractError("the final smec stage must equal k");
  }
}

// ---- dynamics log ----------------------------------------------------------------------

std::vector<double> DynamicsLog::rho_series() const {
  std::vector<double> out;
  for (const auto& r : records) out.push_back(r.rho);
  return out;
}

std::string DynamicsLog::to_csv() const {
  std::ostringstream s;
  s.precision(12);
  s << "epoch,rho,loss_triplet,loss_contrast,loss_total,cum_displacement\n";
  for (const auto& r : records) {
    s << r.epoch << ',' << r.rho << ',' << r.loss_triplet << ',' << r.loss_contrast << ','
      << r.loss_total << ',' << r.cum_displacement << '\n';
  }
  return s.str();
}

void DynamicsLog::save_csv(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << to_csv();
}

// ---- learners ---------------------------------------------------------------------------

namespace {

struct Batch {
  Matrix q, p, n;
};

struct StepStats {
  double triplet = 0.0;
  double contrast = 0.0;
  double total = 0.0;
  std::size_t active = 0;
};

Batch gather_batch(const TrainData& data, std::span<const std::size_t> order) {
  std::vector<std::size_t> q, p, n;
  for (std::size_t i : order) {
    const Triplet& t = data.triplets[i];
    q.push_back(t.query);
    p.push_back(t.positive);
    n.push_back(t.negative);
  }
  return {gather_rows(data.queries->matrix(), q), gather_rows(data.corpus->matrix(), p),
          gather_rows(data.corpus->matrix(), n)};
}

class Learner {
 public:
  virtual ~Learner() = default;
  virtual std::vector<ParamTensor*> params() = 0;
  virtual std::vector<const ParamTensor*> const_params() const = 0;
  // Loss and gradients for one batch; grads are expected to be zero on entry.
  virtual StepStats step(const Batch& batch) = 0;
  virtual Checkpoint checkpoint() const = 0;
  virtual void begin_stage(std::size_t /*dim*/) {}
};

class DiveLearner : public Learner {
 public:
  DiveLearner(const TrainConfig& c, std::size_t in_dim)
      : adapter_(c.dive_config(in_dim), c.seed),
        margin_(c.margin),
        lambda_(c.effective_lambda()),
        tau_(c.tau) {}

  std::vector<ParamTensor*> params() override { return adapter_.params(); }
  std::vector<const ParamTensor*> const_params() const override { return adapter_.params(); }

  StepStats step(const Batch& b) override {
    const auto fq = adapter_.forward(b.q, BatchNorm::Mode::kTrain);
    const auto fp = adapter_.forward(b.p, BatchNorm::Mode::kTrain);
    const auto fn = adapter_.forward(b.n, BatchNorm::Mode::kTrain);
    const auto res = dive_loss({fq.heads, fp.heads, fn.heads}, margin_, lambda_, tau_);
    adapter_.backward(fq, res.total_grad.q);
    adapter_.backward(fp, res.total_grad.p);
    adapter_.backward(fn, res.total_grad.n);
    return {res.report.triplet, res.report.contrast, res.report.total, res.report.active};
  }

  Checkpoint checkpoint() const override { return adapter_.to_checkpoint(); }
  DiveAdapter& adapter() { return adapter_; }

 private:
  DiveAdapter adapter_;
  double margin_, lambda_, tau_;
};

class MatryoshkaLearner : public Learner {
 public:
  MatryoshkaLearner(const TrainConfig& c, std::size_t in_dim)
      : adapter_(in_dim, c.residual_hidden(in_dim), InitScheme::kZerosLast, c.seed),
        dims_(c.resolved_nested_dims(in_dim)),
        margin_(c.margin),
        target_(c.target_dim) {}

  std::vector<ParamTensor*> params() override { return adapter_.params(); }
  std::vector<const ParamTensor*> const_params() const override { return adapter_.params(); }

  StepStats step(const Batch& b) override {
    const auto fa = adapter_.forward(b.q);
    const auto fp = adapter_.forward(b.p);
    const auto fn = adapter_.forward(b.n);
    const auto res = matryoshka_nested_loss(fa.output, fp.output, fn.output, dims_, margin_);
    adapter_.backward(fa, res.grad.q);
    adapter_.backward(fp, res.grad.p);
    adapter_.backward(fn, res.grad.n);
    return {res.loss, 0.0, res.loss, res.active};
  }

  Checkpoint checkpoint() const override {
    return residual_to_checkpoint(adapter_, ModelKind::kMatryoshka, target_);
  }

 private:
  ResidualAdapter adapter_;
  std::vector<std::size_t> dims_;
  double margin_;
  std::size_t target_;
};

// The log columns carry (rank, recovery) as (triplet, contrast) so that
// total = triplet + alpha * contrast.
class SearchLearner : public Learner {
 public:
  SearchLearner(const TrainConfig& c, std::size_t in_dim)
      : adapter_(in_dim, c.residual_hidden(in_dim), InitScheme::kXavier, c.seed),
        alpha_(c.search_alpha),
        target_(c.target_dim) {}

  std::vector<ParamTensor*> params() override { return adapter_.params(); }
  std::vector<const ParamTensor*> const_params() const override { return adapter_.params(); }

  StepStats step(const Batch& b) override {
    const auto fa = adapter_.forward(b.q);
    const auto fp = adapter_.forward(b.p);
    const auto fn = adapter_.forward(b.n);
    const auto res = search_adaptor_loss(fa.output, fp.output, fn.output, b.q, b.p, b.n, target_,
                                         alpha_);
    adapter_.backward(fa, res.grad.q);
    adapter_.backward(fp, res.grad.p);
    adapter_.backward(fn, res.grad.n);
    return {res.rank, res.rec, res.total, b.q.rows()};
  }

  Checkpoint checkpoint() const override {
    return residual_to_checkpoint(adapter_, ModelKind::kSearchAdaptor, target_);
  }

 private:
  ResidualAdapter adapter_;
  double alpha_;
  std::size_t target_;
};

class SmecLearner : public Learner {
 public:
  SmecLearner(const TrainConfig& c, std::size_t in_dim)
      : adapter_(in_dim, c.residual_hidden(in_dim), c.seed),
        memory_(c.smec_memory_batches),
        alpha_(c.smec_alpha),
        target_(c.target_dim),
        stage_dim_(in_dim) {}

  std::vector<ParamTensor*> params() override { return adapter_.params(); }
  std::vector<const ParamTensor*> const_params() const override { return adapter_.params(); }

  void begin_stage(std::size_t dim) override {
    stage_dim_ = dim;
    memory_.clear();
  }

  StepStats step(const Batch& b) override {
    const auto fa = adapter_.compress(b.q, stage_dim_, true);
    const auto fp = adapter_.compress(b.p, stage_dim_, true);
    const auto fn = adapter_.compress(b.n, stage_dim_, true);
    const auto res = smec_stage_loss(fa.output, fp.output, fn.output, b.q, alpha_, &memory_);
    adapter_.backward(fa, res.grad.q);
    adapter_.backward(fp, res.grad.p);
    adapter_.backward(fn, res.grad.n);
    memory_.push(l2_normalize_rows(b.q), fa.output);
    return {res.rank, res.unsup, res.total, b.q.rows()};
  }

  Checkpoint checkpoint() const override { return adapter_.to_checkpoint(target_); }

 private:
  SmecAdapter adapter_;
  SimilarityMemory memory_;
  double alpha_;
  std::size_t target_;
  std::size_t stage_dim_;
};

std::unique_ptr<Learner> make_learner(const TrainConfig& c, std::size_t in_dim) {
  switch (c.method) {
    case Method::kDive:
    case Method::kDiveNoContrast:
    case Method::kDiveSingleHead:
      return std::make_unique<DiveLearner>(c, in_dim);
    case Method::kMatryoshka: return std::make_unique<MatryoshkaLearner>(c, in_dim);
    case Method::kSearchAdaptor: return std::make_unique<SearchLearner>(c, in_dim);
    case Method::kSmec: return std::make_unique<SmecLearner>(c, in_dim);
  }
  throw ContractError("unknown method");
}

double grad_norm(const std::vector<const ParamTensor*>& params) {
  double acc = 0.0;
  for (const ParamTensor* p : params)
    for (float g : p->grad.data()) acc += double(g) * double(g);
  return std::sqrt(acc);
}

std::vector<double> flat_grads(const std::vector<const ParamTensor*>& params) {
  std::vector<double> out;
  for (const ParamTensor* p : params)
    for (float g : p->grad.data()) out.push_back(g);
  return out;
}

double l2_distance(const std::vector<float>& a, const std::vector<float>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = double(a[i]) - double(b[i]);
    acc += d * d;
  }
  return std::sqrt(acc);
}

void require_data(const TrainData& data) {
  if (!data.queries || !data.corpus) throw ContractError("training data stores are not set");
  if (data.triplets.empty()) throw ContractError("no training triplets");
  if (data.queries->dim() != data.corpus->dim()) {
    throw DimensionError("query dim " + std::to_string(data.queries->dim()) + " != corpus dim " +
                         std::to_string(data.corpus->dim()));
  }
  for (const Triplet& t : data.triplets)
    if (t.query >= data.queries->size() || t.positive >= data.corpus->size() ||
        t.negative >= data.corpus->size()) {
      throw ContractError("triplet row index out of range");
    }
  // ReLU maps NaN to 0, so a poisoned input would otherwise surface as a dead row.
  if (!all_finite(data.queries->matrix()) || !all_finite(data.corpus->matrix())) {
    throw NumericError("training embeddings contain non-finite values");
  }
}

// Batch boundaries over a fixed permutation; a 1-row remainder is folded
// into the previous batch so every triplet is covered.
std::vector<std::pair<std::size_t, std::size_t>> probe_batches(std::size_t n, std::size_t bs) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t s = 0; s < n; s += bs) out.emplace_back(s, std::min(n, s + bs));
  if (out.size() > 1 && out.back().second - out.back().first < 2) {
    out[out.size() - 2].second = out.back().second;
    out.pop_back();
  }
  return out;
}

}  // namespace

// ---- training ------------------------------------------------------------------------------

Checkpoint initial_checkpoint(const TrainConfig& config, std::size_t in_dim) {
  config.validate(in_dim);
  return make_learner(config, in_dim)->checkpoint();
}

double initial_rho(const TrainConfig& config, const TrainData& data, std::vector<double>* deltas) {
  require_data(data);
  const std::size_t d = data.in_dim();
  config.validate(d);
  if (deltas) deltas->assign(is_dive_family(config.method) ? data.triplets.size() : 0, 0.0);
  const std::size_t n = data.triplets.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  if (is_dive_family(config.method)) {
    // Triplets arrive grouped by query; a batch holding one repeated query
    // has zero batch variance and a degenerate head, so probe a permutation.
    Rng probe_rng(config.seed ^ 0xD1B54A32D192ED03ull);
    probe_rng.shuffle(order);
    if (n < 2) throw BatchTooSmallError("at least 2 triplets are needed for batch statistics");
    DiveAdapter adapter(config.dive_config(d), config.seed);
    std::size_t active = 0;
    for (auto [s, e] : probe_batches(n, config.batch_size)) {
      const Batch b = gather_batch(data, {order.data() + s, e - s});
      const Matrix q = adapter.forward(b.q, BatchNorm::Mode::kBatchStats).heads.head(0);
      const Matrix p = adapter.forward(b.p, BatchNorm::Mode::kBatchStats).heads.head(0);
      const Matrix ng = adapter.forward(b.n, BatchNorm::Mode::kBatchStats).heads.head(0);
      for (std::size_t i = 0; i < q.rows(); ++i) {
        const double delta = dot(q.row(i), p.row(i)) - dot(q.row(i), ng.row(i));
        if (delta < config.margin) ++active;
        if (deltas) (*deltas)[order[s + i]] = delta;
      }
    }
    return double(active) / double(n);
  }
  if (config.method == Method::kMatryoshka) {
    ResidualAdapter adapter(d, config.residual_hidden(d), InitScheme::kZerosLast, config.seed);
    const Batch b = gather_batch(data, order);
    const auto res = matryoshka_nested_loss(adapter(b.q), adapter(b.p), adapter(b.n),
                                            config.resolved_nested_dims(d), config.margin);
    return double(res.active) / double(n);
  }
  // Smooth ranking objectives give every triplet a nonzero gradient.
  return 1.0;
}

TrainResult train(const TrainConfig& config, const TrainData& data) {
  require_data(data);
  const std::size_t d = data.in_dim();
  config.validate(d);

  auto learner = make_learner(config, d);
  TrainResult result;
  result.initial = learner->checkpoint();
  result.initial_rho = initial_rho(config, data, &result.initial_deltas);

  AdamWOptions adam;
  adam.lr = config.lr;
  adam.weight_decay = config.weight_decay;
  AdamW opt(learner->params(), adam);

  std::vector<std::pair<std::size_t, std::size_t>> stages;  // (dim, epochs)
  if (config.method == Method::kSmec) {
    const auto dims = config.resolved_stage_dims(d);
    const auto eps = config.resolved_stage_epochs();
    for (std::size_t i = 0; i < dims.size(); ++i) stages.emplace_back(dims[i], eps[i]);
  } else {
    stages.emplace_back(config.target_dim, config.epochs);
  }

  std::vector<std::size_t> order(data.triplets.size());
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(config.seed ^ 0x6A09E667F3BCC908ull);
  std::vector<float> previous = flatten_values(learner->const_params());
  double cumulative = 0.0;
  std::size_t epoch = 0, global_step = 0;

  for (auto [stage_dim, stage_epochs] : stages) {
    learner->begin_stage(stage_dim);
    for (std::size_t e = 0; e < stage_epochs; ++e) {
      ++epoch;
      if (config.reshuffle) shuffle_rng.shuffle(order);
      double sum_triplet = 0.0, sum_contrast = 0.0, sum_total = 0.0, max_grad = 0.0;
      std::size_t seen = 0, active = 0, step_in_epoch = 0;
      for (std::size_t s = 0; s < order.size(); s += config.batch_size) {
        const std::size_t end = std::min(order.size(), s + config.batch_size);
        if (end - s < 2) continue;
        ++step_in_epoch;
        ++global_step;
        const Batch batch = gather_batch(data, {order.data() + s, end - s});
        opt.zero_grad();
        StepStats st;
        try {
          st = learner->step(batch);
        } catch (const DegenerateRowError& err) {
          throw DegenerateRowError(err.row(), std::string(method_name(config.method)) + ": " +
                                                  err.what() + " at epoch " + std::to_string(epoch) +
                                                  ", step " + std::to_string(step_in_epoch));
        }
        const double gn = grad_norm(learner->const_params());
        if (!std::isfinite(st.total) || !std::isfinite(gn)) {
          throw NumericError(std::string(method_name(config.method)) +
                             ": non-finite loss or gradient at epoch " + std::to_string(epoch) +
                             ", step " + std::to_string(step_in_epoch) + " (global step " +
                             std::to_string(global_step) + ")");
        }
        opt.step();
        const double rows = double(end - s);
        sum_triplet += st.triplet * rows;
        sum_contrast += st.contrast * rows;
        sum_total += st.total * rows;
        seen += end - s;
        active += st.active;
        max_grad = std::max(max_grad, gn);
      }
      if (seen == 0) throw ContractError("every batch has fewer than 2 triplets");

      std::vector<float> current = flatten_values(learner->const_params());
      for (float v : current)
        if (!std::isfinite(v)) {
          throw NumericError(std::string(method_name(config.method)) +
                             ": non-finite parameters after epoch " + std::to_string(epoch));
        }
      EpochRecord rec;
      rec.epoch = epoch;
      rec.rho = double(active) / double(seen);
      rec.loss_triplet = sum_triplet / double(seen);
      rec.loss_contrast = sum_contrast / double(seen);
      rec.loss_total = sum_total / double(seen);
      rec.displacement = l2_distance(current, previous);
      cumulative += rec.displacement;
      rec.cum_displacement = cumulative;
      rec.max_grad_norm = max_grad;
      rec.stage_dim = stage_dim;
      result.log.records.push_back(rec);
      previous = std::move(current);
    }
  }
  result.checkpoint = learner->checkpoint();
  return result;
}

// ---- decay model ----------------------------------------------------------------------------

DecayFit fit_decay_model(const std::vector<double>& rho) {
  const std::size_t T = rho.size();
  if (T < 10) throw ContractError("decay fit needs at least 10 epochs, got " + std::to_string(T));
  DecayFit fit;
  const std::size_t tail = std::max<std::size_t>(1, (T + 4) / 5);
  for (std::size_t i = T - tail; i < T; ++i) fit.rho_star += rho[i];
  fit.rho_star /= double(tail);

  // Weighted least squares on log(excess) = log(rho0) - r t with weights
  // excess^2, which approximates an unweighted fit in the original scale.
  double sw = 0, st = 0, sy = 0, stt = 0, sty = 0;
  std::size_t points = 0;
  for (std::size_t i = 0; i < T; ++i) {
    const double excess = rho[i] - fit.rho_star;
    if (!(excess > 0.0)) continue;
    const double t = double(i + 1), y = std::log(excess), w = excess * excess;
    sw += w;
    st += w * t;
    sy += w * y;
    stt += w * t * t;
    sty += w * t * y;
    ++points;
  }
  const double denom = sw * stt - st * st;
  if (points >= 2 && denom > 0.0) {
    const double slope = (sw * sty - st * sy) / denom;
    const double intercept = (sy - slope * st) / sw;
    fit.decay_rate = -slope;
    fit.rho0 = std::exp(intercept);
  }
  if (points < 2 || !(fit.decay_rate > 0.0)) {
    fit.degenerate = true;
    if (points < 2) fit.rho0 = 0.0, fit.decay_rate = 0.0;
  }
  for (std::size_t i = 0; i < T; ++i) {
    const double model = fit.rho0 * std::exp(-fit.decay_rate * double(i + 1)) + fit.rho_star;
    fit.max_residual = std::max(fit.max_residual, std::abs(rho[i] - model));
  }
  return fit;
}

// ---- perturbation audit -------------------------------------------------------------------

std::string PerturbationAudit::to_csv() const {
  std::ostringstream s;
  s.precision(12);
  s << "epoch,gated_rho,gated_displacement,gated_cum,ungated_rho,ungated_displacement,ungated_cum\n";
  const std::size_t n = std::max(gated.records.size(), ungated.records.size());
  for (std::size_t i = 0; i < n; ++i) {
    s << i + 1;
    for (const DynamicsLog* log : {&gated, &ungated}) {
      if (i < log->records.size()) {
        const auto& r = log->records[i];
        s << ',' << r.rho << ',' << r.displacement << ',' << r.cum_displacement;
      } else {
        s << ",,,";
      }
    }
    s << '\n';
  }
  return s.str();
}

std::string PerturbationAudit::summary() const {
  std::ostringstream s;
  s.precision(10);
  s << "gated_total=" << gated_total << '\n'
    << "ungated_total=" << ungated_total << '\n'
    << "span=" << span_begin << '-' << span_end << '\n'
    << "gated_span=" << gated_span << '\n'
    << "ungated_span=" << ungated_span << '\n'
    << "gated_below_ungated=" << (gated_span < ungated_span ? "yes" : "no") << '\n'
    << "gate_invariant=" << (gate_invariant_holds ? "holds" : "violated") << '\n';
  return s.str();
}

PerturbationAudit perturbation_audit(const TrainConfig& gated, const TrainData& data,
                                     std::size_t span_begin, std::size_t span_end) {
  if (!is_dive_family(gated.method)) {
    throw ContractError("perturbation audit expects a DIVE-family gated config");
  }
  TrainConfig ungated = gated;
  ungated.method = Method::kMatryoshka;
  ungated.validate(data.in_dim());

  TrainResult gated_run, ungated_run;
  std::exception_ptr failure;
  std::thread worker([&] {
    try {
      ungated_run = train(ungated, data);
    } catch (...) {
      failure = std::current_exception();
    }
  });
  try {
    gated_run = train(gated, data);
  } catch (...) {
    worker.join();
    throw;
  }
  worker.join();
  if (failure) std::rethrow_exception(failure);

  PerturbationAudit audit;
  audit.gated = std::move(gated_run.log);
  audit.ungated = std::move(ungated_run.log);
  audit.span_begin = span_begin;
  audit.span_end = span_end;
  for (const auto& r : audit.gated.records) {
    audit.gated_total += r.displacement;
    if (r.epoch >= span_begin && r.epoch <= span_end) audit.gated_span += r.displacement;
  }
  for (const auto& r : audit.ungated.records) {
    audit.ungated_total += r.displacement;
    if (r.epoch >= span_begin && r.epoch <= span_end) audit.ungated_span += r.displacement;
  }

  const bool lambda_zero = gated.effective_lambda() == 0.0;
  bool clean_history = true;  // no nonzero gradient so far
  for (const auto& r : audit.gated.records) {
    if (lambda_zero && r.rho == 0.0) {
      bool ok = r.max_grad_norm == 0.0;
      if (clean_history && gated.weight_decay == 0.0) ok = ok && r.displacement == 0.0;
      if (!ok) {
        audit.gate_invariant_holds = false;
        audit.gate_violations.push_back(r.epoch);
      }
    }
    if (r.max_grad_norm != 0.0) clean_history = false;
  }
  return audit;
}

// ---- gradient signal probe ------------------------------------------------------------------

GradientSignal gradient_signal_probe(DiveAdapter& adapter, const Matrix& q, const Matrix& p,
                                     const Matrix& n, double lambda, double tau, double margin) {
  const auto mode = BatchNorm::Mode::kBatchStats;
  const auto fq = adapter.forward(q, mode);
  const auto fp = adapter.forward(p, mode);
  const auto fn = adapter.forward(n, mode);
  const TripletHeads heads{fq.heads, fp.heads, fn.heads};
  const auto res = dive_loss(heads, margin, lambda, tau);

  TripletGrads contrast;
  if (adapter.config().num_heads >= 2) {
    contrast = lambda != 0.0 ? res.contrast_grad : contrast_total(heads, tau).grad;
  } else {
    const std::size_t cols = fq.heads.matrix().cols();
    contrast = {Matrix(q.rows(), cols), Matrix(p.rows(), cols), Matrix(n.rows(), cols)};
  }

  auto run = [&](const TripletGrads& g) {
    adapter.zero_grad();
    adapter.backward(fq, g.q);
    adapter.backward(fp, g.p);
    adapter.backward(fn, g.n);
    std::vector<double> flat = flat_grads(std::as_const(adapter).params());
    adapter.zero_grad();
    return flat;
  };
  const auto gt = run(res.triplet_grad);
  const auto gc = run(contrast);
  const auto gtot = run(res.total_grad);

  GradientSignal s;
  double err = 0.0, a = 0.0, b = 0.0, c = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    a += gt[i] * gt[i];
    b += gc[i] * gc[i];
    c += gtot[i] * gtot[i];
    const double diff = gtot[i] - gt[i] - lambda * gc[i];
    err += diff * diff;
  }
  s.triplet_norm = std::sqrt(a);
  s.contrast_norm = std::sqrt(b);
  s.total_norm = std::sqrt(c);
  s.decomposition_error = std::sqrt(err);
  s.decomposition_ok = s.decomposition_error <= 1e-5 * s.total_norm;
  s.active_ratio = res.report.active_ratio;
  return s;
}

// ---- margin sweep ---------------------------------------------------------------------------

std::string MarginSweep::to_csv() const {
  std::ostringstream s;
  s.precision(12);
  s << "margin,initial_rho,final_rho,ndcg@10,recall@10,cum_displacement\n";
  for (const auto& r : reports) {
    s << r.margin << ',' << r.initial_rho << ',' << r.final_rho << ',' << r.ndcg << ','
      << r.recall << ',' << r.cum_displacement << '\n';
  }
  return s.str();
}

MarginSweep margin_sweep(const TrainConfig& config, const TrainData& data,
                         std::vector<double> margins, const EvalInputs& eval, std::size_t jobs) {
  if (margins.size() < 2) throw ContractError("margin sweep needs at least 2 margins");
  if (!eval.queries || !eval.corpus || !eval.qrels) throw ContractError("sweep needs eval data");
  std::sort(margins.begin(), margins.end());
  for (double m : margins) {
    TrainConfig c = config;
    c.margin = m;
    c.validate(data.in_dim());
  }

  MarginSweep sweep;
  sweep.reports.resize(margins.size());
  std::vector<std::exception_ptr> errors(margins.size());
  auto job = [&](std::size_t i) {
    try {
      TrainConfig c = config;
      c.margin = margins[i];
      const TrainResult tr = train(c, data);
      MarginReport& r = sweep.reports[i];
      r.margin = margins[i];
      r.initial_rho = tr.initial_rho;
      r.final_rho = tr.log.records.empty() ? tr.initial_rho : tr.log.records.back().rho;
      r.cum_displacement = tr.log.records.empty() ? 0.0 : tr.log.records.back().cum_displacement;
      const EvalReport er = evaluate_method(compressor_from_checkpoint(tr.checkpoint),
                                            *eval.queries, *eval.corpus, *eval.qrels);
      r.ndcg = er.ndcg;
      r.recall = er.recall;
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  jobs = std::max<std::size_t>(1, jobs);
  for (std::size_t start = 0; start < margins.size(); start += jobs) {
    std::vector<std::thread> pool;
    for (std::size_t i = start; i < std::min(margins.size(), start + jobs); ++i) pool.emplace_back(job, i);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  for (std::size_t i = 1; i < sweep.reports.size(); ++i)
    if (sweep.reports[i].initial_rho < sweep.reports[i - 1].initial_rho) sweep.rho0_monotone = false;
  return sweep;
}

}  // namespace dive
