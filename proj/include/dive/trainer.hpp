#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dive/adapters.hpp"
#include "dive/checkpoint.hpp"
#include "dive/data.hpp"
#include "dive/matrix.hpp"

namespace dive {

enum class Method {
  kDive,
  kDiveNoContrast,
  kDiveSingleHead,
  kMatryoshka,
  kSearchAdaptor,
  kSmec,
};

// Accepts the canonical names below plus "search" for search_adaptor.
Method parse_method(const std::string& name);
const char* method_name(Method method);  // dive, dive_no_contrast, ..., smec
bool is_dive_family(Method method);

struct TrainConfig {
  Method method = Method::kDive;
  std::size_t epochs = 50;
  double lr = 2e-4;
  double weight_decay = 0.01;
  std::size_t batch_size = 128;
  double margin = 0.7;
  double lambda_contrast = 0.1;
  double tau = 0.1;
  std::size_t heads = 4;
  std::size_t target_dim = 128;
  std::uint64_t seed = 0;
  bool reshuffle = true;

  // 0 = derived from the input dimension (d/2 and d/4 for DIVE, d/2 for
  // the residual baselines).
  std::size_t hidden1 = 0;
  std::size_t hidden2 = 0;

  // Matryoshka: empty = default_nested_dims(k, d).
  std::vector<std::size_t> nested_dims;
  // Search-Adaptor L1 recovery weight and SMEC similarity-preservation weight.
  double search_alpha = 0.1;
  double smec_alpha = 0.1;
  // SMEC stage schedule. Empty dims = [d, 4k, k] (clipped to d); empty
  // epochs = [E/5, E/5, E - 2E/5] for E = epochs.
  std::vector<std::size_t> smec_stage_dims;
  std::vector<std::size_t> smec_stage_epochs;
  std::size_t smec_memory_batches = 4;

  // Effective values after method-specific overrides: dive_single_head
  // forces H = 1 and lambda = 0, dive_no_contrast forces lambda = 0.
  std::size_t effective_heads() const;
  double effective_lambda() const;

  DiveConfig dive_config(std::size_t in_dim) const;
  std::size_t residual_hidden(std::size_t in_dim) const;
  std::vector<std::size_t> resolved_nested_dims(std::size_t in_dim) const;
  std::vector<std::size_t> resolved_stage_dims(std::size_t in_dim) const;
  std::vector<std::size_t> resolved_stage_epochs() const;
  // Total epochs actually run (the SMEC schedule may differ from `epochs`).
  std::size_t total_epochs() const;

  // Throws ContractError (k > in_dim, bad ranges) or UndefinedObjectiveError.
  void validate(std::size_t in_dim) const;
};

// Aligned query/corpus stores plus the triplets indexing into them.
struct TrainData {
  const EmbeddingStore* queries = nullptr;
  const EmbeddingStore* corpus = nullptr;
  std::vector<Triplet> triplets;

  std::size_t in_dim() const { return corpus ? corpus->dim() : 0; }
};

// ---- dynamics log -----------------------------------------------------------------

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double rho = 0.0;       // active triplets / triplets seen this epoch
  double loss_triplet = 0.0;
  double loss_contrast = 0.0;
  double loss_total = 0.0;
  double displacement = 0.0;      // ||theta_t - theta_{t-1}||_2
  double cum_displacement = 0.0;  // running sum of the above
  double max_grad_norm = 0.0;     // largest per-step gradient norm
  std::size_t stage_dim = 0;      // SMEC stage dim, else target dim
};

struct DynamicsLog {
  std::vector<EpochRecord> records;

  std::vector<double> rho_series() const;
  // Columns exactly: epoch,rho,loss_triplet,loss_contrast,loss_total,cum_displacement
  std::string to_csv() const;
  void save_csv(const std::string& path) const;
};

// ---- training -------------------------------------------------------------------------

struct TrainResult {
  Checkpoint initial;  // parameters before the first step
  Checkpoint checkpoint;
  DynamicsLog log;
  double initial_rho = 0.0;
  std::vector<double> initial_deltas;  // DIVE family: per-triplet Δ before training
};

// Runs the method-dispatched loop. Batches are taken from the (per-epoch
// reshuffled) triplet list; a trailing batch with fewer than 2 triplets is
// skipped. Throws NumericError naming the epoch and step on a non-finite
// loss or gradient, ContractError on empty triplets or bad config.
TrainResult train(const TrainConfig& config, const TrainData& data);

// Initial parameters for `config` without training.
Checkpoint initial_checkpoint(const TrainConfig& config, std::size_t in_dim);

// Active ratio of the untrained model over all triplets, in batches of a
// seed-fixed permutation with batch statistics and no running-stat updates.
// Writes per-triplet Δ (indexed like data.triplets) into `deltas` when given
// (DIVE family only).
double initial_rho(const TrainConfig& config, const TrainData& data,
                   std::vector<double>* deltas = nullptr);

// ---- decay model --------------------------------------------------------------------

struct DecayFit {
  double rho0 = 0.0;
  double decay_rate = 0.0;
  double rho_star = 0.0;
  double max_residual = 0.0;
  bool degenerate = false;
};

// rho(t) ~ rho0 * exp(-decay_rate * t) + rho_star for t = 1..T. rho_star is
// the mean of the final 20% of epochs; rho0 and decay_rate come from an
// excess-weighted log-linear regression of the positive excess. Fewer than
// two positive excess points or a non-positive rate mark the fit degenerate.
// Requires at least 10 epochs.
DecayFit fit_decay_model(const std::vector<double>& rho);

// ---- perturbation audit -------------------------------------------------------------

struct PerturbationAudit {
  DynamicsLog gated;    // DIVE-family run
  DynamicsLog ungated;  // Matryoshka-style run
  double gated_total = 0.0;
  double ungated_total = 0.0;
  std::size_t span_begin = 15;  // epochs span_begin..span_end, inclusive
  std::size_t span_end = 50;
  double gated_span = 0.0;
  double ungated_span = 0.0;
  // Epochs where the gated run had rho = 0 and lambda = 0: every step's
  // gradient was exactly zero, and with wd = 0 and no earlier nonzero
  // gradient the displacement is exactly zero too.
  bool gate_invariant_holds = true;
  std::vector<std::size_t> gate_violations;

  std::string to_csv() const;
  std::string summary() const;
};

// Trains `gated` (a DIVE-family config) and the same config switched to
// Matryoshka, then compares displacement over the epoch span.
PerturbationAudit perturbation_audit(const TrainConfig& gated, const TrainData& data,
                                     std::size_t span_begin = 15, std::size_t span_end = 50);

// ---- gradient signal probe ---------------------------------------------------------

struct GradientSignal {
  double triplet_norm = 0.0;
  double contrast_norm = 0.0;
  double total_norm = 0.0;
  double decomposition_error = 0.0;  // ||g_total - g_triplet - lambda g_contrast||
  bool decomposition_ok = false;     // error < 1e-5 ||g_total|| (or both zero)
  double active_ratio = 0.0;
};

// Three separate backward passes through `adapter` (batch statistics, no
// running-stat update) for the triplet, contrastive and composite losses.
// The adapter's gradients are left zeroed.
GradientSignal gradient_signal_probe(DiveAdapter& adapter, const Matrix& q, const Matrix& p,
                                     const Matrix& n, double lambda, double tau, double margin);

// ---- margin sweep ---------------------------------------------------------------------

struct MarginReport {
  double margin = 0.0;
  double initial_rho = 0.0;
  double final_rho = 0.0;
  double ndcg = 0.0;
  double recall = 0.0;
  double cum_displacement = 0.0;
};

struct MarginSweep {
  std::vector<MarginReport> reports;
  bool rho0_monotone = true;  // initial_rho non-decreasing in margin

  std::string to_csv() const;
};

struct EvalInputs {
  const EmbeddingStore* queries = nullptr;
  const EmbeddingStore* corpus = nullptr;
  const Qrels* qrels = nullptr;
};

// Trains one model per margin (sorted ascending, jobs in parallel up to
// `jobs`) and evaluates each on `eval`.
MarginSweep margin_sweep(const TrainConfig& config, const TrainData& data,
                         std::vector<double> margins, const EvalInputs& eval,
                         std::size_t jobs = 1);

inline const std::vector<double> kMarginGrid = {0.2, 0.5, 0.7, 1.0, 1.3};

}  // namespace dive
