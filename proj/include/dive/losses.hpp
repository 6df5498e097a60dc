#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <vector>

#include "dive/adapters.hpp"
#include "dive/matrix.hpp"

namespace dive {

// Per-triplet-row gradients of a loss w.r.t. its three inputs.
struct TripletGrads {
  Matrix q;
  Matrix p;
  Matrix n;
};

// ---- self-limiting hinge triplet (head 1) -------------------------------------

struct HingeResult {
  double loss = 0.0;
  double active_ratio = 0.0;  // rho: fraction of rows with delta < margin
  std::size_t active = 0;
  std::vector<double> deltas;  // q.p - q.n per row
  TripletGrads grad;
};

// mean(max(0, m - delta_i)). Rows with delta_i >= m receive no gradient
// at all: their gradient rows are never written and stay exactly zero.
// Inputs must be unit-norm rows (1e-5).
HingeResult hinge_triplet(const Matrix& q, const Matrix& p, const Matrix& n, double margin);

// ---- head-wise NT-Xent ------------------------------------------------------------

struct NtXentStats {
  // Ordered pairs (a, b), a != b, whose similarity received a nonzero
  // gradient coefficient.
  std::uint64_t nonzero_pairs = 0;
};

struct ContrastResult {
  double loss = 0.0;
  Matrix grad;  // B x (H*k)
};

// Heads of the same sample are positives. For anchor (i,h):
//   num   = sum_{h' != h} exp(z_ih . z_ih' / tau)
//   denom = sum_{(j,h') != (i,h)} exp(z_ih . z_jh' / tau)
// loss = -mean log(num / denom), evaluated with log-sum-exp shifts.
ContrastResult nt_xent_headwise(const HeadTensor& z, double tau, NtXentStats* stats = nullptr);

std::uint64_t pair_count(std::uint64_t batch, std::uint64_t heads);

struct TripletHeads {
  HeadTensor q;
  HeadTensor p;
  HeadTensor n;
};

struct ContrastTotal {
  double loss = 0.0;
  TripletGrads grad;
};

// (L(q) + L(p) + L(n)) / 3.
ContrastTotal contrast_total(const TripletHeads& heads, double tau);

// ---- composite DIVE objective ---------------------------------------------------

struct LossReport {
  double total = 0.0;
  double triplet = 0.0;
  double contrast = 0.0;
  double active_ratio = 0.0;
  std::size_t active = 0;
  std::size_t batch = 0;
  double margin = 0.0;
  double lambda = 0.0;
  double tau = 0.0;
};

struct DiveLossResult {
  LossReport report;
  TripletGrads triplet_grad;   // B x (H*k), head 1 columns only
  TripletGrads contrast_grad;  // unweighted; zero when lambda == 0
  TripletGrads total_grad;     // triplet_grad + lambda * contrast_grad
};

// Triplet loss on head 1 plus lambda * contrast_total over all heads. With
// lambda == 0 the contrastive term is not evaluated (and may be undefined,
// e.g. H = 1). H = 1 with lambda != 0 is rejected.
DiveLossResult dive_loss(const TripletHeads& heads, double margin, double lambda, double tau);

// ---- Matryoshka-Adaptor nested ranking loss -----------------------------------

struct NestedResult {
  double loss = 0.0;
  std::size_t active = 0;  // triplets with a positive term at some dim
  TripletGrads grad;       // w.r.t. the full-dim inputs
};

// Sum over dims of mean ReLU(d_ap - d_an + margin) with cosine distances on
// re-normalised prefixes.
NestedResult matryoshka_nested_loss(const Matrix& a, const Matrix& p, const Matrix& n,
                                    const std::vector<std::size_t>& dims, double margin);

// k, 2k, 4k, ... capped at d, with d always last.
std::vector<std::size_t> default_nested_dims(std::size_t target_dim, std::size_t in_dim);

// ---- Search-Adaptor -----------------------------------------------------------

struct SearchResult {
  double total = 0.0;
  double rank = 0.0;
  double rec = 0.0;
  TripletGrads grad;  // w.r.t. the adapted (un-normalised) embeddings
};

// rank = mean log(1 + exp(s_neg - s_pos)) on normalised `dim`-prefixes;
// rec = mean of the three mean-L1 distances to the original embeddings.
SearchResult search_adaptor_loss(const Matrix& adapted_a, const Matrix& adapted_p,
                                 const Matrix& adapted_n, const Matrix& original_a,
                                 const Matrix& original_p, const Matrix& original_n,
                                 std::size_t dim, double alpha);

// ---- SMEC ----------------------------------------------------------------------

// Bounded cross-batch memory for the similarity-preservation term. Holds
// detached (original, compressed) rows of the most recent batches.
class SimilarityMemory {
 public:
  explicit SimilarityMemory(std::size_t capacity_batches = 4) : capacity_(capacity_batches) {}

  void push(const Matrix& original, const Matrix& compressed);
  void clear() { entries_.clear(); }

  std::size_t batches() const { return entries_.size(); }
  std::size_t rows() const;
  std::size_t capacity() const { return capacity_; }

  struct Entry {
    Matrix original;    // unit rows
    Matrix compressed;  // unit rows
  };
  const std::deque<Entry>& entries() const { return entries_; }

 private:
  std::size_t capacity_;
  std::deque<Entry> entries_;
};

struct SmecResult {
  double total = 0.0;
  double rank = 0.0;
  double unsup = 0.0;
  TripletGrads grad;  // w.r.t. compressed a/p/n
};

// Mean squared difference between pairwise cosine similarities of the
// originals and of the compressed rows, over (batch) x (batch + memory).
double similarity_preservation_loss(const Matrix& original, const Matrix& compressed,
                                    const SimilarityMemory* memory, Matrix* grad_compressed);

// rank_loss + alpha * similarity_preservation(original_a, compressed_a).
SmecResult smec_stage_loss(const Matrix& compressed_a, const Matrix& compressed_p,
                           const Matrix& compressed_n, const Matrix& original_a, double alpha,
                           const SimilarityMemory* memory = nullptr);

}  // namespace dive
