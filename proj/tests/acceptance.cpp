// Acceptance checks. `acceptance` runs every criterion; `acceptance 3 7`
// runs a subset. One PASS/FAIL line per criterion; exit status 1 if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "dive/adamw.hpp"
#include "dive/adapters.hpp"
#include "dive/baselines.hpp"
#include "dive/cli.hpp"
#include "dive/data.hpp"
#include "dive/eval.hpp"
#include "dive/log.hpp"
#include "dive/losses.hpp"
#include "dive/trainer.hpp"
#include "gradient_suite.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace dive;
using namespace dive::testing;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, value);
  return buf;
}

std::string f4(double v) { return fmt("%.4f", v); }

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// ---- shared fixtures ---------------------------------------------------------------

struct Fixture {
  SyntheticDataset data;
  TrainData train;
};

// Caller keeps the fixture alive; `train` points into `data`.
void build_fixture(Fixture& f, const SyntheticSpec& spec, std::size_t per_query) {
  f.data = gen_synthetic(spec);
  f.train = {&f.data.queries, &f.data.corpus,
             sample_triplets(f.data.train_qrels, f.data.queries, f.data.corpus, {per_query, 42, 0})};
}

SyntheticSpec clustered_spec(std::size_t docs, std::size_t queries, double sigma) {
  SyntheticSpec s;
  s.num_clusters = 8;
  s.docs_per_cluster = docs;
  s.queries_per_cluster = queries;
  s.ambient_dim = 64;
  s.noise_sigma = sigma;
  s.cluster_separation = M_PI / 2;
  s.seed = 42;
  return s;
}

// The dynamics fixture shared by criteria 3 and 4.
void dynamics_fixture(Fixture& f) { build_fixture(f, clustered_spec(50, 30, 0.05), 32); }

TrainConfig dynamics_config() {
  TrainConfig c;
  c.method = Method::kDive;
  c.target_dim = 16;
  c.heads = 4;
  c.margin = 0.7;
  c.lambda_contrast = 0.1;
  c.tau = 0.1;
  c.seed = 42;
  c.epochs = 50;
  c.batch_size = 128;
  c.lr = 2e-4;
  return c;
}

double test_ndcg(const Compressor& c, const Fixture& f) {
  return evaluate_method(c, f.data.queries, f.data.corpus, f.data.test_qrels).ndcg;
}

double trained_ndcg(const TrainConfig& c, const Fixture& f) {
  return test_ndcg(compressor_from_checkpoint(train(c, f.train).checkpoint), f);
}

// ---- 1. gradient checks ----------------------------------------------------------------

Outcome gradients() {
  const auto start = std::chrono::steady_clock::now();
  const auto cases = run_gradient_suite(5);
  const double elapsed = seconds_since(start);
  double worst = 0.0;
  std::string worst_case;
  std::size_t failed = 0;
  for (const auto& c : cases) {
    if (!c.ok()) ++failed;
    if (c.rel_error > worst) {
      worst = c.rel_error;
      worst_case = c.op + "/" + c.tensor;
    }
  }
  return {failed == 0 && elapsed < 120.0,
          std::to_string(cases.size()) + " comparisons over " + std::to_string(gradient_ops().size()) +
              " ops, " + std::to_string(failed) + " above 1e-3, worst " + fmt("%.2e", worst) + " (" + worst_case +
              "), " + fmt("%.1f", elapsed) + " s"};
}

// ---- 2. gate exactness ---------------------------------------------------------------------

bool all_zero_bits(const Matrix& m) {
  for (float v : m.data()) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    if (bits != 0) return false;
  }
  return true;
}

// Forwards three fresh batches in batch-stat mode, picks a margin every
// triplet already satisfies and backpropagates the lambda = 0 loss into
// the adapter's (zeroed) gradients.
void satisfied_triplet_backward(DiveAdapter& adapter, Rng& rng, std::size_t batch) {
  const std::size_t d = adapter.config().in_dim;
  const Matrix q = random_unit_rows(rng, batch, d), p = random_unit_rows(rng, batch, d),
               n = random_unit_rows(rng, batch, d);
  const auto fq = adapter.forward(q, BatchNorm::Mode::kBatchStats);
  const auto fp = adapter.forward(p, BatchNorm::Mode::kBatchStats);
  const auto fn = adapter.forward(n, BatchNorm::Mode::kBatchStats);
  const Matrix hq = fq.heads.head(0), hp = fp.heads.head(0), hn = fn.heads.head(0);
  double min_delta = INFINITY;
  for (std::size_t i = 0; i < batch; ++i)
    min_delta = std::min(min_delta, naive_dot(hq, i, hp, i) - naive_dot(hq, i, hn, i));
  const DiveLossResult loss = dive_loss({fq.heads, fp.heads, fn.heads}, min_delta - 1e-6, 0.0, 0.1);
  if (loss.report.active != 0) throw std::runtime_error("margin selection left an active triplet");
  adapter.zero_grad();
  adapter.backward(fq, loss.total_grad.q);
  adapter.backward(fp, loss.total_grad.p);
  adapter.backward(fn, loss.total_grad.n);
}

Outcome gate() {
  std::size_t batches = 0, nonzero_grads = 0, decay_mismatch = 0, moved_without_decay = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    for (double wd : {0.01, 0.0}) {
      Rng rng(seed);
      DiveAdapter adapter(DiveConfig{24, 48, 32, 6, 4}, seed);
      AdamWOptions opts;
      opts.lr = 1e-3;
      opts.weight_decay = wd;
      AdamW opt(adapter.params(), opts);
      for (int step = 0; step < 5; ++step) {
        satisfied_triplet_backward(adapter, rng, 16);
        ++batches;
        std::vector<Matrix> before;
        for (const ParamTensor* p : adapter.params()) {
          if (!all_zero_bits(p->grad)) ++nonzero_grads;
          before.push_back(p->value);
        }
        opt.step();
        const auto params = adapter.params();
        for (std::size_t t = 0; t < params.size(); ++t) {
          const auto& now = params[t]->value.data();
          const auto& old = before[t].data();
          const bool decays = params[t]->decay && wd != 0.0;
          for (std::size_t i = 0; i < now.size(); ++i) {
            const float expect = decays ? float(double(old[i]) * (1.0 - opts.lr * wd)) : old[i];
            if (std::memcmp(&now[i], &expect, sizeof(float)) != 0) {
              if (wd == 0.0) ++moved_without_decay;
              else ++decay_mismatch;
            }
          }
        }
      }
    }
  }

  // The full training loop with every constraint pre-satisfied, lambda = 0, wd = 0.
  SyntheticSpec spec = clustered_spec(10, 4, 0.1);
  Fixture f;
  build_fixture(f, spec, 8);
  TrainConfig c;
  c.method = Method::kDiveNoContrast;
  c.margin = -2.5;
  c.weight_decay = 0.0;
  c.epochs = 3;
  c.batch_size = 16;
  c.target_dim = 8;
  c.seed = 3;
  const TrainResult r = train(c, f.train);
  bool loop_unchanged = r.initial.tensors.size() == r.checkpoint.tensors.size();
  for (std::size_t i = 0; loop_unchanged && i < r.initial.tensors.size(); ++i) {
    if (r.initial.tensors[i].name.rfind("bn.running", 0) == 0) continue;  // state, not parameters
    const auto& a = r.initial.tensors[i].value.data();
    const auto& b = r.checkpoint.tensors[i].value.data();
    loop_unchanged = a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
  }

  return {nonzero_grads == 0 && decay_mismatch == 0 && moved_without_decay == 0 && loop_unchanged,
          std::to_string(batches) + " satisfied batches: " + std::to_string(nonzero_grads) +
              " tensors with nonzero gradient bits, " + std::to_string(decay_mismatch) +
              " values off pure decay, " + std::to_string(moved_without_decay) +
              " values moved at wd=0; training loop left parameters " +
              (loop_unchanged ? "bitwise unchanged" : "CHANGED")};
}

// ---- 3. dynamics -------------------------------------------------------------------------------

Outcome dynamics() {
  const auto start = std::chrono::steady_clock::now();
  Fixture f;
  dynamics_fixture(f);
  const TrainResult r = train(dynamics_config(), f.train);
  const auto rho = r.log.rho_series();
  const double rho15 = rho.at(14);
  const DecayFit fit = fit_decay_model(rho);
  std::size_t first_below = 0;
  for (std::size_t t = 0; t < rho.size() && !first_below; ++t)
    if (rho[t] < 0.10) first_below = t + 1;
  const double elapsed = seconds_since(start);
  return {rho15 < 0.10 && !fit.degenerate && fit.max_residual < 0.05 && elapsed < 300.0,
          "rho(15)=" + f4(rho15) + " (need < 0.10), first epoch below 0.10: " +
              (first_below ? std::to_string(first_below) : std::string("none")) + ", fit rho0=" + f4(fit.rho0) +
              " rate=" + f4(fit.decay_rate) + " rho*=" + f4(fit.rho_star) + " max residual=" + f4(fit.max_residual) +
              " (need < 0.05), " + fmt("%.0f", elapsed) + " s"};
}

// ---- 4. perturbation audit ---------------------------------------------------------------------

Outcome audit() {
  Fixture f;
  dynamics_fixture(f);
  const PerturbationAudit a = perturbation_audit(dynamics_config(), f.train, 15, 50);
  return {a.gated_span < a.ungated_span,
          "displacement over epochs 15-50: dive " + f4(a.gated_span) + ", matryoshka " + f4(a.ungated_span) +
              " (totals " + f4(a.gated_total) + " vs " + f4(a.ungated_total) + ")"};
}

// ---- 5. pair count -------------------------------------------------------------------------------

Outcome pairs() {
  const std::uint64_t formula = pair_count(128, 4);
  Rng rng(5);
  // Unit-norm chunks: B = 128 samples, H = 4 heads of k = 16.
  Matrix z = random_gaussian(rng, 128, 64);
  for (std::size_t i = 0; i < 128; ++i)
    for (std::size_t h = 0; h < 4; ++h) {
      double s = 0.0;
      for (std::size_t c = 0; c < 16; ++c) s += double(z(i, h * 16 + c)) * z(i, h * 16 + c);
      for (std::size_t c = 0; c < 16; ++c) z(i, h * 16 + c) = float(z(i, h * 16 + c) / std::sqrt(s));
    }
  NtXentStats stats;
  nt_xent_headwise(HeadTensor(4, 16, z), 0.1, &stats);
  return {formula == 261632 && stats.nonzero_pairs == 261632,
          "pair_count(128,4)=" + std::to_string(formula) + ", instrumented NT-Xent counted " +
              std::to_string(stats.nonzero_pairs)};
}

// ---- 6. ablation ordering ------------------------------------------------------------------------

Outcome ablation() {
  Fixture f;
  build_fixture(f, clustered_spec(20, 10, 0.1), 32);
  double dive = 0.0, no_contrast = 0.0, single_head = 0.0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    TrainConfig c;
    c.target_dim = 4;
    c.seed = seed;
    c.method = Method::kDive;
    dive += trained_ndcg(c, f) / 3.0;
    c.method = Method::kDiveNoContrast;
    no_contrast += trained_ndcg(c, f) / 3.0;
    c.method = Method::kDiveSingleHead;
    single_head += trained_ndcg(c, f) / 3.0;
  }
  const double pca = test_ndcg(compressor_from_checkpoint(pca_fit(f.data.corpus, 4).to_checkpoint()), f);
  return {dive >= no_contrast && dive >= single_head && dive >= pca,
          std::to_string(f.data.queries.size()) + " queries, k=4, mean nDCG@10 over seeds 0-2: dive " + f4(dive) +
              ", no-contrast " + f4(no_contrast) + ", single-head " + f4(single_head) + ", pca " + f4(pca)};
}

// ---- 7. frozen-baseline safety -------------------------------------------------------------------

Outcome safety() {
  bool pass = true;
  std::string cells;
  for (double sigma : {0.05, 0.1, 0.15}) {
    Fixture f;
    build_fixture(f, clustered_spec(50, 100, sigma), 8);
    const double frozen = test_ndcg(frozen_compressor(64), f);
    for (std::size_t k : {std::size_t(8), std::size_t(16)}) {
      double dive = 0.0;
      for (std::uint64_t seed = 0; seed < 3; ++seed) {
        TrainConfig c;
        c.target_dim = k;
        c.seed = seed;
        dive += trained_ndcg(c, f) / 3.0;
      }
      const bool ok = dive >= frozen - 0.01;
      pass = pass && ok;
      cells += std::string(cells.empty() ? "" : "; ") + "sigma=" + fmt("%.2f", sigma) + " k=" + std::to_string(k) +
               " dive " + f4(dive) + " frozen " + f4(frozen) + (ok ? "" : " (below)");
    }
  }
  return {pass, cells};
}

// ---- 8. metric correctness -----------------------------------------------------------------------

struct Fraction {
  long long num = 0, den = 1;
  double value() const { return double(num) / double(den); }
};

struct MetricCase {
  std::vector<std::string> ranking;  // best first
  std::vector<Judgment> judged;
};

// Exact per-rank integer gains for DCG and IDCG; the discount 1/log2(r+1)
// is applied only at the end.
double ndcg_oracle(const MetricCase& c, bool& rational, double& exact) {
  std::vector<long long> dcg(11, 0), idcg(11, 0);
  for (std::size_t r = 0; r < std::min<std::size_t>(10, c.ranking.size()); ++r)
    for (const auto& j : c.judged)
      if (j.doc_id == c.ranking[r]) dcg[r + 1] = (1LL << j.relevance) - 1;
  std::vector<int> grades;
  for (const auto& j : c.judged) grades.push_back(j.relevance);
  std::sort(grades.rbegin(), grades.rend());
  for (std::size_t r = 0; r < std::min<std::size_t>(10, grades.size()); ++r) idcg[r + 1] = (1LL << grades[r]) - 1;
  rational = false;
  if (std::all_of(dcg.begin(), dcg.end(), [](long long v) { return v == 0; })) {
    rational = true;
    exact = 0.0;
  } else if (dcg == idcg) {
    rational = true;
    exact = 1.0;
  }
  long double num = 0, den = 0;
  for (std::size_t r = 1; r <= 10; ++r) {
    num += (long double)dcg[r] / std::log2((long double)(r + 1));
    den += (long double)idcg[r] / std::log2((long double)(r + 1));
  }
  return double(num / den);
}

Fraction recall_oracle(const MetricCase& c) {
  long long hits = 0;
  for (std::size_t r = 0; r < std::min<std::size_t>(10, c.ranking.size()); ++r)
    for (const auto& j : c.judged)
      if (j.doc_id == c.ranking[r]) ++hits;
  return {hits, std::min<long long>(10, (long long)c.judged.size())};
}

std::vector<std::string> docs(std::initializer_list<int> ids) {
  std::vector<std::string> out;
  for (int i : ids) out.push_back("d" + std::to_string(i));
  return out;
}

std::vector<Judgment> judge(std::initializer_list<std::pair<int, int>> items) {
  std::vector<Judgment> out;
  for (auto [id, g] : items) out.push_back({"d" + std::to_string(id), g});
  return out;
}

Outcome metrics() {
  std::vector<std::string> eleven = docs({50, 51, 52, 53, 54, 55, 56, 57, 58, 59, 1});
  std::vector<Judgment> twelve, twenty;
  for (int i = 1; i <= 12; ++i) twelve.push_back({"d" + std::to_string(i), 1});
  for (int i = 1; i <= 20; ++i) twenty.push_back({"d" + std::to_string(i), 1});
  const std::vector<MetricCase> cases = {
      {docs({1, 2, 3}), judge({{1, 2}, {2, 1}})},
      {docs({2, 1, 3}), judge({{1, 2}, {2, 1}})},
      {docs({9, 1}), judge({{1, 1}})},
      {docs({7, 8, 9}), judge({{1, 1}})},
      {eleven, judge({{1, 1}, {50, 1}})},
      {docs({1, 2, 3, 4, 5, 6, 7, 8, 9, 10}), twelve},
      {docs({1, 60, 61, 2}), judge({{1, 1}, {2, 3}})},
      {docs({1, 70, 71, 72, 73}), judge({{1, 1}, {2, 2}, {3, 1}})},
      {docs({1, 80, 2, 81, 3, 82, 4, 83, 5, 84}), judge({{1, 1}, {2, 2}, {3, 1}, {4, 2}, {5, 1}})},
      {docs({90, 1, 91, 2, 92, 3, 93, 4, 94, 5}), twenty},
  };
  std::size_t failures = 0, exact_checks = 0;
  double worst = 0.0;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const std::string qid = "q" + std::to_string(i);
    RunRanking run;
    double score = 100.0;
    for (const auto& d : cases[i].ranking) run[qid].push_back({d, score--});
    const Qrels qrels = {{qid, cases[i].judged}};
    const double nd = ndcg_at_k(run, qrels).mean;
    const double rc = recall_at_k(run, qrels).mean;
    bool rational = false;
    double exact = 0.0;
    const double oracle = ndcg_oracle(cases[i], rational, exact);
    if (rational) {
      ++exact_checks;
      if (nd != exact) ++failures;
    } else {
      const double err = std::abs(nd - oracle);
      worst = std::max(worst, err);
      if (err > 4 * std::numeric_limits<double>::epsilon()) ++failures;
    }
    ++exact_checks;
    if (rc != recall_oracle(cases[i]).value()) ++failures;
  }

  Rng rng(8);
  std::size_t topk_mismatch = 0;
  for (int instance = 0; instance < 100; ++instance) {
    const std::size_t n = 5 + rng.index(80), d = 2 + rng.index(16), k = 1 + rng.index(n);
    const Matrix q = random_gaussian(rng, 4, d), c = random_gaussian(rng, n, d);
    const auto hits = brute_force_topk(q, c, k);
    for (std::size_t r = 0; r < 4; ++r) {
      std::vector<Hit> all;
      for (std::size_t j = 0; j < n; ++j) all.push_back({j, naive_dot(q, r, c, j)});
      std::sort(all.begin(), all.end(),
                [](const Hit& a, const Hit& b) { return a.score != b.score ? a.score > b.score : a.doc < b.doc; });
      all.resize(k);
      if (hits[r] != all) ++topk_mismatch;
    }
  }
  return {failures == 0 && topk_mismatch == 0,
          std::to_string(cases.size()) + " constructed rankings: " + std::to_string(failures) + " mismatches (" +
              std::to_string(exact_checks) + " rational values compared exactly, irrational nDCG within " +
              fmt("%.1e", worst) + "); top-K vs full sort: " + std::to_string(topk_mismatch) +
              " mismatching rows of 400"};
}

// ---- 9. PCA optimality ---------------------------------------------------------------------------

Outcome pca_optimality() {
  Rng rng(9);
  std::size_t beaten = 0, bad_residuals = 0, instances = 0, unrealised = 0;
  double worst_residual = 0.0, worst_realised = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    const std::size_t d = 2 + rng.index(7), n = d + 5 + rng.index(40), k = 1 + rng.index(d - 1);
    Matrix x = random_gaussian(rng, n, d);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < d; ++c) x(r, c) *= float(1.0 + double(c));
    ++instances;
    // Covariance in double.
    std::vector<double> mean(d, 0.0), cov(d * d, 0.0);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < d; ++c) mean[c] += x(r, c) / double(n);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) cov[i * d + j] += (x(r, i) - mean[i]) * (x(r, j) - mean[j]) / double(n - 1);
    auto captured = [&](const std::vector<std::vector<double>>& basis) {
      double total = 0.0;
      for (const auto& b : basis)
        for (std::size_t i = 0; i < d; ++i)
          for (std::size_t j = 0; j < d; ++j) total += b[i] * cov[i * d + j] * b[j];
      return total;
    };
    const PcaModel m = pca_fit(x, k);
    std::vector<std::vector<double>> pcs(k, std::vector<double>(d));
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t c = 0; c < d; ++c) pcs[i][c] = m.components(i, c);
    // The fitted optimum is the top-k eigenvalue sum; the float32 components
    // must realise it to within their storage precision.
    const double optimum = std::accumulate(m.eigenvalues.begin(), m.eigenvalues.end(), 0.0);
    const double realised = captured(pcs);
    worst_realised = std::max(worst_realised, std::abs(realised - optimum) / optimum);
    if (!(std::abs(realised - optimum) <= 1e-6 * optimum)) ++unrealised;
    for (int trial = 0; trial < 1000; ++trial) {
      std::vector<std::vector<double>> basis;
      while (basis.size() < k) {
        std::vector<double> v(d);
        for (double& e : v) e = rng.normal();
        for (const auto& b : basis) {
          const double p = std::inner_product(v.begin(), v.end(), b.begin(), 0.0);
          for (std::size_t i = 0; i < d; ++i) v[i] -= p * b[i];
        }
        const double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
        if (norm < 1e-6) continue;
        for (double& e : v) e /= norm;
        basis.push_back(v);
      }
      if (captured(basis) > optimum) ++beaten;
    }
    const EigenResult e = jacobi_eigen(cov, d);
    for (std::size_t i = 0; i < d; ++i) {
      double r2 = 0.0;
      for (std::size_t r = 0; r < d; ++r) {
        double av = 0.0;
        for (std::size_t c = 0; c < d; ++c) av += cov[r * d + c] * e.vectors[i][c];
        r2 += (av - e.values[i] * e.vectors[i][r]) * (av - e.values[i] * e.vectors[i][r]);
      }
      worst_residual = std::max(worst_residual, std::sqrt(r2));
      if (!(std::sqrt(r2) < 1e-5)) ++bad_residuals;
    }
  }
  return {beaten == 0 && bad_residuals == 0 && unrealised == 0,
          std::to_string(instances) + " instances (d<=8) x 1000 random projections: " + std::to_string(beaten) +
              " beat PCA; components realise the eigenvalue sum within " + fmt("%.1e", worst_realised) +
              " relative; worst eigenpair residual " + fmt("%.1e", worst_residual)};
}

// ---- 10. determinism -----------------------------------------------------------------------------

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism() {
  const fs::path dir = scratch_dir("acceptance_determinism");
  const std::string data = (dir / "data").string();
  if (cli::run({"gen-synthetic", "--clusters", "8", "--docs-per-cluster", "20", "--queries-per-cluster", "10",
                "--dim", "64", "--noise", "0.1", "--seed", "42", "--out", data}) != cli::kExitOk)
    return {false, "gen-synthetic failed"};
  bool ok = true;
  std::string detail;
  for (const char* method : {"dive", "matryoshka", "smec"}) {
    std::vector<std::string> runs;
    for (int rep = 0; rep < 2; ++rep) {
      const std::string out = (dir / (std::string(method) + std::to_string(rep))).string();
      runs.push_back(out);
      if (cli::run({"train", "--data", data, "--method", method, "--k", "16", "--epochs", "5", "--seed", "7",
                    "--out", out}) != cli::kExitOk)
        return {false, std::string("train failed for ") + method};
    }
    const bool same_ckpt = file_bytes(fs::path(runs[0]) / "model.ckpt") == file_bytes(fs::path(runs[1]) / "model.ckpt");
    const bool same_log =
        file_bytes(fs::path(runs[0]) / "dynamics.csv") == file_bytes(fs::path(runs[1]) / "dynamics.csv");
    ok = ok && same_ckpt && same_log;
    detail += std::string(detail.empty() ? "" : ", ") + method + ": checkpoint " +
              (same_ckpt ? "identical" : "DIFFERS") + ", log " + (same_log ? "identical" : "DIFFERS");
  }
  return {ok, detail};
}

struct Criterion {
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {"gradient checks", gradients},
      {"gate exactness", gate},
      {"active-ratio dynamics", dynamics},
      {"perturbation audit", audit},
      {"pair count", pairs},
      {"ablation ordering", ablation},
      {"frozen-baseline safety", safety},
      {"metric correctness", metrics},
      {"PCA optimality", pca_optimality},
      {"determinism", determinism},
  };
  std::vector<std::size_t> selected;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "all") continue;
    const int n = std::atoi(argv[i]);
    if (n < 1 || n > int(criteria.size())) {
      std::fprintf(stderr, "usage: acceptance [all | 1..%zu ...]\n", criteria.size());
      return 2;
    }
    selected.push_back(std::size_t(n));
  }
  if (selected.empty())
    for (std::size_t i = 1; i <= criteria.size(); ++i) selected.push_back(i);

  bool all_pass = true;
  for (std::size_t n : selected) {
    const Criterion& c = criteria[n - 1];
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all_pass = all_pass && o.pass;
    std::printf("criterion %zu [%s]: %s: %s\n", n, c.name, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  return all_pass ? 0 : 1;
}
