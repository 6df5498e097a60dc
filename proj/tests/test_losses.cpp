#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "dive/errors.hpp"
#include "dive/losses.hpp"
#include "gradient_suite.hpp"
#include "test_util.hpp"

using namespace dive;
using namespace dive::testing;

namespace {

void require_suite_op(const std::string& op) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed)
    for (std::size_t shape = 0; shape < kGradientShapes; ++shape)
      for (const GradientCase& c : check_gradient(op, seed, shape)) {
        INFO(op << " seed " << seed << " shape " << c.shape_text << " tensor " << c.tensor);
        CHECK(c.rel_error < kGradientTolerance);
      }
}

bool row_is_zero(const Matrix& m, std::size_t r) {
  for (float v : m.row(r))
    if (v != 0.0f) return false;
  return true;
}

// Straightforward O((BH)^2) evaluation of the head-wise NT-Xent loss.
double nt_xent_oracle(const HeadTensor& z, double tau) {
  const std::size_t b = z.batch(), h = z.heads(), k = z.dim();
  auto sim = [&](std::size_t i, std::size_t a, std::size_t j, std::size_t c) {
    double s = 0.0;
    for (std::size_t t = 0; t < k; ++t) s += double(z.at(i, a)[t]) * double(z.at(j, c)[t]);
    return s / tau;
  };
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t a = 0; a < h; ++a) {
      double num = 0.0, den = 0.0;
      for (std::size_t j = 0; j < b; ++j)
        for (std::size_t c = 0; c < h; ++c) {
          if (i == j && a == c) continue;
          const double e = std::exp(sim(i, a, j, c));
          den += e;
          if (j == i) num += e;
        }
      total += -std::log(num / den);
    }
  return total / double(b * h);
}

HeadTensor random_heads(Rng& rng, std::size_t b, std::size_t h, std::size_t k) {
  return HeadTensor(h, k, l2_normalize_forward(random_gaussian(rng, b, h * k), k));
}

HeadTensor permute_samples(const HeadTensor& z, const std::vector<std::size_t>& order) {
  return HeadTensor(z.heads(), z.dim(), gather_rows(z.matrix(), order));
}

HeadTensor permute_heads(const HeadTensor& z, const std::vector<std::size_t>& order) {
  Matrix m(z.batch(), z.heads() * z.dim());
  for (std::size_t i = 0; i < z.batch(); ++i)
    for (std::size_t h = 0; h < z.heads(); ++h)
      std::copy_n(z.at(i, order[h]).begin(), z.dim(), m.row(i).begin() + h * z.dim());
  return HeadTensor(z.heads(), z.dim(), m);
}

// Unit vector in R^k with cos(angle to e1) = c, lying in the (e1, e_axis) plane.
std::vector<float> with_cosine(std::size_t k, double c, std::size_t axis) {
  std::vector<float> v(k, 0.0f);
  v[0] = float(c);
  v[axis] = float(std::sqrt(1.0 - c * c));
  return v;
}

}  // namespace

TEST_SUITE("hinge triplet") {
  TEST_CASE("satisfied margin gives zero loss") {
    const Matrix q = Matrix::from_rows({{1, 0, 0}});
    const Matrix p = Matrix::from_rows({with_cosine(3, 0.9, 1)});
    const Matrix n = Matrix::from_rows({{0, 0, 1}});
    const HingeResult r = hinge_triplet(q, p, n, 0.7);
    CHECK(r.deltas[0] == doctest::Approx(0.9).epsilon(1e-6));
    CHECK(r.loss == 0.0);
    CHECK(r.active_ratio == 0.0);
  }

  TEST_CASE("active triplet: loss 0.2, rho 1") {
    const Matrix q = Matrix::from_rows({{1, 0, 0}});
    const Matrix p = Matrix::from_rows({with_cosine(3, 0.5, 1)});
    const Matrix n = Matrix::from_rows({{0, 0, 1}});
    const HingeResult r = hinge_triplet(q, p, n, 0.7);
    CHECK(r.loss == doctest::Approx(0.2).epsilon(1e-6));
    CHECK(r.active_ratio == 1.0);
  }

  TEST_CASE("mixed batch: loss 0.1, rho 0.5, satisfied row gets no gradient") {
    const Matrix q = Matrix::from_rows({{1, 0, 0}, {1, 0, 0}});
    const Matrix p = Matrix::from_rows({with_cosine(3, 0.9, 1), with_cosine(3, 0.5, 1)});
    const Matrix n = Matrix::from_rows({{0, 0, 1}, {0, 0, 1}});
    const HingeResult r = hinge_triplet(q, p, n, 0.7);
    CHECK(r.loss == doctest::Approx(0.1).epsilon(1e-6));
    CHECK(r.active_ratio == 0.5);
    CHECK(row_is_zero(r.grad.q, 0));
    CHECK(row_is_zero(r.grad.p, 0));
    CHECK(row_is_zero(r.grad.n, 0));
    CHECK_FALSE(row_is_zero(r.grad.q, 1));
  }

  TEST_CASE("non-unit rows are rejected") {
    const Matrix q = Matrix::from_rows({{1, 0}});
    const Matrix bad = Matrix::from_rows({{1.1f, 0}});
    CHECK_THROWS_AS(hinge_triplet(q, bad, q, 0.5), ContractError);
  }

  TEST_CASE("gate exactness on random batches, including delta == m") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      Rng rng(seed);
      const std::size_t b = 16, k = 8;
      const Matrix q = random_unit_rows(rng, b, k), p = random_unit_rows(rng, b, k),
                   n = random_unit_rows(rng, b, k);
      const HingeResult probe = hinge_triplet(q, p, n, 0.0);
      // Margin equal to one row's delta exactly: that row is inactive.
      const double margin = probe.deltas[seed % b];
      const HingeResult r = hinge_triplet(q, p, n, margin);
      std::size_t active = 0;
      for (std::size_t i = 0; i < b; ++i) {
        const bool satisfied = r.deltas[i] >= margin;
        active += satisfied ? 0 : 1;
        if (satisfied) {
          CHECK(row_is_zero(r.grad.q, i));
          CHECK(row_is_zero(r.grad.p, i));
          CHECK(row_is_zero(r.grad.n, i));
        }
      }
      CHECK(r.active == active);
      CHECK(r.active_ratio == double(active) / double(b));
      CHECK(row_is_zero(r.grad.q, seed % b));
    }
  }

  TEST_CASE("rho never decreases as the margin grows") {
    Rng rng(3);
    const Matrix q = random_unit_rows(rng, 32, 6), p = random_unit_rows(rng, 32, 6),
                 n = random_unit_rows(rng, 32, 6);
    double last = -1.0;
    for (double m = -2.0; m <= 2.0; m += 0.1) {
      const double rho = hinge_triplet(q, p, n, m).active_ratio;
      CHECK(rho >= last);
      last = rho;
    }
    CHECK(last == 1.0);
  }

  TEST_CASE("gradient suite") { require_suite_op("hinge"); }
}

TEST_SUITE("nt-xent") {
  TEST_CASE("single pair is exactly zero") {
    Rng rng(1);
    const HeadTensor z = random_heads(rng, 1, 2, 5);
    CHECK(nt_xent_headwise(z, 0.1).loss == 0.0);
  }

  TEST_CASE("two orthogonal collapsed samples, tau 1") {
    const HeadTensor z(2, 2, Matrix::from_rows({{1, 0, 1, 0}, {0, 1, 0, 1}}));
    const double expect = -std::log(std::exp(1.0) / (std::exp(1.0) + 2.0));
    CHECK(expect == doctest::Approx(0.5514).epsilon(1e-4));
    CHECK(nt_xent_headwise(z, 1.0).loss == doctest::Approx(expect).epsilon(1e-12));
    CHECK(nt_xent_oracle(z, 1.0) == doctest::Approx(expect).epsilon(1e-12));
  }

  TEST_CASE("matches the brute-force oracle") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      Rng rng(seed);
      const HeadTensor z = random_heads(rng, 4, 4, 8);
      for (double tau : {0.1, 0.5, 1.0})
        CHECK(std::abs(nt_xent_headwise(z, tau).loss - nt_xent_oracle(z, tau)) < 1e-5);
    }
  }

  TEST_CASE("invariant under sample and head permutations") {
    Rng rng(7);
    const HeadTensor z = random_heads(rng, 5, 3, 4);
    const double base = nt_xent_headwise(z, 0.1).loss;
    CHECK(std::abs(nt_xent_headwise(permute_samples(z, {3, 0, 4, 1, 2}), 0.1).loss - base) < 1e-6);
    CHECK(std::abs(nt_xent_headwise(permute_heads(z, {2, 0, 1}), 0.1).loss - base) < 1e-6);
  }

  TEST_CASE("collapsed heads cost more than decorrelated ones") {
    // Every head of every sample identical: positives and negatives tie.
    const HeadTensor collapsed(2, 2, Matrix::from_rows({{1, 0, 1, 0}, {1, 0, 1, 0}}));
    const HeadTensor separated(2, 2, Matrix::from_rows({{1, 0, 1, 0}, {0, 1, 0, 1}}));
    const double lc = nt_xent_headwise(collapsed, 1.0).loss;
    CHECK(lc == doctest::Approx(std::log(3.0)).epsilon(1e-12));
    CHECK(lc == doctest::Approx(nt_xent_oracle(collapsed, 1.0)).epsilon(1e-12));
    CHECK(nt_xent_headwise(separated, 1.0).loss < lc);
  }

  TEST_CASE("single head is undefined") {
    Rng rng(2);
    CHECK_THROWS_AS(nt_xent_headwise(random_heads(rng, 4, 1, 3), 0.1), UndefinedObjectiveError);
  }

  TEST_CASE("large logits stay finite") {
    Rng rng(4);
    const HeadTensor z = random_heads(rng, 6, 4, 3);
    const ContrastResult r = nt_xent_headwise(z, 1e-3);
    CHECK(std::isfinite(r.loss));
    CHECK(all_finite(r.grad));
  }

  TEST_CASE("gradient suite") { require_suite_op("nt_xent"); }
}

TEST_SUITE("pair count") {
  TEST_CASE("formula values") {
    CHECK(pair_count(128, 4) == 261632);
    CHECK(pair_count(7, 1) == 7 * 6);
    CHECK(pair_count(1, 2) == 2);
  }

  TEST_CASE("instrumented NT-Xent counts every ordered pair") {
    Rng rng(5);
    NtXentStats stats;
    nt_xent_headwise(random_heads(rng, 6, 3, 4), 0.1, &stats);
    CHECK(stats.nonzero_pairs == pair_count(6, 3));
  }
}

TEST_SUITE("contrast total") {
  TEST_CASE("identical tensors reduce to one NT-Xent") {
    Rng rng(1);
    const HeadTensor z = random_heads(rng, 4, 3, 5);
    CHECK(contrast_total({z, z, z}, 0.2).loss == doctest::Approx(nt_xent_headwise(z, 0.2).loss).epsilon(1e-12));
  }

  TEST_CASE("symmetric in p and n, and matches the oracle") {
    Rng rng(2);
    const HeadTensor q = random_heads(rng, 4, 4, 8), p = random_heads(rng, 4, 4, 8),
                     n = random_heads(rng, 4, 4, 8);
    const double a = contrast_total({q, p, n}, 0.1).loss;
    CHECK(a == contrast_total({q, n, p}, 0.1).loss);
    const double oracle = (nt_xent_oracle(q, 0.1) + nt_xent_oracle(p, 0.1) + nt_xent_oracle(n, 0.1)) / 3.0;
    CHECK(std::abs(a - oracle) < 1e-5);
  }
}

TEST_SUITE("dive loss") {
  TEST_CASE("lambda 0 equals the hinge on head 1") {
    Rng rng(1);
    const HeadTensor q = random_heads(rng, 6, 3, 4), p = random_heads(rng, 6, 3, 4),
                     n = random_heads(rng, 6, 3, 4);
    const DiveLossResult r = dive_loss({q, p, n}, 0.7, 0.0, 0.1);
    const HingeResult h = hinge_triplet(q.head(0), p.head(0), n.head(0), 0.7);
    CHECK(r.report.total == h.loss);
    CHECK(r.report.contrast == 0.0);
    CHECK(r.report.active_ratio == h.active_ratio);
    // Only head-1 columns carry triplet gradient.
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t c = 4; c < 12; ++c) CHECK(r.total_grad.q(i, c) == 0.0f);
  }

  TEST_CASE("all satisfied: zero loss and zero gradient with lambda 0") {
    Rng rng(2);
    const HeadTensor q = random_heads(rng, 5, 2, 4);
    const HeadTensor n = random_heads(rng, 5, 2, 4);
    const DiveLossResult r = dive_loss({q, q, n}, -2.5, 0.0, 0.1);
    CHECK(r.report.total == 0.0);
    CHECK(r.report.active_ratio == 0.0);
    for (const Matrix* g : {&r.total_grad.q, &r.total_grad.p, &r.total_grad.n})
      for (float v : g->data()) CHECK(v == 0.0f);
  }

  TEST_CASE("all satisfied with lambda 0.1: only the contrastive signal remains") {
    Rng rng(3);
    const HeadTensor q = random_heads(rng, 5, 4, 4), p = random_heads(rng, 5, 4, 4),
                     n = random_heads(rng, 5, 4, 4);
    const DiveLossResult r = dive_loss({q, p, n}, -2.5, 0.1, 0.1);
    CHECK(r.report.triplet == 0.0);
    CHECK(r.report.total == doctest::Approx(0.1 * r.report.contrast).epsilon(1e-12));
    CHECK(r.report.contrast > 0.0);
    CHECK(frobenius_norm(r.total_grad.q) > 0.0);
  }

  TEST_CASE("decomposition identity") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      Rng rng(seed);
      const HeadTensor q = random_heads(rng, 8, 4, 4), p = random_heads(rng, 8, 4, 4),
                       n = random_heads(rng, 8, 4, 4);
      const DiveLossResult r = dive_loss({q, p, n}, 0.7, 0.1, 0.1);
      CHECK(std::abs(r.report.total - (r.report.triplet + 0.1 * r.report.contrast)) < 1e-6);
      Matrix sum = r.triplet_grad.q;
      axpy(sum, r.contrast_grad.q, 0.1f);
      CHECK(max_abs_diff(sum, r.total_grad.q) < 1e-6);
    }
  }

  TEST_CASE("single head with a contrastive weight is rejected") {
    Rng rng(4);
    const HeadTensor z = random_heads(rng, 4, 1, 4);
    CHECK_THROWS_AS(dive_loss({z, z, z}, 0.7, 0.1, 0.1), UndefinedObjectiveError);
    CHECK_NOTHROW(dive_loss({z, z, z}, 0.7, 0.0, 0.1));
  }
}

TEST_SUITE("matryoshka nested loss") {
  TEST_CASE("satisfied full-dim triplet") {
    const Matrix a = Matrix::from_rows({{1, 0, 0, 0}});
    const Matrix n = Matrix::from_rows({{0, 1, 0, 0}});
    const NestedResult r = matryoshka_nested_loss(a, a, n, {4}, 0.5);
    CHECK(r.loss == 0.0);
    CHECK(r.active == 0);
  }

  TEST_CASE("equal per-dim terms add up") {
    // Rows of the form (x, y, x, y): the 2-prefix has the same cosines.
    const float s = float(1.0 / std::sqrt(2.0));
    const Matrix a = Matrix::from_rows({{s, 0, s, 0}});
    const Matrix p = Matrix::from_rows({{0.5f, 0.5f, 0.5f, 0.5f}});
    const Matrix n = Matrix::from_rows({{0, s, 0, s}});
    const double one = matryoshka_nested_loss(a, p, n, {4}, 1.0).loss;
    CHECK(one > 0.0);
    CHECK(matryoshka_nested_loss(a, p, n, {2, 4}, 1.0).loss == doctest::Approx(2.0 * one).epsilon(1e-6));
  }

  TEST_CASE("matches a per-dimension oracle") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      Rng rng(seed);
      const std::size_t b = 6;
      const Matrix a = random_unit_rows(rng, b, 4), p = random_unit_rows(rng, b, 4),
                   n = random_unit_rows(rng, b, 4);
      double expect = 0.0;
      for (std::size_t dim : {2, 4}) {
        double term = 0.0;
        for (std::size_t i = 0; i < b; ++i) {
          const double d_ap = 1.0 - prefix_cosine(a, i, p, i, dim);
          const double d_an = 1.0 - prefix_cosine(a, i, n, i, dim);
          term += std::max(0.0, d_ap - d_an + 0.3);
        }
        expect += term / double(b);
      }
      CHECK(std::abs(matryoshka_nested_loss(a, p, n, {2, 4}, 0.3).loss - expect) < 1e-6);
    }
  }

  TEST_CASE("dims above the embedding width are rejected") {
    Rng rng(2);
    const Matrix a = random_unit_rows(rng, 2, 4);
    CHECK_THROWS_AS(matryoshka_nested_loss(a, a, a, {2, 8}, 0.3), ContractError);
  }

  TEST_CASE("default dims double from k and end at d") {
    CHECK(default_nested_dims(16, 64) == std::vector<std::size_t>{16, 32, 64});
    CHECK(default_nested_dims(128, 4096) ==
          std::vector<std::size_t>{128, 256, 512, 1024, 2048, 4096});
    CHECK(default_nested_dims(64, 64) == std::vector<std::size_t>{64});
  }

  TEST_CASE("gradient suite") { require_suite_op("nested"); }
}

TEST_SUITE("search adaptor loss") {
  TEST_CASE("equal similarities give log 2") {
    const Matrix a = Matrix::from_rows({{1, 0}});
    const Matrix p = Matrix::from_rows({{0, 1}});
    const SearchResult r = search_adaptor_loss(a, p, p, a, p, p, 2, 0.0);
    CHECK(r.rank == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }

  TEST_CASE("identity adapter has zero recovery loss") {
    Rng rng(1);
    const Matrix a = random_gaussian(rng, 4, 6), p = random_gaussian(rng, 4, 6),
                 n = random_gaussian(rng, 4, 6);
    const SearchResult r = search_adaptor_loss(a, p, n, a, p, n, 3, 0.1);
    CHECK(r.rec == 0.0);
    CHECK(r.total == r.rank);
  }

  TEST_CASE("weighted sum with unit recovery loss") {
    Rng rng(2);
    const Matrix a = random_gaussian(rng, 3, 4), p = random_gaussian(rng, 3, 4),
                 n = random_gaussian(rng, 3, 4);
    Matrix oa = a, op = p, on = n;
    for (Matrix* m : {&oa, &op, &on})
      for (float& v : m->data()) v -= 1.0f;
    const SearchResult r = search_adaptor_loss(a, p, n, oa, op, on, 4, 0.1);
    CHECK(r.rec == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(r.total == doctest::Approx(r.rank + 0.1).epsilon(1e-6));
    double rank = 0.0;
    for (std::size_t i = 0; i < 3; ++i)
      rank += std::log1p(std::exp(prefix_cosine(a, i, n, i, 4) - prefix_cosine(a, i, p, i, 4)));
    CHECK(r.rank == doctest::Approx(rank / 3.0).epsilon(1e-6));
  }

  TEST_CASE("gradient suite") { require_suite_op("search"); }
}

TEST_SUITE("smec stage loss") {
  // Pairwise-cosine MSE of a batch against batch + memory rows.
  double sxbm_oracle(const Matrix& orig, const Matrix& comp, const SimilarityMemory* mem) {
    std::vector<std::pair<Matrix, std::size_t>> ref_o, ref_c;
    const Matrix uo = unit_rows(orig);
    for (std::size_t j = 0; j < comp.rows(); ++j) {
      ref_o.push_back({uo, j});
      ref_c.push_back({comp, j});
    }
    if (mem)
      for (const auto& e : mem->entries())
        for (std::size_t j = 0; j < e.original.rows(); ++j) {
          ref_o.push_back({e.original, j});
          ref_c.push_back({e.compressed, j});
        }
    double s = 0.0;
    for (std::size_t i = 0; i < comp.rows(); ++i)
      for (std::size_t j = 0; j < ref_o.size(); ++j) {
        const double d = naive_dot(comp, i, ref_c[j].first, ref_c[j].second) -
                         naive_dot(uo, i, ref_o[j].first, ref_o[j].second);
        s += d * d;
      }
    return s / double(comp.rows() * ref_o.size());
  }

  TEST_CASE("alpha 0 is the pure rank loss") {
    Rng rng(1);
    const Matrix a = random_unit_rows(rng, 4, 3), p = random_unit_rows(rng, 4, 3),
                 n = random_unit_rows(rng, 4, 3);
    const SmecResult r = smec_stage_loss(a, p, n, random_gaussian(rng, 4, 8), 0.0);
    double rank = 0.0;
    for (std::size_t i = 0; i < 4; ++i)
      rank += std::log1p(std::exp(naive_dot(a, i, n, i) - naive_dot(a, i, p, i)));
    CHECK(r.total == doctest::Approx(rank / 4.0).epsilon(1e-9));
    CHECK(r.unsup == 0.0);
  }

  TEST_CASE("identical cosine structure gives zero preservation loss") {
    Rng rng(2);
    const Matrix orig = random_gaussian(rng, 5, 6);
    CHECK(similarity_preservation_loss(orig, unit_rows(orig), nullptr, nullptr) < 1e-12);
  }

  TEST_CASE("matches the double-loop oracle, with and without memory") {
    Rng rng(3);
    SimilarityMemory mem(4);
    for (int step = 0; step < 6; ++step) {
      const Matrix orig = random_gaussian(rng, 5, 8);
      const Matrix comp = random_unit_rows(rng, 5, 3);
      CHECK(std::abs(similarity_preservation_loss(orig, comp, &mem, nullptr) -
                     sxbm_oracle(orig, comp, &mem)) < 1e-5);
      CHECK(std::abs(similarity_preservation_loss(orig, comp, nullptr, nullptr) -
                     sxbm_oracle(orig, comp, nullptr)) < 1e-5);
      mem.push(orig, comp);
      CHECK(mem.batches() == std::min<std::size_t>(step + 1, 4));
    }
    CHECK(mem.rows() == 20);
  }

  TEST_CASE("gradient suite") { require_suite_op("smec_stage"); }
}
