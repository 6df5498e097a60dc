#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "doctest.h"
#include "dive/adapters.hpp"
#include "dive/baselines.hpp"
#include "dive/errors.hpp"
#include "dive/eval.hpp"
#include "dive/log.hpp"
#include "test_util.hpp"

using namespace dive;
using namespace dive::testing;

namespace {

// Full sort of every score, ties broken by corpus row.
std::vector<Hit> full_sort_topk(const Matrix& q, std::size_t row, const Matrix& c, std::size_t k) {
  std::vector<Hit> all;
  for (std::size_t d = 0; d < c.rows(); ++d) all.push_back({d, naive_dot(q, row, c, d)});
  std::sort(all.begin(), all.end(), [](const Hit& a, const Hit& b) {
    return a.score != b.score ? a.score > b.score : a.doc < b.doc;
  });
  all.resize(std::min(k, all.size()));
  return all;
}

RunRanking ranking_of(const std::string& qid, const std::vector<std::string>& docs) {
  RunRanking r;
  double score = double(docs.size());
  for (const auto& d : docs) r[qid].push_back({d, score--});
  return r;
}

std::vector<std::string> doc_ids(std::size_t n, const std::string& prefix = "d") {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back(prefix + std::to_string(i));
  return ids;
}

struct Fixture {
  EmbeddingStore queries, corpus;
  Qrels qrels;
};

Fixture random_fixture(std::uint64_t seed) {
  Rng rng(seed);
  Fixture f{EmbeddingStore(doc_ids(12, "q"), random_unit_rows(rng, 12, 8)),
            EmbeddingStore(doc_ids(60), random_unit_rows(rng, 60, 8)), {}};
  for (std::size_t q = 0; q < 12; ++q) {
    const std::size_t n = 1 + rng.index(5);
    for (std::size_t j = 0; j < n; ++j)
      f.qrels["q" + std::to_string(q)].push_back({"d" + std::to_string(rng.index(60)), 1 + int(rng.index(2))});
    // Collapse repeats so every (query, doc) pair appears once.
    auto& v = f.qrels["q" + std::to_string(q)];
    std::sort(v.begin(), v.end(), [](const Judgment& a, const Judgment& b) { return a.doc_id < b.doc_id; });
    v.erase(std::unique(v.begin(), v.end(), [](const Judgment& a, const Judgment& b) { return a.doc_id == b.doc_id; }),
            v.end());
  }
  return f;
}

}  // namespace

TEST_SUITE("exact search") {
  TEST_CASE("top-K matches a full sort on random instances") {
    Rng rng(1);
    for (int instance = 0; instance < 100; ++instance) {
      const std::size_t n = 5 + rng.index(60), d = 2 + rng.index(10), k = 1 + rng.index(n);
      const Matrix q = random_gaussian(rng, 3, d);
      const Matrix c = random_gaussian(rng, n, d);
      const auto hits = brute_force_topk(q, c, k);
      REQUIRE(hits.size() == 3);
      for (std::size_t r = 0; r < 3; ++r) {
        const auto expect = full_sort_topk(q, r, c, k);
        REQUIRE(hits[r].size() == expect.size());
        for (std::size_t i = 0; i < k; ++i) {
          CHECK(hits[r][i].doc == expect[i].doc);
          CHECK(hits[r][i].score == doctest::Approx(expect[i].score).epsilon(1e-6));
        }
      }
    }
  }

  TEST_CASE("ties are broken by corpus row") {
    const Matrix c = Matrix::from_rows({{1, 0}, {0, 1}, {1, 0}, {1, 0}});
    const auto hits = brute_force_topk(Matrix::from_rows({{1, 0}}), c, 3);
    CHECK(hits[0] == std::vector<Hit>{{0, 1.0}, {2, 1.0}, {3, 1.0}});
  }

  TEST_CASE("K = N returns a permutation of the corpus") {
    Rng rng(2);
    const Matrix c = random_gaussian(rng, 17, 4);
    const auto hits = brute_force_topk(random_gaussian(rng, 2, 4), c, 17);
    for (const auto& row : hits) {
      std::vector<std::size_t> docs;
      for (const Hit& h : row) docs.push_back(h.doc);
      std::sort(docs.begin(), docs.end());
      std::vector<std::size_t> all(17);
      std::iota(all.begin(), all.end(), 0);
      CHECK(docs == all);
    }
  }

  TEST_CASE("K above N is clipped with a warning") {
    Rng rng(3);
    log::WarningCapture capture;
    const auto hits = brute_force_topk(random_gaussian(rng, 2, 4), random_gaussian(rng, 5, 4), 9);
    CHECK(hits[0].size() == 5);
    CHECK(capture.contains("exceeds"));
  }

  TEST_CASE("a unit query finds itself with score 1") {
    Rng rng(4);
    const Matrix c = random_unit_rows(rng, 30, 6);
    const auto hits = brute_force_topk(gather_rows(c, std::vector<std::size_t>{7}), c, 1);
    CHECK(hits[0][0].doc == 7);
    CHECK(hits[0][0].score == doctest::Approx(1.0).epsilon(1e-6));
  }

  TEST_CASE("thread count does not change the output") {
    Rng rng(5);
    const Matrix q = random_gaussian(rng, 37, 8), c = random_gaussian(rng, 200, 8);
    const auto one = brute_force_topk(q, c, 10, 1);
    for (std::size_t t : {std::size_t(2), std::size_t(3), std::size_t(8), std::size_t(64)}) CHECK(brute_force_topk(q, c, 10, t) == one);
  }

  TEST_CASE("dimension mismatch") {
    CHECK_THROWS_AS(brute_force_topk(Matrix(1, 3), Matrix(2, 4), 1), DimensionError);
  }
}

TEST_SUITE("metrics") {
  TEST_CASE("nDCG@10 examples") {
    const Qrels one = {{"q", {{"d1", 1}}}};
    CHECK(ndcg_at_k(ranking_of("q", {"d1", "d2"}), one).mean == doctest::Approx(1.0));
    CHECK(ndcg_at_k(ranking_of("q", {"d2", "d1"}), one).mean == doctest::Approx(1.0 / std::log2(3.0)));
    CHECK(ndcg_at_k(ranking_of("q", {"d2", "d1"}), one).mean == doctest::Approx(0.6309).epsilon(1e-4));
    CHECK(ndcg_at_k(ranking_of("q", {"d2", "d3"}), one).mean == 0.0);
  }

  TEST_CASE("graded nDCG against a hand computation") {
    const Qrels q = {{"q", {{"a", 2}, {"b", 1}}}};
    const double dcg = 1.0 + 3.0 / std::log2(3.0);
    const double idcg = 3.0 + 1.0 / std::log2(3.0);
    CHECK(ndcg_at_k(ranking_of("q", {"b", "a"}), q).mean == doctest::Approx(dcg / idcg));
  }

  TEST_CASE("nDCG beyond the cutoff counts nothing") {
    std::vector<std::string> docs = doc_ids(12, "x");
    docs.push_back("rel");
    CHECK(ndcg_at_k(ranking_of("q", docs), {{"q", {{"rel", 1}}}}).mean == 0.0);
  }

  TEST_CASE("recall@10 examples") {
    const Qrels two = {{"q", {{"a", 1}, {"b", 1}}}};
    CHECK(recall_at_k(ranking_of("q", {"a", "b"}), two).mean == 1.0);
    CHECK(recall_at_k(ranking_of("q", {"a", "x"}), two).mean == 0.5);
    Qrels many;
    for (const auto& id : doc_ids(20)) many["q"].push_back({id, 1});
    const RunRanking top = ranking_of("q", doc_ids(10));
    CHECK(recall_at_k(top, many).mean == 1.0);
    CHECK(recall_at_k(top, many, 10, false).mean == 0.5);
  }

  TEST_CASE("excluded and missing queries") {
    log::WarningCapture capture;
    RunRanking r = ranking_of("q1", {"a"});
    r["q_unjudged"] = {{"a", 1.0}};
    const Qrels qrels = {{"q1", {{"a", 1}}}, {"q_missing", {{"a", 1}}}, {"q_empty", {}}};
    const MetricResult m = ndcg_at_k(r, qrels);
    CHECK(m.evaluated == 2);
    CHECK(m.missing == 1);
    CHECK(m.excluded == 2);
    CHECK(m.mean == 0.5);
    CHECK(m.per_query.at("q_missing") == 0.0);
    CHECK(capture.contains("q_missing"));
  }

  TEST_CASE("metrics are invariant to document relabeling and query order") {
    const Fixture f = random_fixture(6);
    const EvalReport base = evaluate_method(frozen_compressor(8), f.queries, f.corpus, f.qrels);

    // Rename every document and reverse the corpus rows.
    std::vector<std::size_t> rev(f.corpus.size());
    std::iota(rev.rbegin(), rev.rend(), 0);
    std::vector<std::string> renamed;
    for (std::size_t i : rev) renamed.push_back("doc_" + f.corpus.ids()[i]);
    Qrels relabeled;
    for (const auto& [qid, judged] : f.qrels)
      for (const auto& j : judged) relabeled[qid].push_back({"doc_" + j.doc_id, j.relevance});
    const EmbeddingStore corpus2(renamed, gather_rows(f.corpus.matrix(), rev));

    std::vector<std::size_t> qperm = {3, 0, 11, 5, 1, 9, 2, 8, 4, 10, 6, 7};
    std::vector<std::string> qids;
    for (std::size_t i : qperm) qids.push_back(f.queries.ids()[i]);
    const EmbeddingStore queries2(qids, gather_rows(f.queries.matrix(), qperm));

    // Ties between reversed rows could reorder hits; random unit rows have none.
    const EvalReport moved = evaluate_method(frozen_compressor(8), queries2, corpus2, relabeled);
    CHECK(moved.ndcg == doctest::Approx(base.ndcg).epsilon(1e-12));
    CHECK(moved.recall == doctest::Approx(base.recall).epsilon(1e-12));
    CHECK(moved.queries == base.queries);
  }
}

TEST_SUITE("evaluation") {
  TEST_CASE("evaluate_method counts and thread independence") {
    Fixture f = random_fixture(7);
    f.qrels.erase("q3");
    EvalOptions one, many;
    many.threads = 4;
    const EvalReport a = evaluate_method(frozen_compressor(8), f.queries, f.corpus, f.qrels, one);
    const EvalReport b = evaluate_method(frozen_compressor(8), f.queries, f.corpus, f.qrels, many);
    CHECK(a.queries == 11);
    CHECK(a.excluded_queries == 1);
    CHECK(a.missing_queries == 0);
    CHECK(a.ndcg == b.ndcg);
    CHECK(a.recall == b.recall);
    CHECK(a.ndcg > 0.0);
    CHECK(a.ndcg <= 1.0);
  }

  TEST_CASE("unknown judged document is a data error") {
    Fixture f = random_fixture(8);
    f.qrels["q0"].push_back({"nowhere", 1});
    CHECK_THROWS_AS(evaluate_method(frozen_compressor(8), f.queries, f.corpus, f.qrels), DataError);
  }

  TEST_CASE("frozen compressor normalizes and checks width") {
    Rng rng(9);
    const Matrix x = random_gaussian(rng, 4, 5);
    const Compressor c = frozen_compressor(5);
    const Matrix y = c.encode(x);
    for (std::size_t r = 0; r < 4; ++r) {
      const double norm = std::sqrt(naive_dot(x, r, x, r));
      for (std::size_t k = 0; k < 5; ++k) CHECK(y(r, k) == doctest::Approx(x(r, k) / norm).epsilon(1e-6));
    }
    CHECK_THROWS_AS(c.encode(Matrix(1, 4, 1.0f)), DimensionError);
  }

  TEST_CASE("CSV header and rows") {
    CHECK(EvalReport::csv_header() == "dataset,method,dim,seed,ndcg@10,recall@10");
    EvalReport r;
    r.dataset = "syn";
    r.method = "pca";
    r.dim = 16;
    r.seed = 2;
    r.ndcg = 0.5;
    r.recall = 0.25;
    const auto dir = scratch_dir("eval_csv");
    write_eval_csv({r}, (dir / "out.csv").string());
    std::ifstream in(dir / "out.csv");
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    CHECK(header == EvalReport::csv_header());
    CHECK(row.rfind("syn,pca,16,2,", 0) == 0);
  }
}

TEST_SUITE("compressors from checkpoints") {
  TEST_CASE("DIVE keeps its trained dim only") {
    const DiveAdapter adapter(DiveConfig{12, 10, 8, 4, 2}, 18);
    const Checkpoint ckpt = adapter.to_checkpoint();
    const Compressor c = compressor_from_checkpoint(ckpt);
    CHECK(c.dim == 4);
    Rng rng(10);
    const Matrix x = random_gaussian(rng, 3, 12);
    DiveAdapter copy = adapter;
    CHECK(c.encode(x) == copy.forward_inference(x));
    CHECK_NOTHROW(compressor_from_checkpoint(ckpt, 4));
    CHECK_THROWS_AS(compressor_from_checkpoint(ckpt, 3), DimensionError);
    CHECK_THROWS_AS(compressor_from_checkpoint(ckpt, 5), DimensionError);
  }

  TEST_CASE("residual models truncate to any dim up to the input dim") {
    const ResidualAdapter adapter(10, 6, InitScheme::kXavier, 3);
    const Checkpoint ckpt = residual_to_checkpoint(adapter, ModelKind::kMatryoshka, 4);
    CHECK(compressor_from_checkpoint(ckpt).dim == 4);
    const Compressor c = compressor_from_checkpoint(ckpt, 7);
    CHECK(c.dim == 7);
    Rng rng(11);
    const Matrix x = random_gaussian(rng, 3, 10);
    const Matrix full = adapter(x);
    const Matrix y = c.encode(x);
    for (std::size_t r = 0; r < 3; ++r) {
      double norm = 0.0;
      for (std::size_t k = 0; k < 7; ++k) norm += double(full(r, k)) * full(r, k);
      norm = std::sqrt(norm);
      for (std::size_t k = 0; k < 7; ++k) CHECK(y(r, k) == doctest::Approx(full(r, k) / norm).epsilon(1e-5));
    }
    CHECK(compressor_from_checkpoint(ckpt, 10).dim == 10);
    CHECK_THROWS_AS(compressor_from_checkpoint(ckpt, 11), DimensionError);
    CHECK(compressor_from_checkpoint(residual_to_checkpoint(adapter, ModelKind::kSearchAdaptor, 4)).method ==
          "search_adaptor");
  }

  TEST_CASE("PCA accepts dims up to its component count") {
    Rng rng(12);
    const Matrix x = random_gaussian(rng, 40, 8);
    const PcaModel m = pca_fit(x, 5);
    const Checkpoint ckpt = m.to_checkpoint();
    const Compressor c3 = compressor_from_checkpoint(ckpt, 3);
    CHECK(c3.dim == 3);
    // The first three components of a k = 5 fit equal a k = 3 fit.
    const Matrix a = c3.encode(x), b = pca_project(pca_fit(x, 3), x);
    for (std::size_t r = 0; r < 40; ++r)
      for (std::size_t k = 0; k < 3; ++k) CHECK(a(r, k) == doctest::Approx(b(r, k)).epsilon(1e-4));
    CHECK_THROWS_AS(compressor_from_checkpoint(ckpt, 6), DimensionError);
  }

  TEST_CASE("autoencoder and SMEC dims") {
    const Autoencoder ae(8, 6, 3, 1);
    CHECK(compressor_from_checkpoint(ae.to_checkpoint()).dim == 3);
    CHECK_THROWS_AS(compressor_from_checkpoint(ae.to_checkpoint(), 2), DimensionError);
    const SmecAdapter smec(8, 6, 2);
    const Checkpoint ckpt = smec.to_checkpoint(4);
    CHECK(compressor_from_checkpoint(ckpt).dim == 4);
    CHECK(compressor_from_checkpoint(ckpt, 6).dim == 6);
    CHECK_THROWS_AS(compressor_from_checkpoint(ckpt, 9), DimensionError);
  }
}
