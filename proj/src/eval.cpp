#include "dive/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <memory>
#include <numeric>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "dive/adapters.hpp"
#include "dive/baselines.hpp"
#include "dive/errors.hpp"
#include "dive/layers.hpp"
#include "dive/log.hpp"

namespace dive {

namespace {

bool hit_before(const Hit& a, const Hit& b) {
  return a.score > b.score || (a.score == b.score && a.doc < b.doc);
}

void topk_block(const Matrix& queries, const Matrix& corpus, std::size_t k, std::size_t begin,
                std::size_t end, std::vector<std::vector<Hit>>& out) {
  std::vector<Hit> all(corpus.rows());
  for (std::size_t q = begin; q < end; ++q) {
    for (std::size_t d = 0; d < corpus.rows(); ++d) all[d] = {d, dot(queries.row(q), corpus.row(d))};
    std::partial_sort(all.begin(), all.begin() + std::ptrdiff_t(k), all.end(), hit_before);
    out[q].assign(all.begin(), all.begin() + std::ptrdiff_t(k));
  }
}

std::string format_double(double v) {
  std::ostringstream s;
  s.precision(10);
  s << v;
  return s.str();
}

}  // namespace

// ---- search -------------------------------------------------------------------------

std::vector<std::vector<Hit>> brute_force_topk(const Matrix& queries, const Matrix& corpus,
                                               std::size_t k, std::size_t threads) {
  if (queries.rows() > 0 && queries.cols() != corpus.cols()) {
    throw DimensionError("brute_force_topk: queries " + queries.shape_string() + " vs corpus " +
                         corpus.shape_string());
  }
  if (k > corpus.rows()) {
    log::warn("top-K of " + std::to_string(k) + " exceeds corpus size " +
              std::to_string(corpus.rows()) + ", clipped");
    k = corpus.rows();
  }
  std::vector<std::vector<Hit>> out(queries.rows());
  threads = std::max<std::size_t>(1, std::min(threads, queries.rows()));
  if (threads == 1) {
    topk_block(queries, corpus, k, 0, queries.rows(), out);
    return out;
  }
  std::vector<std::thread> pool;
  const std::size_t per = (queries.rows() + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t begin = t * per, end = std::min(queries.rows(), begin + per);
    if (begin >= end) break;
    pool.emplace_back(topk_block, std::cref(queries), std::cref(corpus), k, begin, end, std::ref(out));
  }
  for (auto& th : pool) th.join();
  return out;
}

RunRanking make_ranking(const std::vector<std::string>& query_ids,
                        const std::vector<std::string>& doc_ids,
                        const std::vector<std::vector<Hit>>& hits) {
  if (query_ids.size() != hits.size()) throw DimensionError("make_ranking: query count mismatch");
  RunRanking ranking;
  for (std::size_t q = 0; q < hits.size(); ++q) {
    auto& list = ranking[query_ids[q]];
    for (const Hit& h : hits[q]) list.push_back({doc_ids.at(h.doc), h.score});
  }
  return ranking;
}

// ---- metrics ------------------------------------------------------------------------

namespace {

template <typename PerQuery>
MetricResult score_queries(const RunRanking& ranking, const Qrels& qrels, PerQuery per_query) {
  MetricResult r;
  double sum = 0.0;
  for (const auto& [qid, judged] : qrels) {
    if (judged.empty()) {
      ++r.excluded;
      continue;
    }
    std::unordered_map<std::string, int> grades;
    for (const auto& j : judged) grades[j.doc_id] = j.relevance;
    double value = 0.0;
    auto it = ranking.find(qid);
    if (it == ranking.end()) {
      log::warn("query '" + qid + "' has judgments but no ranking, scored as 0");
      ++r.missing;
    } else {
      value = per_query(it->second, judged, grades);
    }
    r.per_query[qid] = value;
    sum += value;
    ++r.evaluated;
  }
  for (const auto& [qid, list] : ranking) {
    auto it = qrels.find(qid);
    if (it == qrels.end()) ++r.excluded;
  }
  r.mean = r.evaluated ? sum / double(r.evaluated) : 0.0;
  return r;
}

}  // namespace

MetricResult ndcg_at_k(const RunRanking& ranking, const Qrels& qrels, std::size_t k) {
  return score_queries(ranking, qrels, [k](const std::vector<RankedDoc>& list,
                                           const std::vector<Judgment>& judged,
                                           const std::unordered_map<std::string, int>& grades) {
    double dcg = 0.0;
    for (std::size_t r = 0; r < std::min(k, list.size()); ++r) {
      auto g = grades.find(list[r].doc_id);
      if (g != grades.end()) dcg += (std::exp2(double(g->second)) - 1.0) / std::log2(double(r + 2));
    }
    std::vector<int> ideal;
    for (const auto& j : judged) ideal.push_back(j.relevance);
    std::sort(ideal.rbegin(), ideal.rend());
    double idcg = 0.0;
    for (std::size_t r = 0; r < std::min(k, ideal.size()); ++r)
      idcg += (std::exp2(double(ideal[r])) - 1.0) / std::log2(double(r + 2));
    return idcg > 0.0 ? dcg / idcg : 0.0;
  });
}

MetricResult recall_at_k(const RunRanking& ranking, const Qrels& qrels, std::size_t k,
                         bool capped) {
  return score_queries(ranking, qrels, [k, capped](const std::vector<RankedDoc>& list,
                                                   const std::vector<Judgment>& judged,
                                                   const std::unordered_map<std::string, int>& grades) {
    std::size_t found = 0;
    for (std::size_t r = 0; r < std::min(k, list.size()); ++r)
      if (grades.count(list[r].doc_id)) ++found;
    const std::size_t denom = capped ? std::min(judged.size(), k) : judged.size();
    return denom ? double(found) / double(denom) : 0.0;
  });
}

// ---- compressors ----------------------------------------------------------------------

Compressor frozen_compressor(std::size_t in_dim) {
  return {"frozen", in_dim, [in_dim](const Matrix& z) {
            if (z.cols() != in_dim) {
              throw DimensionError("frozen: input " + z.shape_string() + " vs dim " +
                                   std::to_string(in_dim));
            }
            return l2_normalize_rows(z);
          }};
}

namespace {

std::size_t checked_dim(std::size_t requested, std::size_t trained, std::size_t limit,
                        const char* what) {
  if (requested == 0) return trained;
  if (requested > limit) {
    throw DimensionError(std::string(what) + ": dim " + std::to_string(requested) +
                         " exceeds " + std::to_string(limit));
  }
  return requested;
}

void require_trained_dim(std::size_t requested, std::size_t trained, const char* what) {
  if (requested != 0 && requested != trained) {
    throw DimensionError(std::string(what) + ": dim " + std::to_string(requested) +
                         " differs from the trained dim " + std::to_string(trained));
  }
}

}  // namespace

Compressor compressor_from_checkpoint(const Checkpoint& ckpt, std::size_t dim) {
  switch (ckpt.kind) {
    case ModelKind::kDive: {
      auto adapter = std::make_shared<DiveAdapter>(DiveAdapter::from_checkpoint(ckpt));
      const std::size_t trained = adapter->config().target_dim;
      require_trained_dim(dim, trained, "dive");
      return {"dive", trained, [adapter](const Matrix& z) {
                // Eval-mode forward does not touch adapter state; copy so
                // concurrent callers never share caches.
                DiveAdapter local = *adapter;
                return local.forward_inference(z);
              }};
    }
    case ModelKind::kMatryoshka:
    case ModelKind::kSearchAdaptor: {
      auto adapter = std::make_shared<ResidualAdapter>(residual_from_checkpoint(ckpt));
      const std::size_t out = checked_dim(dim, std::size_t(ckpt.config.at(2)),
                                          std::size_t(ckpt.config.at(0)), model_kind_name(ckpt.kind));
      return {model_kind_name(ckpt.kind), out, [adapter, out](const Matrix& z) {
                return l2_normalize_rows(slice_cols((*adapter)(z), 0, out));
              }};
    }
    case ModelKind::kSmec: {
      auto adapter = std::make_shared<SmecAdapter>(SmecAdapter::from_checkpoint(ckpt));
      const std::size_t out = checked_dim(dim, std::size_t(ckpt.config.at(2)),
                                          std::size_t(ckpt.config.at(0)), "smec");
      return {"smec", out, [adapter, out](const Matrix& z) {
                return adapter->compress(z, out, false).output;
              }};
    }
    case ModelKind::kPca: {
      auto model = std::make_shared<PcaModel>(PcaModel::from_checkpoint(ckpt));
      const std::size_t out = checked_dim(dim, model->target_dim(), model->target_dim(), "pca");
      if (out < model->target_dim()) {
        std::vector<std::size_t> keep(out);
        std::iota(keep.begin(), keep.end(), 0);
        model->components = gather_rows(model->components, keep);
        model->eigenvalues.resize(out);
      }
      return {"pca", out, [model](const Matrix& z) { return pca_project(*model, z); }};
    }
    case ModelKind::kAutoencoder: {
      auto model = std::make_shared<Autoencoder>(Autoencoder::from_checkpoint(ckpt));
      require_trained_dim(dim, model->target_dim(), "autoencoder");
      return {"autoencoder", model->target_dim(),
              [model](const Matrix& z) { return model->encode(z); }};
    }
  }
  throw DataError("checkpoint holds an unknown model kind");
}

// ---- reports ----------------------------------------------------------------------------

std::string EvalReport::to_text() const {
  std::ostringstream s;
  s << "dataset=" << dataset << '\n'
    << "method=" << method << '\n'
    << "dim=" << dim << '\n'
    << "seed=" << seed << '\n'
    << "ndcg@" << k << '=' << format_double(ndcg) << '\n'
    << "recall@" << k << '=' << format_double(recall) << '\n'
    << "queries=" << queries << '\n'
    << "excluded_queries=" << excluded_queries << '\n'
    << "missing_queries=" << missing_queries << '\n'
    << "wall_seconds=" << format_double(wall_seconds) << '\n';
  return s.str();
}

std::string EvalReport::csv_header(std::size_t k) {
  return "dataset,method,dim,seed,ndcg@" + std::to_string(k) + ",recall@" + std::to_string(k);
}

std::string EvalReport::csv_row() const {
  return dataset + ',' + method + ',' + std::to_string(dim) + ',' + std::to_string(seed) + ',' +
         format_double(ndcg) + ',' + format_double(recall);
}

EvalReport evaluate_method(const Compressor& compressor, const EmbeddingStore& queries,
                           const EmbeddingStore& corpus, const Qrels& qrels,
                           const EvalOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  std::vector<std::size_t> rows;
  std::vector<std::string> ids;
  std::size_t unjudged = 0;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    auto it = qrels.find(queries.ids()[i]);
    if (it == qrels.end() || it->second.empty()) {
      ++unjudged;
      continue;
    }
    rows.push_back(i);
    ids.push_back(queries.ids()[i]);
  }
  for (const auto& [qid, judged] : qrels)
    for (const auto& j : judged)
      if (!corpus.find(j.doc_id)) {
        throw DataError("qrels reference unknown document '" + j.doc_id + "' (query '" + qid + "')");
      }

  const Matrix q = compressor.encode(gather_rows(queries.matrix(), rows));
  const Matrix c = compressor.encode(corpus.matrix());
  const auto hits = brute_force_topk(q, c, std::min(options.k, corpus.size()), options.threads);
  const RunRanking ranking = make_ranking(ids, corpus.ids(), hits);
  const MetricResult nd = ndcg_at_k(ranking, qrels, options.k);
  const MetricResult rc = recall_at_k(ranking, qrels, options.k);

  EvalReport report;
  report.dataset = options.dataset;
  report.method = compressor.method;
  report.dim = compressor.dim;
  report.seed = options.seed;
  report.k = options.k;
  report.ndcg = nd.mean;
  report.recall = rc.mean;
  report.queries = nd.evaluated;
  report.excluded_queries = nd.excluded + unjudged;
  report.missing_queries = nd.missing;
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

void write_eval_csv(const std::vector<EvalReport>& reports, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << EvalReport::csv_header(reports.empty() ? 10 : reports.front().k) << '\n';
  for (const auto& r : reports) out << r.csv_row() << '\n';
}

}  // namespace dive
