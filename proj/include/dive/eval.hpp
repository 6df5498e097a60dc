#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dive/checkpoint.hpp"
#include "dive/data.hpp"
#include "dive/matrix.hpp"

namespace dive {

// ---- exact search -----------------------------------------------------------------

struct Hit {
  std::size_t doc = 0;  // corpus row
  double score = 0.0;
  bool operator==(const Hit&) const = default;
};

// Exact top-K by dot product for every query row. Order: score descending,
// then corpus row ascending. K > N is clipped to N with a warning.
// `threads` > 1 splits the queries into contiguous blocks; the output does
// not depend on it.
std::vector<std::vector<Hit>> brute_force_topk(const Matrix& queries, const Matrix& corpus,
                                               std::size_t k, std::size_t threads = 1);

struct RankedDoc {
  std::string doc_id;
  double score = 0.0;
};

// query id -> ranked documents, best first.
using RunRanking = std::map<std::string, std::vector<RankedDoc>>;

RunRanking make_ranking(const std::vector<std::string>& query_ids,
                        const std::vector<std::string>& doc_ids,
                        const std::vector<std::vector<Hit>>& hits);

// ---- metrics -------------------------------------------------------------------------

struct MetricResult {
  double mean = 0.0;
  std::size_t evaluated = 0;  // queries averaged over
  std::size_t excluded = 0;   // ranked queries without any relevant judgment
  std::size_t missing = 0;    // judged queries absent from the ranking (scored 0)
  std::map<std::string, double> per_query;
};

// DCG uses gain 2^rel - 1 and discount log2(rank + 1); IDCG comes from the
// ideal ordering of the query's own judgments.
MetricResult ndcg_at_k(const RunRanking& ranking, const Qrels& qrels, std::size_t k = 10);

// |retrieved@k ∩ relevant| / min(|relevant|, k); `capped = false` divides by
// |relevant| instead.
MetricResult recall_at_k(const RunRanking& ranking, const Qrels& qrels, std::size_t k = 10,
                         bool capped = true);

// ---- compressors --------------------------------------------------------------------

// Maps frozen embeddings (B x d) to unit-norm retrieval embeddings (B x dim).
struct Compressor {
  std::string method;
  std::size_t dim = 0;
  std::function<Matrix(const Matrix&)> encode;
};

// Full-dimensional frozen embeddings, row-normalised.
Compressor frozen_compressor(std::size_t in_dim);
// Builds the retrieval encoder stored in any model checkpoint. DIVE uses
// head 1 in eval mode; Matryoshka and Search-Adaptor truncate the residual
// output; SMEC uses its ADS selection. `dim` = 0 keeps the trained target
// dim. Otherwise residual and SMEC models accept any dim up to the input dim
// and PCA any dim up to its component count; DIVE and the autoencoder only
// their trained dim (DimensionError).
Compressor compressor_from_checkpoint(const Checkpoint& ckpt, std::size_t dim = 0);

// ---- reports -------------------------------------------------------------------------

struct EvalReport {
  std::string dataset;
  std::string method;
  std::size_t dim = 0;
  std::uint64_t seed = 0;
  double ndcg = 0.0;
  double recall = 0.0;
  std::size_t k = 10;
  std::size_t queries = 0;
  std::size_t excluded_queries = 0;
  std::size_t missing_queries = 0;
  double wall_seconds = 0.0;

  // Flat key=value block.
  std::string to_text() const;
  // dataset,method,dim,seed,ndcg@K,recall@K
  static std::string csv_header(std::size_t k = 10);
  std::string csv_row() const;
};

struct EvalOptions {
  std::string dataset = "synthetic";
  std::uint64_t seed = 0;
  std::size_t k = 10;
  std::size_t threads = 1;
};

// Compresses both sides, runs exact search over the judged queries and
// scores both metrics.
EvalReport evaluate_method(const Compressor& compressor, const EmbeddingStore& queries,
                           const EmbeddingStore& corpus, const Qrels& qrels,
                           const EvalOptions& options = {});

void write_eval_csv(const std::vector<EvalReport>& reports, const std::string& path);

}  // namespace dive
