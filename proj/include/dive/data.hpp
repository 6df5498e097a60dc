#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "dive/matrix.hpp"

namespace dive {

// Frozen embeddings keyed by string id (one row per id).
class EmbeddingStore {
 public:
  static constexpr double kUnitTolerance = 1e-5;

  EmbeddingStore() = default;
  // Throws DuplicateIdError on repeated ids. `normalized` is derived: true
  // iff every row has unit norm within kUnitTolerance.
  EmbeddingStore(std::vector<std::string> ids, Matrix matrix);

  std::size_t size() const { return ids_.size(); }
  std::size_t dim() const { return matrix_.cols(); }
  bool normalized() const { return normalized_; }

  const std::vector<std::string>& ids() const { return ids_; }
  const Matrix& matrix() const { return matrix_; }

  std::optional<std::size_t> find(const std::string& id) const;
  std::size_t index_of(const std::string& id) const;  // DataError when absent

  bool operator==(const EmbeddingStore& other) const {
    return ids_ == other.ids_ && matrix_ == other.matrix_;
  }

 private:
  std::vector<std::string> ids_;
  Matrix matrix_;
  bool normalized_ = false;
  std::unordered_map<std::string, std::size_t> index_;
};

// Binary layout (little-endian):
//   "EMB1" | version u32 | N u64 | d u64
//   | N id records: len u32 + bytes
//   | N*d f32, row-major
inline constexpr std::size_t kEmbeddingHeaderBytes = 4 + 4 + 8 + 8;
void save_embeddings(const EmbeddingStore& store, const std::filesystem::path& path);
EmbeddingStore load_embeddings(const std::filesystem::path& path);

struct Judgment {
  std::string doc_id;
  int relevance = 1;
  bool operator==(const Judgment&) const = default;
};

// query id -> judged documents with grade >= 1, in file order.
using Qrels = std::map<std::string, std::vector<Judgment>>;

// TREC "qid iter docid rel" lines. Grade-0 lines are dropped; a repeated
// (qid, docid) keeps the last grade and emits a warning. Blank lines and
// lines starting with '#' are skipped.
Qrels parse_qrels(std::istream& in);
Qrels load_qrels(const std::filesystem::path& path);
void save_qrels(const Qrels& qrels, const std::filesystem::path& path);

// ---- triplets ------------------------------------------------------------------

struct Triplet {
  std::size_t query = 0;     // row in the query store
  std::size_t positive = 0;  // row in the corpus
  std::size_t negative = 0;  // row in the corpus
  bool operator==(const Triplet&) const = default;
};

struct TripletOptions {
  std::size_t per_query = 4;
  std::uint64_t seed = 0;
  // 0 = uniform negatives. Otherwise negatives are drawn uniformly from the
  // `hard_negative_pool` non-relevant docs most similar to the query.
  std::size_t hard_negative_pool = 0;
};

// For each judged query (in id order), `per_query` triplets: the positive is
// uniform over the query's judged docs (grades ignored), the negative uniform
// over the corpus minus that set.
std::vector<Triplet> sample_triplets(const Qrels& qrels, const EmbeddingStore& queries,
                                     const EmbeddingStore& corpus, const TripletOptions& options);

// ---- synthetic datasets ----------------------------------------------------------

struct SyntheticSpec {
  std::size_t num_clusters = 8;
  std::size_t docs_per_cluster = 50;
  std::size_t queries_per_cluster = 5;
  std::size_t ambient_dim = 64;
  double cluster_separation = 1.0471975511965976;  // radians between any two centres
  double noise_sigma = 0.3;                         // per-coordinate Gaussian std
  std::uint64_t seed = 42;

  void validate() const;

  // Flat key=value text; keys are exactly the field names above.
  static SyntheticSpec parse(std::istream& in);
  static SyntheticSpec load(const std::filesystem::path& path);
  std::string to_text() const;
};

struct SyntheticDataset {
  EmbeddingStore corpus;
  EmbeddingStore queries;
  Qrels qrels;        // every query
  Qrels train_qrels;  // even-numbered queries of each cluster
  Qrels test_qrels;   // odd-numbered queries of each cluster
  Matrix centers;     // num_clusters x ambient_dim, unit rows
};

// Centres are equiangular unit vectors (pairwise angle = cluster_separation)
// in a random orientation; docs and queries are centre + N(0, sigma^2 I),
// then normalised. Each query is relevant (grade 1) to every doc of its
// cluster. With one query per cluster the train and test splits both hold
// every query. Throws ContractError when the separation cannot be realised.
SyntheticDataset gen_synthetic(const SyntheticSpec& spec);

// Writes corpus.emb, queries.emb, qrels.txt, train_qrels.txt, test_qrels.txt.
void save_dataset(const SyntheticDataset& data, const std::filesystem::path& dir);

}  // namespace dive
