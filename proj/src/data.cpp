#include "dive/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "dive/binary_io.hpp"
#include "dive/errors.hpp"
#include "dive/layers.hpp"
#include "dive/log.hpp"
#include "dive/rng.hpp"

namespace dive {

namespace {

constexpr char kEmbeddingMagic[4] = {'E', 'M', 'B', '1'};
constexpr std::uint32_t kEmbeddingVersion = 1;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

// ---- EmbeddingStore ---------------------------------------------------------------

EmbeddingStore::EmbeddingStore(std::vector<std::string> ids, Matrix matrix)
    : ids_(std::move(ids)), matrix_(std::move(matrix)) {
  if (ids_.size() != matrix_.rows()) {
    throw DimensionError("embedding store: " + std::to_string(ids_.size()) + " ids for " +
                         std::to_string(matrix_.rows()) + " rows");
  }
  index_.reserve(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!index_.emplace(ids_[i], i).second) {
      throw DuplicateIdError("duplicate embedding id '" + ids_[i] + "'");
    }
  }
  normalized_ = !ids_.empty();
  for (std::size_t i = 0; i < matrix_.rows() && normalized_; ++i)
    normalized_ = std::abs(norm(matrix_.row(i)) - 1.0) <= kUnitTolerance;
}

std::optional<std::size_t> EmbeddingStore::find(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t EmbeddingStore::index_of(const std::string& id) const {
  auto idx = find(id);
  if (!idx) throw DataError("unknown id '" + id + "'");
  return *idx;
}

void save_embeddings(const EmbeddingStore& store, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out.write(kEmbeddingMagic, 4);
  binary::write_u32(out, kEmbeddingVersion);
  binary::write_u64(out, store.size());
  binary::write_u64(out, store.dim());
  for (const auto& id : store.ids()) binary::write_string(out, id);
  for (float v : store.matrix().data()) binary::write_f32(out, v);
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

EmbeddingStore load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open embeddings '" + path.string() + "'");
  char magic[4];
  binary::read_exact(in, magic, 4, "embedding magic");
  if (!std::equal(magic, magic + 4, kEmbeddingMagic)) {
    throw BadMagicError("'" + path.string() + "' is not an embedding file (bad magic)");
  }
  const std::uint32_t version = binary::read_u32(in, "embedding version");
  if (version != kEmbeddingVersion) {
    throw DataError("unsupported embedding file version " + std::to_string(version));
  }
  const std::uint64_t n = binary::read_u64(in, "row count");
  const std::uint64_t d = binary::read_u64(in, "dimension");
  if (n > (std::uint64_t(1) << 32) || d > (std::uint64_t(1) << 20)) {
    throw DataError("implausible embedding header (N=" + std::to_string(n) +
                    ", d=" + std::to_string(d) + ")");
  }
  std::vector<std::string> ids;
  ids.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) ids.push_back(binary::read_string(in, "id table", 1u << 16));

  const std::size_t count = std::size_t(n * d);
  std::vector<unsigned char> raw(count * 4);
  in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
  if (std::size_t(in.gcount()) != raw.size()) {
    throw TruncatedError("embedding payload truncated: expected " + std::to_string(raw.size()) +
                         " bytes, found " + std::to_string(in.gcount()));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw DataError("trailing bytes after embedding payload in '" + path.string() + "'");
  }
  std::vector<float> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    const unsigned char* b = raw.data() + 4 * i;
    const std::uint32_t bits = std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
                               (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
    std::memcpy(&values[i], &bits, 4);
  }
  return EmbeddingStore(std::move(ids), Matrix(n, d, std::move(values)));
}

// ---- qrels -------------------------------------------------------------------------

Qrels parse_qrels(std::istream& in) {
  Qrels qrels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::istringstream ls(t);
    std::string qid, iter, docid, rel_text, extra;
    if (!(ls >> qid >> iter >> docid >> rel_text) || (ls >> extra)) {
      throw ParseError(line_no, "qrels line " + std::to_string(line_no) +
                                    ": expected 4 columns 'qid iter docid rel'");
    }
    int rel = 0;
    try {
      std::size_t used = 0;
      rel = std::stoi(rel_text, &used);
      if (used != rel_text.size()) throw std::invalid_argument(rel_text);
    } catch (const std::exception&) {
      throw ParseError(line_no, "qrels line " + std::to_string(line_no) +
                                    ": relevance '" + rel_text + "' is not an integer");
    }
    auto& judged = qrels[qid];
    auto it = std::find_if(judged.begin(), judged.end(),
                           [&](const Judgment& j) { return j.doc_id == docid; });
    if (it != judged.end()) {
      log::warn("qrels line " + std::to_string(line_no) + ": duplicate judgment (" + qid + ", " +
                docid + "), keeping the last one");
      judged.erase(it);
    }
    if (rel >= 1) judged.push_back({docid, rel});
    if (judged.empty()) qrels.erase(qid);
  }
  return qrels;
}

Qrels load_qrels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open qrels '" + path.string() + "'");
  return parse_qrels(in);
}

void save_qrels(const Qrels& qrels, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  for (const auto& [qid, judged] : qrels)
    for (const auto& j : judged) out << qid << " 0 " << j.doc_id << ' ' << j.relevance << '\n';
}

// ---- triplets ----------------------------------------------------------------------

std::vector<Triplet> sample_triplets(const Qrels& qrels, const EmbeddingStore& queries,
                                     const EmbeddingStore& corpus, const TripletOptions& options) {
  if (queries.dim() != corpus.dim() && queries.size() > 0 && corpus.size() > 0) {
    throw DimensionError("query dim " + std::to_string(queries.dim()) + " != corpus dim " +
                         std::to_string(corpus.dim()));
  }
  Rng rng(options.seed);
  std::vector<Triplet> out;
  for (const auto& [qid, judged] : qrels) {
    const auto q_row = queries.find(qid);
    if (!q_row) throw DataError("qrels query '" + qid + "' is missing from the query store");
    std::vector<std::size_t> positives;
    for (const auto& j : judged) positives.push_back(corpus.index_of(j.doc_id));
    std::sort(positives.begin(), positives.end());
    positives.erase(std::unique(positives.begin(), positives.end()), positives.end());
    if (positives.empty()) {
      log::warn("query '" + qid + "' has no positive judgments, skipped");
      continue;
    }
    if (corpus.size() <= positives.size()) {
      throw DataError("query '" + qid + "': every corpus document is relevant, no negative exists");
    }
    auto is_relevant = [&](std::size_t doc) {
      return std::binary_search(positives.begin(), positives.end(), doc);
    };

    std::vector<std::size_t> pool;  // explicit candidate list when needed
    if (options.hard_negative_pool > 0) {
      std::vector<std::pair<double, std::size_t>> scored;
      for (std::size_t d = 0; d < corpus.size(); ++d)
        if (!is_relevant(d)) scored.emplace_back(dot(queries.matrix().row(*q_row), corpus.matrix().row(d)), d);
      const std::size_t take = std::min(options.hard_negative_pool, scored.size());
      std::partial_sort(scored.begin(), scored.begin() + std::ptrdiff_t(take), scored.end(),
                        [](const auto& a, const auto& b) {
                          return a.first > b.first || (a.first == b.first && a.second < b.second);
                        });
      for (std::size_t i = 0; i < take; ++i) pool.push_back(scored[i].second);
    }

    for (std::size_t t = 0; t < options.per_query; ++t) {
      Triplet tr;
      tr.query = *q_row;
      tr.positive = positives[rng.index(positives.size())];
      if (!pool.empty()) {
        tr.negative = pool[rng.index(pool.size())];
      } else {
        bool found = false;
        for (int attempt = 0; attempt < 64 && !found; ++attempt) {
          tr.negative = rng.index(corpus.size());
          found = !is_relevant(tr.negative);
        }
        if (!found) {
          for (std::size_t d = 0; d < corpus.size(); ++d)
            if (!is_relevant(d)) pool.push_back(d);
          tr.negative = pool[rng.index(pool.size())];
        }
      }
      out.push_back(tr);
    }
  }
  return out;
}

// ---- synthetic -----------------------------------------------------------------------

void SyntheticSpec::validate() const {
  if (num_clusters < 1 || docs_per_cluster < 1 || queries_per_cluster < 1 || ambient_dim < 1) {
    throw ContractError("synthetic spec: all counts must be >= 1");
  }
  if (!(cluster_separation > 0.0) || cluster_separation > M_PI) {
    throw ContractError("synthetic spec: cluster_separation must be in (0, pi] radians");
  }
  if (!(noise_sigma >= 0.0)) throw ContractError("synthetic spec: noise_sigma must be >= 0");
  if (num_clusters > ambient_dim) {
    throw ContractError("synthetic spec: " + std::to_string(num_clusters) +
                        " equiangular clusters do not fit in dimension " +
                        std::to_string(ambient_dim));
  }
  if (num_clusters > 1) {
    const double limit = -1.0 / double(num_clusters - 1);
    if (!(std::cos(cluster_separation) > limit + 1e-12)) {
      throw ContractError("synthetic spec: separation " + std::to_string(cluster_separation) +
                          " rad is infeasible for " + std::to_string(num_clusters) +
                          " clusters (cosine must exceed " + std::to_string(limit) + ")");
    }
  }
}

SyntheticSpec SyntheticSpec::parse(std::istream& in) {
  SyntheticSpec s;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ParseError(line_no, "spec line " + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    try {
      if (key == "num_clusters") s.num_clusters = std::stoul(value);
      else if (key == "docs_per_cluster") s.docs_per_cluster = std::stoul(value);
      else if (key == "queries_per_cluster") s.queries_per_cluster = std::stoul(value);
      else if (key == "ambient_dim") s.ambient_dim = std::stoul(value);
      else if (key == "cluster_separation") s.cluster_separation = std::stod(value);
      else if (key == "noise_sigma") s.noise_sigma = std::stod(value);
      else if (key == "seed") s.seed = std::stoull(value);
      else throw ParseError(line_no, "spec line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception&) {
      throw ParseError(line_no, "spec line " + std::to_string(line_no) + ": bad value for " + key);
    }
  }
  return s;
}

SyntheticSpec SyntheticSpec::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open spec '" + path.string() + "'");
  return parse(in);
}

std::string SyntheticSpec::to_text() const {
  std::ostringstream out;
  out.precision(17);
  out << "num_clusters=" << num_clusters << '\n'
      << "docs_per_cluster=" << docs_per_cluster << '\n'
      << "queries_per_cluster=" << queries_per_cluster << '\n'
      << "ambient_dim=" << ambient_dim << '\n'
      << "cluster_separation=" << cluster_separation << '\n'
      << "noise_sigma=" << noise_sigma << '\n'
      << "seed=" << seed << '\n';
  return out.str();
}

SyntheticDataset gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t c = spec.num_clusters;
  const std::size_t d = spec.ambient_dim;
  const double s = std::cos(spec.cluster_separation);
  Rng rng(spec.seed);

  // Cholesky factor of the equiangular Gram matrix (1 on the diagonal, s off it).
  std::vector<double> chol(c * c, 0.0);
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double acc = (i == j) ? 1.0 : s;
      for (std::size_t r = 0; r < j; ++r) acc -= chol[i * c + r] * chol[j * c + r];
      if (i == j) {
        if (!(acc > 0.0)) throw ContractError("synthetic spec: equiangular Gram matrix is singular");
        chol[i * c + i] = std::sqrt(acc);
      } else {
        chol[i * c + j] = acc / chol[j * c + j];
      }
    }
  }

  // Random orthonormal frame of c directions in R^d (Gram-Schmidt, twice).
  std::vector<std::vector<double>> frame;
  while (frame.size() < c) {
    std::vector<double> v(d);
    for (double& x : v) x = rng.normal();
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& u : frame) {
        double proj = 0.0;
        for (std::size_t k = 0; k < d; ++k) proj += v[k] * u[k];
        for (std::size_t k = 0; k < d; ++k) v[k] -= proj * u[k];
      }
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    if (n < 1e-6) continue;
    for (double& x : v) x /= n;
    frame.push_back(std::move(v));
  }

  std::vector<std::vector<double>> centers(c, std::vector<double>(d, 0.0));
  SyntheticDataset out;
  out.centers = Matrix(c, d);
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t r = 0; r <= i; ++r)
      for (std::size_t k = 0; k < d; ++k) centers[i][k] += chol[i * c + r] * frame[r][k];
    double n = 0.0;
    for (double x : centers[i]) n += x * x;
    n = std::sqrt(n);
    for (std::size_t k = 0; k < d; ++k) {
      centers[i][k] /= n;
      out.centers(i, k) = float(centers[i][k]);
    }
  }

  auto sample_around = [&](std::size_t cluster) {
    std::vector<double> v = centers[cluster];
    if (spec.noise_sigma > 0.0)
      for (double& x : v) x += spec.noise_sigma * rng.normal();
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    std::vector<float> f(d);
    for (std::size_t k = 0; k < d; ++k) f[k] = float(v[k] / n);
    return f;
  };

  std::vector<std::string> doc_ids, query_ids;
  std::vector<float> doc_values, query_values;
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < spec.docs_per_cluster; ++j) {
      doc_ids.push_back("d" + std::to_string(i) + "_" + std::to_string(j));
      auto v = sample_around(i);
      doc_values.insert(doc_values.end(), v.begin(), v.end());
    }
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < spec.queries_per_cluster; ++j) {
      const std::string qid = "q" + std::to_string(i) + "_" + std::to_string(j);
      query_ids.push_back(qid);
      auto v = sample_around(i);
      query_values.insert(query_values.end(), v.begin(), v.end());
      auto& judged = out.qrels[qid];
      for (std::size_t k = 0; k < spec.docs_per_cluster; ++k)
        judged.push_back({"d" + std::to_string(i) + "_" + std::to_string(k), 1});
      if (spec.queries_per_cluster < 2) {
        out.train_qrels[qid] = judged;
        out.test_qrels[qid] = judged;
      } else {
        (j % 2 == 0 ? out.train_qrels : out.test_qrels)[qid] = judged;
      }
    }
  const std::size_t n_docs = doc_ids.size();
  const std::size_t n_queries = query_ids.size();
  out.corpus = EmbeddingStore(std::move(doc_ids), Matrix(n_docs, d, std::move(doc_values)));
  out.queries = EmbeddingStore(std::move(query_ids), Matrix(n_queries, d, std::move(query_values)));
  return out;
}

void save_dataset(const SyntheticDataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_embeddings(data.corpus, dir / "corpus.emb");
  save_embeddings(data.queries, dir / "queries.emb");
  save_qrels(data.qrels, dir / "qrels.txt");
  save_qrels(data.train_qrels, dir / "train_qrels.txt");
  save_qrels(data.test_qrels, dir / "test_qrels.txt");
}

}  // namespace dive
