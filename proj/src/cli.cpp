#include "dive/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "dive/baselines.hpp"
#include "dive/checkpoint.hpp"
#include "dive/data.hpp"
#include "dive/errors.hpp"
#include "dive/log.hpp"
#include "dive/trainer.hpp"

namespace dive::cli {

namespace fs = std::filesystem;

namespace {

using Manifest = std::vector<std::pair<std::string, std::string>>;

std::string fmt(double v, int precision = 10) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

std::string fixed4(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(4) << v;
  return s.str();
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> parse_doubles(const std::string& s, const char* what) {
  std::vector<double> out;
  for (const auto& item : split_list(s)) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || !std::isfinite(v)) {
      throw ContractError(std::string(what) + ": '" + item + "' is not a number");
    }
    out.push_back(v);
  }
  return out;
}

// DIVE_KIT_THREADS caps every internal fan-out; unset or invalid = no cap.
std::size_t thread_cap() {
  const char* env = std::getenv("DIVE_KIT_THREADS");
  if (!env || !*env) return std::numeric_limits<std::size_t>::max();
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1) {
    log::warn(std::string("ignoring DIVE_KIT_THREADS='") + env + "'");
    return std::numeric_limits<std::size_t>::max();
  }
  return std::size_t(v);
}

std::size_t effective_jobs(std::size_t jobs) {
  return std::max<std::size_t>(1, std::min(jobs, thread_cap()));
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

void prepare_out(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw DataError("cannot create output directory '" + dir.string() + "'");
  }
}

std::map<std::string, std::string> read_key_values(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::map<std::string, std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

std::string lookup(const std::map<std::string, std::string>& kv, const std::string& key,
                   const std::string& fallback = "") {
  auto it = kv.find(key);
  return it == kv.end() ? fallback : it->second;
}

// ---- manifest ---------------------------------------------------------------------

Manifest manifest_for(const CLI::App* sub) {
  Manifest m;
  m.emplace_back("command", sub->get_name());
  m.emplace_back("version", kVersion);
#if defined(__clang__)
  m.emplace_back("compiler", std::string("clang ") + __clang_version__);
#elif defined(__GNUC__)
  m.emplace_back("compiler", std::string("gcc ") + __VERSION__);
#else
  m.emplace_back("compiler", "unknown");
#endif
  for (const CLI::Option* opt : sub->get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help") continue;
    std::string value;
    const bool flag = opt->get_expected_max() == 0;
    if (opt->count() > 0) {
      value = opt->as<std::string>();
    } else {
      value = flag ? "false" : opt->get_default_str();
    }
    m.emplace_back(name, value);
  }
  return m;
}

void write_manifest(const fs::path& dir, const Manifest& m) {
  std::string text;
  for (const auto& [k, v] : m) text += k + '=' + v + '\n';
  write_text(dir / "manifest.txt", text);
}

// ---- data ------------------------------------------------------------------------------

struct DataFlags {
  std::string data;
  std::string embeddings, queries, qrels;
  std::string dataset;

  bool explicit_files() const { return !embeddings.empty() || !queries.empty() || !qrels.empty(); }
  bool any() const { return explicit_files() || !data.empty(); }
};

void add_data_flags(CLI::App* sub, DataFlags& f, const char* data_help) {
  sub->add_option("--data", f.data, data_help);
  sub->add_option("--embeddings", f.embeddings, "Corpus embedding file (.emb)");
  sub->add_option("--queries", f.queries, "Query embedding file (.emb)");
  sub->add_option("--qrels", f.qrels, "Relevance judgments (TREC qrels)");
  sub->add_option("--dataset", f.dataset, "Dataset name used in reports");
}

struct DataPaths {
  fs::path corpus, queries, train_qrels, eval_qrels;
  std::string name;
};

std::string dir_name(const fs::path& dir) {
  fs::path p = dir.lexically_normal();
  if (p.filename().empty()) p = p.parent_path();
  const std::string name = p.filename().string();
  return name.empty() || name == "." ? "dataset" : name;
}

DataPaths paths_from_dir(const fs::path& dir, const std::string& name) {
  DataPaths p;
  p.corpus = dir / "corpus.emb";
  p.queries = dir / "queries.emb";
  p.train_qrels = fs::exists(dir / "train_qrels.txt") ? dir / "train_qrels.txt" : dir / "qrels.txt";
  p.eval_qrels = fs::exists(dir / "test_qrels.txt") ? dir / "test_qrels.txt" : dir / "qrels.txt";
  p.name = name.empty() ? dir_name(dir) : name;
  return p;
}

DataPaths resolve_paths(const DataFlags& f) {
  if (f.explicit_files()) {
    if (!f.data.empty()) throw ContractError("--data cannot be combined with --embeddings/--queries/--qrels");
    if (f.embeddings.empty() || f.queries.empty() || f.qrels.empty()) {
      throw ContractError("--embeddings, --queries and --qrels must be given together");
    }
    DataPaths p;
    p.corpus = f.embeddings;
    p.queries = f.queries;
    p.train_qrels = p.eval_qrels = f.qrels;
    p.name = f.dataset.empty() ? dir_name(fs::path(f.embeddings).parent_path()) : f.dataset;
    return p;
  }
  return paths_from_dir(f.data.empty() ? fs::path("data") : fs::path(f.data), f.dataset);
}

struct LoadedData {
  DataPaths paths;
  EmbeddingStore corpus, queries;
  Qrels train_qrels, eval_qrels;
};

LoadedData load_data(const DataPaths& paths, bool train_split, bool eval_split) {
  for (const auto& p : {paths.corpus, paths.queries}) {
    if (!fs::exists(p)) throw DataError("missing input file '" + p.string() + "'");
  }
  LoadedData d;
  d.paths = paths;
  d.corpus = load_embeddings(paths.corpus);
  d.queries = load_embeddings(paths.queries);
  if (d.corpus.dim() != d.queries.dim()) {
    throw DataError("corpus dim " + std::to_string(d.corpus.dim()) + " != query dim " +
                    std::to_string(d.queries.dim()));
  }
  if (train_split) d.train_qrels = load_qrels(paths.train_qrels);
  if (eval_split) d.eval_qrels = load_qrels(paths.eval_qrels);
  return d;
}

void add_path_entries(Manifest& m, const DataPaths& p) {
  m.emplace_back("dataset_name", p.name);
  m.emplace_back("resolved_corpus", p.corpus.string());
  m.emplace_back("resolved_queries", p.queries.string());
  m.emplace_back("resolved_train_qrels", p.train_qrels.string());
  m.emplace_back("resolved_eval_qrels", p.eval_qrels.string());
}

// ---- training flags ---------------------------------------------------------------

struct TrainFlags {
  std::string method = "dive";
  std::size_t k = 128;
  std::size_t heads = 4;
  double margin = 0.7;
  double lambda = 0.1;
  double tau = 0.1;
  std::size_t epochs = 50;
  double lr = 2e-4;
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;
  double weight_decay = 0.01;
  std::size_t per_query = 4;
  std::size_t hard_negatives = 0;
  std::size_t hidden1 = 0, hidden2 = 0;
};

void add_train_flags(CLI::App* sub, TrainFlags& f, bool with_method) {
  if (with_method) {
    sub->add_option("--method", f.method,
                    "dive | dive_no_contrast | dive_single_head | matryoshka | search | smec");
  }
  sub->add_option("--k", f.k, "Target dimension")->check(CLI::PositiveNumber);
  sub->add_option("--heads", f.heads, "Projection heads (DIVE)")->check(CLI::PositiveNumber);
  sub->add_option("--margin", f.margin, "Triplet margin")->check(CLI::NonNegativeNumber);
  sub->add_option("--lambda", f.lambda, "Contrastive weight")->check(CLI::NonNegativeNumber);
  sub->add_option("--tau", f.tau, "NT-Xent temperature")->check(CLI::PositiveNumber);
  sub->add_option("--epochs", f.epochs, "Training epochs");
  sub->add_option("--lr", f.lr, "AdamW learning rate")->check(CLI::PositiveNumber);
  sub->add_option("--batch-size", f.batch_size, "Triplets per step")->check(CLI::Range(2, 1 << 20));
  sub->add_option("--seed", f.seed, "Seed for initialisation, shuffling and triplet sampling");
  sub->add_option("--weight-decay", f.weight_decay, "Decoupled weight decay")
      ->check(CLI::NonNegativeNumber);
  sub->add_option("--per-query", f.per_query, "Triplets sampled per judged query")
      ->check(CLI::PositiveNumber);
  sub->add_option("--hard-negatives", f.hard_negatives,
                  "Draw negatives from the N most similar non-relevant docs (0 = uniform)");
  sub->add_option("--hidden1", f.hidden1, "First hidden width (0 = derived)");
  sub->add_option("--hidden2", f.hidden2, "Second hidden width (0 = derived)");
}

TrainConfig to_config(const TrainFlags& f, Method method, std::uint64_t seed) {
  TrainConfig c;
  c.method = method;
  c.epochs = f.epochs;
  c.lr = f.lr;
  c.weight_decay = f.weight_decay;
  c.batch_size = f.batch_size;
  c.margin = f.margin;
  c.lambda_contrast = f.lambda;
  c.tau = f.tau;
  c.heads = f.heads;
  c.target_dim = f.k;
  c.seed = seed;
  c.hidden1 = f.hidden1;
  c.hidden2 = f.hidden2;
  return c;
}

TrainData make_train_data(const LoadedData& d, const TrainFlags& f, std::uint64_t seed) {
  TripletOptions opts;
  opts.per_query = f.per_query;
  opts.seed = seed;
  opts.hard_negative_pool = f.hard_negatives;
  TrainData td{&d.queries, &d.corpus, sample_triplets(d.train_qrels, d.queries, d.corpus, opts)};
  if (td.triplets.empty()) throw DataError("no training triplets could be sampled");
  return td;
}

void add_config_values(Manifest& m, const TrainConfig& c, std::size_t in_dim) {
  m.emplace_back("effective_heads", std::to_string(c.effective_heads()));
  m.emplace_back("effective_lambda", fmt(c.effective_lambda()));
  m.emplace_back("in_dim", std::to_string(in_dim));
  m.emplace_back("total_epochs", std::to_string(c.total_epochs()));
}

// ---- table --------------------------------------------------------------------------------

std::size_t display_width(const std::string& s) {
  std::size_t w = 0;
  for (unsigned char c : s)
    if ((c & 0xC0) != 0x80) ++w;
  return w;
}

std::string pad(const std::string& s, std::size_t width) {
  return s + std::string(width > display_width(s) ? width - display_width(s) : 0, ' ');
}

int method_rank(const std::string& m) {
  static const std::vector<std::string> order = {"frozen", "matryoshka", "search_adaptor", "smec",
                                                 "dive"};
  auto it = std::find(order.begin(), order.end(), m);
  return it == order.end() ? int(order.size()) : int(it - order.begin());
}

struct Stats {
  double mean = 0.0, std = 0.0;
  std::size_t n = 0;
};

Stats stats_of(const std::vector<double>& v) {
  Stats s;
  s.n = v.size();
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= double(v.size());
  if (v.size() > 1) {
    double acc = 0.0;
    for (double x : v) acc += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(acc / double(v.size() - 1));
  }
  return s;
}

template <typename T>
void push_unique(std::vector<T>& v, const T& x) {
  if (std::find(v.begin(), v.end(), x) == v.end()) v.push_back(x);
}

}  // namespace

Table emit_table(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw ContractError("emit_table: no reports");
  std::vector<std::string> datasets, methods;
  std::map<std::pair<std::string, std::string>, std::vector<double>> values;
  for (const auto& r : reports) {
    push_unique(datasets, r.dataset);
    push_unique(methods, r.method);
    values[{r.dataset, r.method}].push_back(r.ndcg);
  }
  std::stable_sort(methods.begin(), methods.end(), [](const std::string& a, const std::string& b) {
    return method_rank(a) < method_rank(b);
  });

  const std::string metric = "ndcg@" + std::to_string(reports.front().k);
  std::vector<std::vector<std::string>> cells;  // [row][col], col 0 = dataset
  std::vector<std::vector<bool>> best;
  std::vector<std::string> best_methods;
  for (const auto& ds : datasets) {
    std::vector<std::string> row{ds};
    std::vector<bool> mark(methods.size() + 1, false);
    std::vector<long long> rounded(methods.size(), 0);
    std::vector<bool> present(methods.size(), false);
    long long top = 0;
    bool any = false;
    for (std::size_t m = 0; m < methods.size(); ++m) {
      auto it = values.find({ds, methods[m]});
      if (it == values.end()) {
        row.push_back("-");
        continue;
      }
      const Stats s = stats_of(it->second);
      row.push_back(fixed4(s.mean) + "±" + fixed4(s.std));
      present[m] = true;
      rounded[m] = std::llround(s.mean * 1e4);
      if (!any || rounded[m] > top) top = rounded[m];
      any = true;
    }
    std::string names;
    for (std::size_t m = 0; m < methods.size(); ++m)
      if (present[m] && rounded[m] == top) {
        mark[m + 1] = true;
        names += (names.empty() ? "" : ";") + methods[m];
      }
    cells.push_back(row);
    best.push_back(mark);
    best_methods.push_back(names);
  }

  std::vector<std::string> header{"dataset"};
  header.insert(header.end(), methods.begin(), methods.end());
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = display_width(header[c]);
  for (std::size_t r = 0; r < cells.size(); ++r)
    for (std::size_t c = 0; c < header.size(); ++c)
      width[c] = std::max(width[c], display_width(cells[r][c]) + (best[r][c] ? 1 : 0));

  Table t;
  t.text = metric + " (mean±std over runs, * = best per dataset)\n";
  for (std::size_t c = 0; c < header.size(); ++c)
    t.text += (c ? "  " : "") + pad(header[c], width[c]);
  t.text += '\n';
  for (std::size_t r = 0; r < cells.size(); ++r) {
    for (std::size_t c = 0; c < header.size(); ++c)
      t.text += (c ? "  " : "") + pad(cells[r][c] + (best[r][c] ? "*" : ""), width[c]);
    t.text += '\n';
  }

  for (std::size_t c = 0; c < header.size(); ++c) t.csv += (c ? "," : "") + header[c];
  t.csv += ",best\n";
  for (std::size_t r = 0; r < cells.size(); ++r) {
    for (std::size_t c = 0; c < header.size(); ++c) t.csv += (c ? "," : "") + cells[r][c];
    t.csv += ',' + best_methods[r] + '\n';
  }
  return t;
}

namespace {

// ---- commands -----------------------------------------------------------------------

struct GenFlags {
  std::string spec_file, out;
  SyntheticSpec spec;
  std::vector<std::pair<CLI::Option*, std::function<void(SyntheticSpec&)>>> overrides;
};

int cmd_gen(const CLI::App* sub, GenFlags& g) {
  SyntheticSpec spec;
  if (!g.spec_file.empty()) spec = SyntheticSpec::load(g.spec_file);
  for (auto& [opt, apply] : g.overrides)
    if (opt->count() > 0) apply(spec);
  spec.validate();
  const SyntheticDataset ds = gen_synthetic(spec);
  prepare_out(g.out);
  save_dataset(ds, g.out);
  write_text(fs::path(g.out) / "spec.txt", spec.to_text());
  Manifest m = manifest_for(sub);
  m.emplace_back("docs", std::to_string(ds.corpus.size()));
  m.emplace_back("queries_total", std::to_string(ds.queries.size()));
  write_manifest(g.out, m);
  log::info("wrote " + std::to_string(ds.corpus.size()) + " docs and " +
            std::to_string(ds.queries.size()) + " queries to " + g.out);
  return kExitOk;
}

struct TrainCmd {
  TrainFlags train;
  DataFlags data;
  std::string out;
};

int cmd_train(const CLI::App* sub, const TrainCmd& t) {
  const Method method = parse_method(t.train.method);
  const LoadedData d = load_data(resolve_paths(t.data), true, false);
  const TrainConfig config = to_config(t.train, method, t.train.seed);
  config.validate(d.corpus.dim());
  const TrainData td = make_train_data(d, t.train, t.train.seed);

  log::info(std::string("training ") + method_name(method) + " on " +
            std::to_string(td.triplets.size()) + " triplets");
  const TrainResult result = train(config, td);

  prepare_out(t.out);
  const fs::path out = t.out;
  save_checkpoint(result.checkpoint, out / "model.ckpt");
  save_checkpoint(result.initial, out / "init.ckpt");
  result.log.save_csv(out / "dynamics.csv");
  Manifest m = manifest_for(sub);
  add_path_entries(m, d.paths);
  add_config_values(m, config, d.corpus.dim());
  m.emplace_back("triplets", std::to_string(td.triplets.size()));
  m.emplace_back("initial_rho", fmt(result.initial_rho));
  if (!result.log.records.empty()) m.emplace_back("final_rho", fmt(result.log.records.back().rho));
  write_manifest(out, m);
  return kExitOk;
}

struct EvalCmd {
  std::string run, method, out;
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  DataFlags data;
};

int cmd_eval(const CLI::App* sub, const EvalCmd& e) {
  std::map<std::string, std::string> manifest;
  DataPaths paths;
  if (!e.run.empty()) {
    if (!e.method.empty()) throw ContractError("--method cannot be combined with --run");
    manifest = read_key_values(fs::path(e.run) / "manifest.txt");
  } else if (e.method != "frozen") {
    throw ContractError("eval needs --run DIR or --method frozen");
  }
  if (e.data.any() || manifest.empty()) {
    paths = resolve_paths(e.data);
  } else {
    paths.corpus = lookup(manifest, "resolved_corpus");
    paths.queries = lookup(manifest, "resolved_queries");
    paths.train_qrels = lookup(manifest, "resolved_train_qrels");
    paths.eval_qrels = lookup(manifest, "resolved_eval_qrels");
    paths.name = lookup(manifest, "dataset_name", "dataset");
    if (paths.corpus.empty() || paths.queries.empty() || paths.eval_qrels.empty()) {
      throw DataError("run manifest does not record its data; pass data flags");
    }
  }
  if (!e.data.dataset.empty()) paths.name = e.data.dataset;

  const LoadedData d = load_data(paths, false, true);
  Compressor compressor;
  if (e.run.empty()) {
    if (e.k != 0 && e.k != d.corpus.dim()) {
      throw DimensionError("frozen embeddings have dim " + std::to_string(d.corpus.dim()));
    }
    compressor = frozen_compressor(d.corpus.dim());
  } else {
    compressor = compressor_from_checkpoint(load_checkpoint(fs::path(e.run) / "model.ckpt"), e.k);
  }

  EvalOptions opts;
  opts.dataset = paths.name;
  opts.threads = effective_jobs(e.jobs);
  if (sub->get_option("--seed")->count() > 0 || manifest.empty()) {
    opts.seed = e.seed;
  } else {
    opts.seed = std::stoull(lookup(manifest, "seed", "0"));
  }
  const EvalReport report = evaluate_method(compressor, d.queries, d.corpus, d.eval_qrels, opts);

  const fs::path out = e.out.empty() ? fs::path(e.run) / "eval" : fs::path(e.out);
  prepare_out(out);
  write_eval_csv({report}, out / "eval.csv");
  write_text(out / "report.txt", report.to_text());
  Manifest m = manifest_for(sub);
  add_path_entries(m, paths);
  write_manifest(out, m);
  log::info(report.method + " dim " + std::to_string(report.dim) + ": ndcg@" +
            std::to_string(report.k) + " " + fixed4(report.ndcg) + ", recall@" +
            std::to_string(report.k) + " " + fixed4(report.recall));
  return kExitOk;
}

// ---- compare ----------------------------------------------------------------------------

struct CompareCmd {
  std::string methods = "frozen,matryoshka,search,smec,dive";
  std::size_t runs = 3;
  std::size_t jobs = 1;
  std::string out = "compare";
  TrainFlags train;
  DataFlags data;
};

std::string canonical_method(const std::string& name) {
  if (name == "frozen" || name == "pca" || name == "autoencoder") return name;
  return method_name(parse_method(name));
}

EvalReport run_compare_job(const std::string& method, const LoadedData& d, const TrainFlags& f,
                           std::uint64_t seed) {
  EvalOptions opts;
  opts.dataset = d.paths.name;
  opts.seed = seed;
  Compressor compressor;
  if (method == "frozen") {
    compressor = frozen_compressor(d.corpus.dim());
  } else if (method == "pca") {
    compressor = compressor_from_checkpoint(pca_fit(d.corpus, f.k).to_checkpoint());
  } else if (method == "autoencoder") {
    AutoencoderOptions ao;
    ao.target_dim = f.k;
    ao.epochs = f.epochs;
    ao.lr = f.lr;
    ao.weight_decay = f.weight_decay;
    ao.batch_size = std::min(f.batch_size, d.corpus.size());
    ao.seed = seed;
    compressor = compressor_from_checkpoint(autoencoder_train(d.corpus.matrix(), ao).model.to_checkpoint());
  } else {
    const TrainConfig config = to_config(f, parse_method(method), seed);
    const TrainData td = make_train_data(d, f, seed);
    compressor = compressor_from_checkpoint(train(config, td).checkpoint);
  }
  EvalReport r = evaluate_method(compressor, d.queries, d.corpus, d.eval_qrels, opts);
  r.method = method;
  return r;
}

int cmd_compare(const CLI::App* sub, const CompareCmd& c) {
  if (c.runs < 1) throw ContractError("--runs must be at least 1");
  std::vector<std::string> methods;
  for (const auto& m : split_list(c.methods)) push_unique(methods, canonical_method(m));
  if (methods.empty()) throw ContractError("--methods is empty");

  std::vector<DataPaths> paths;
  if (c.data.explicit_files()) {
    paths.push_back(resolve_paths(c.data));
  } else {
    const auto dirs = split_list(c.data.data);
    for (const auto& dir : dirs.empty() ? std::vector<std::string>{"data"} : dirs)
      paths.push_back(paths_from_dir(dir, dirs.size() <= 1 ? c.data.dataset : ""));
  }
  std::vector<LoadedData> data;
  for (const auto& p : paths) data.push_back(load_data(p, true, true));

  // Validate every configuration before any work starts.
  for (const auto& d : data)
    for (const auto& m : methods) {
      if (m == "frozen") continue;
      if (m == "pca") {
        if (c.train.k >= std::min(d.corpus.size(), d.corpus.dim())) {
          throw ContractError("pca needs --k below min(N, d) for dataset " + d.paths.name);
        }
        continue;
      }
      if (m == "autoencoder") {
        if (c.train.k > d.corpus.dim()) throw ContractError("autoencoder --k exceeds the input dim");
        continue;
      }
      to_config(c.train, parse_method(m), c.train.seed).validate(d.corpus.dim());
    }

  struct Job {
    std::size_t dataset;
    std::string method;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (std::size_t di = 0; di < data.size(); ++di)
    for (const auto& m : methods)
      for (std::size_t r = 0; r < c.runs; ++r) jobs.push_back({di, m, c.train.seed + r});

  std::vector<EvalReport> results(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex progress;
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        results[i] = run_compare_job(jobs[i].method, data[jobs[i].dataset], c.train, jobs[i].seed);
        std::lock_guard lock(progress);
        log::info(results[i].dataset + " " + results[i].method + " seed " +
                  std::to_string(jobs[i].seed) + ": ndcg " + fixed4(results[i].ndcg));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::min(effective_jobs(c.jobs), jobs.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (auto& err : errors)
    if (err) std::rethrow_exception(err);

  const fs::path out = c.out;
  prepare_out(out);
  write_eval_csv(results, out / "runs.csv");
  const Table table = emit_table(results);
  write_text(out / "table.txt", table.text);
  write_text(out / "table.csv", table.csv);

  std::ostringstream summary;
  const std::size_t k = results.front().k;
  summary << "dataset,method,dim,runs,ndcg@" << k << "_mean,ndcg@" << k << "_std,recall@" << k
          << "_mean,recall@" << k << "_std\n";
  for (const auto& d : data)
    for (const auto& m : methods) {
      std::vector<double> nd, rc;
      std::size_t dim = 0;
      for (const auto& r : results)
        if (r.dataset == d.paths.name && r.method == m) {
          nd.push_back(r.ndcg);
          rc.push_back(r.recall);
          dim = r.dim;
        }
      const Stats sn = stats_of(nd), sr = stats_of(rc);
      summary << d.paths.name << ',' << m << ',' << dim << ',' << nd.size() << ',' << fmt(sn.mean)
              << ',' << fmt(sn.std) << ',' << fmt(sr.mean) << ',' << fmt(sr.std) << '\n';
    }
  write_text(out / "summary.csv", summary.str());

  Manifest m = manifest_for(sub);
  for (std::size_t i = 0; i < data.size(); ++i) {
    m.emplace_back("dataset_" + std::to_string(i), data[i].paths.name);
    m.emplace_back("resolved_corpus_" + std::to_string(i), data[i].paths.corpus.string());
  }
  write_manifest(out, m);
  std::cout << table.text;
  return kExitOk;
}

// ---- dynamics ----------------------------------------------------------------------------

struct DynamicsCmd {
  TrainCmd t;
  std::string run;
};

std::vector<double> read_rho_column(const fs::path& csv) {
  std::ifstream in(csv);
  if (!in) throw DataError("cannot open '" + csv.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("'" + csv.string() + "' is empty");
  const auto header = split_list(line);
  const auto it = std::find(header.begin(), header.end(), "rho");
  if (it == header.end()) throw DataError("'" + csv.string() + "' has no rho column");
  const std::size_t col = std::size_t(it - header.begin());
  std::vector<double> rho;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto fields = split_list(line);
    if (fields.size() != header.size()) throw ParseError(lineno, "dynamics row has wrong width");
    try {
      rho.push_back(std::stod(fields[col]));
    } catch (const std::exception&) {
      throw ParseError(lineno, "bad rho value '" + fields[col] + "'");
    }
  }
  return rho;
}

std::string fit_text(const DecayFit& f, const std::vector<double>& rho) {
  std::ostringstream s;
  s << "epochs=" << rho.size() << '\n'
    << "rho0=" << fmt(f.rho0) << '\n'
    << "decay_rate=" << fmt(f.decay_rate) << '\n'
    << "rho_star=" << fmt(f.rho_star) << '\n'
    << "max_residual=" << fmt(f.max_residual) << '\n'
    << "degenerate=" << (f.degenerate ? "true" : "false") << '\n';
  if (rho.size() >= 15) s << "rho_epoch_15=" << fmt(rho[14]) << '\n';
  for (std::size_t i = 0; i < rho.size(); ++i)
    if (rho[i] < 0.10) {
      s << "first_epoch_below_0.10=" << i + 1 << '\n';
      break;
    }
  return s.str();
}

int cmd_dynamics(const CLI::App* sub, const DynamicsCmd& c) {
  if (!c.run.empty()) {
    const auto rho = read_rho_column(fs::path(c.run) / "dynamics.csv");
    const DecayFit fit = fit_decay_model(rho);
    const fs::path out = c.t.out.empty() ? fs::path(c.run) / "dynamics" : fs::path(c.t.out);
    prepare_out(out);
    write_text(out / "decay_fit.txt", fit_text(fit, rho));
    write_manifest(out, manifest_for(sub));
    return kExitOk;
  }
  if (c.t.out.empty()) throw ContractError("dynamics needs --out (or --run to refit a run)");
  const Method method = parse_method(c.t.train.method);
  const LoadedData d = load_data(resolve_paths(c.t.data), true, false);
  const TrainConfig config = to_config(c.t.train, method, c.t.train.seed);
  config.validate(d.corpus.dim());
  if (config.total_epochs() < 10) throw ContractError("the decay fit needs at least 10 epochs");
  const TrainData td = make_train_data(d, c.t.train, c.t.train.seed);
  const TrainResult result = train(config, td);
  const auto rho = result.log.rho_series();
  const DecayFit fit = fit_decay_model(rho);

  const fs::path out = c.t.out;
  prepare_out(out);
  save_checkpoint(result.checkpoint, out / "model.ckpt");
  result.log.save_csv(out / "dynamics.csv");
  write_text(out / "decay_fit.txt", fit_text(fit, rho));
  Manifest m = manifest_for(sub);
  add_path_entries(m, d.paths);
  add_config_values(m, config, d.corpus.dim());
  m.emplace_back("triplets", std::to_string(td.triplets.size()));
  m.emplace_back("initial_rho", fmt(result.initial_rho));
  write_manifest(out, m);
  return kExitOk;
}

// ---- audits -------------------------------------------------------------------------------

struct AuditCmd {
  TrainCmd t;
  std::size_t span_begin = 15, span_end = 50;
};

int cmd_audit(const CLI::App* sub, const AuditCmd& c) {
  const Method method = parse_method(c.t.train.method);
  if (!is_dive_family(method)) throw ContractError("audit-perturbation needs a DIVE-family --method");
  if (c.span_begin < 1 || c.span_begin > c.span_end) throw ContractError("bad epoch span");
  const LoadedData d = load_data(resolve_paths(c.t.data), true, false);
  const TrainConfig config = to_config(c.t.train, method, c.t.train.seed);
  config.validate(d.corpus.dim());
  const TrainData td = make_train_data(d, c.t.train, c.t.train.seed);
  const PerturbationAudit audit = perturbation_audit(config, td, c.span_begin, c.span_end);

  const fs::path out = c.t.out;
  prepare_out(out);
  write_text(out / "audit.csv", audit.to_csv());
  write_text(out / "summary.txt", audit.summary());
  audit.gated.save_csv(out / "gated_dynamics.csv");
  audit.ungated.save_csv(out / "ungated_dynamics.csv");
  Manifest m = manifest_for(sub);
  add_path_entries(m, d.paths);
  add_config_values(m, config, d.corpus.dim());
  write_manifest(out, m);
  std::cout << audit.summary();
  if (!audit.gate_invariant_holds) {
    log::warn("gate invariant violated; see summary.txt");
    return kExitNumeric;
  }
  return kExitOk;
}

struct SweepCmd {
  TrainCmd t;
  std::string margins;
  std::size_t jobs = 1;
};

int cmd_sweep(const CLI::App* sub, const SweepCmd& c) {
  const Method method = parse_method(c.t.train.method);
  std::vector<double> margins =
      c.margins.empty() ? kMarginGrid : parse_doubles(c.margins, "--margins");
  if (margins.size() < 2) throw ContractError("sweep-margin needs at least 2 margins");
  const LoadedData d = load_data(resolve_paths(c.t.data), true, true);
  const TrainConfig config = to_config(c.t.train, method, c.t.train.seed);
  config.validate(d.corpus.dim());
  const TrainData td = make_train_data(d, c.t.train, c.t.train.seed);
  const MarginSweep sweep =
      margin_sweep(config, td, margins, EvalInputs{&d.queries, &d.corpus, &d.eval_qrels},
                   effective_jobs(c.jobs));

  const fs::path out = c.t.out;
  prepare_out(out);
  write_text(out / "sweep.csv", sweep.to_csv());
  Manifest m = manifest_for(sub);
  add_path_entries(m, d.paths);
  m.emplace_back("rho0_monotone", sweep.rho0_monotone ? "true" : "false");
  write_manifest(out, m);
  if (!sweep.rho0_monotone) log::warn("initial active ratio is not non-decreasing in the margin");
  return kExitOk;
}

// ---- unsupervised baselines ---------------------------------------------------------------

struct PcaCmd {
  std::size_t k = 128;
  DataFlags data;
  std::string out;
};

int cmd_pca(const CLI::App* sub, const PcaCmd& c) {
  const LoadedData d = load_data(resolve_paths(c.data), false, false);
  const PcaModel model = pca_fit(d.corpus, c.k);
  prepare_out(c.out);
  save_checkpoint(model.to_checkpoint(), fs::path(c.out) / "model.ckpt");
  Manifest m = manifest_for(sub);
  add_path_entries(m, d.paths);
  m.emplace_back("explained_variance_ratio", fmt(model.explained_variance_ratio()));
  write_manifest(c.out, m);
  log::info("pca k=" + std::to_string(c.k) + " explains " +
            fixed4(model.explained_variance_ratio()) + " of the variance");
  return kExitOk;
}

struct AutoencoderCmd {
  AutoencoderOptions opts;
  DataFlags data;
  std::string out;
};

int cmd_autoencoder(const CLI::App* sub, const AutoencoderCmd& c) {
  const LoadedData d = load_data(resolve_paths(c.data), false, false);
  if (c.opts.target_dim > d.corpus.dim()) throw ContractError("--k exceeds the input dim");
  const AutoencoderFit fit = autoencoder_train(d.corpus.matrix(), c.opts);
  prepare_out(c.out);
  const fs::path out = c.out;
  save_checkpoint(fit.model.to_checkpoint(), out / "model.ckpt");
  std::string loss = "epoch,mse\n";
  for (std::size_t e = 0; e < fit.epoch_loss.size(); ++e)
    loss += std::to_string(e + 1) + ',' + fmt(fit.epoch_loss[e], 12) + '\n';
  write_text(out / "loss.csv", loss);
  Manifest m = manifest_for(sub);
  add_path_entries(m, d.paths);
  write_manifest(out, m);
  return kExitOk;
}

// ---- info ----------------------------------------------------------------------------------

void describe_checkpoint(const fs::path& path, std::ostream& os) {
  const Checkpoint ckpt = load_checkpoint(path);
  os << "checkpoint " << path.string() << '\n' << "kind=" << model_kind_name(ckpt.kind) << '\n';
  os << "config=";
  for (std::size_t i = 0; i < ckpt.config.size(); ++i) os << (i ? "," : "") << ckpt.config[i];
  os << '\n';
  std::size_t values = 0;
  for (const auto& t : ckpt.tensors) {
    os << "tensor " << t.name << ' ' << t.value.rows() << 'x' << t.value.cols() << '\n';
    values += t.value.size();
  }
  os << "values=" << values << '\n';
}

int cmd_info(const std::string& target) {
  const fs::path path = target;
  if (!fs::exists(path)) throw DataError("'" + target + "' does not exist");
  std::ostream& os = std::cout;
  if (fs::is_directory(path)) {
    if (fs::exists(path / "manifest.txt")) {
      std::ifstream in(path / "manifest.txt");
      os << in.rdbuf();
    }
    if (fs::exists(path / "model.ckpt")) describe_checkpoint(path / "model.ckpt", os);
    return kExitOk;
  }
  char magic[4] = {0, 0, 0, 0};
  {
    std::ifstream in(path, std::ios::binary);
    in.read(magic, 4);
  }
  const std::string m(magic, 4);
  if (m == "DIVE") {
    describe_checkpoint(path, os);
  } else if (m == "EMB1") {
    const EmbeddingStore store = load_embeddings(path);
    os << "embeddings " << path.string() << '\n'
       << "rows=" << store.size() << '\n'
       << "dim=" << store.dim() << '\n'
       << "normalized=" << (store.normalized() ? "true" : "false") << '\n';
  } else {
    const Qrels qrels = load_qrels(path);
    std::size_t judgments = 0;
    std::map<int, std::size_t> grades;
    for (const auto& [q, list] : qrels)
      for (const auto& j : list) {
        ++judgments;
        ++grades[j.relevance];
      }
    os << "qrels " << path.string() << '\n'
       << "queries=" << qrels.size() << '\n'
       << "judgments=" << judgments << '\n';
    for (const auto& [g, n] : grades) os << "grade_" << g << '=' << n << '\n';
  }
  return kExitOk;
}

// ---- config file injection ----------------------------------------------------------------

// key=value lines become --key=value tokens placed right after the
// subcommand, so explicit flags (parsed later, last one wins) override them.
std::vector<std::string> inject_config(std::vector<std::string> args) {
  std::string file;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) file = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) file = args[i].substr(9);
  }
  if (file.empty() || args.empty() || args[0].empty() || args[0][0] == '-') return args;
  std::ifstream in(file);
  if (!in) throw DataError("cannot open config file '" + file + "'");
  std::vector<std::string> tokens;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(lineno, "config line " + std::to_string(lineno) + " lacks '='");
    std::string key = trim(line.substr(0, eq));
    std::replace(key.begin(), key.end(), '_', '-');
    if (key.empty() || key == "config") {
      throw ParseError(lineno, "config line " + std::to_string(lineno) + " has a bad key");
    }
    tokens.push_back("--" + key + "=" + trim(line.substr(eq + 1)));
  }
  args.insert(args.begin() + 1, tokens.begin(), tokens.end());
  return args;
}

int report_error(const std::string& kind, const std::exception& e, int code) {
  std::cerr << "dive-kit: " << kind << ": " << e.what() << '\n';
  return code;
}

}  // namespace

int run(const std::vector<std::string>& raw_args) {
  std::vector<std::string> args;
  try {
    args = inject_config(raw_args);
  } catch (const DataError& e) {
    return report_error("config error", e, kExitUsage);
  }

  CLI::App app{"Compress frozen embeddings with DIVE and baseline adapters, evaluate retrieval "
               "and audit training dynamics.",
               "dive-kit"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast)->always_capture_default();
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1, 1);
  bool verbose = false;
  std::string config_file;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_file, "key=value file applied before the command-line flags");
    sub->add_flag("--verbose", verbose, "Progress messages on stderr");
  };

  // gen-synthetic
  GenFlags gen;
  CLI::App* s_gen = app.add_subcommand("gen-synthetic", "Generate a clustered synthetic dataset");
  {
    SyntheticSpec& sp = gen.spec;
    auto over = [&](CLI::Option* o, std::function<void(SyntheticSpec&)> f) {
      gen.overrides.emplace_back(o, std::move(f));
    };
    over(s_gen->add_option("--clusters", sp.num_clusters, "Number of clusters"),
         [&](SyntheticSpec& s) { s.num_clusters = gen.spec.num_clusters; });
    over(s_gen->add_option("--docs-per-cluster", sp.docs_per_cluster, "Documents per cluster"),
         [&](SyntheticSpec& s) { s.docs_per_cluster = gen.spec.docs_per_cluster; });
    over(s_gen->add_option("--queries-per-cluster", sp.queries_per_cluster, "Queries per cluster"),
         [&](SyntheticSpec& s) { s.queries_per_cluster = gen.spec.queries_per_cluster; });
    over(s_gen->add_option("--dim", sp.ambient_dim, "Embedding dimension"),
         [&](SyntheticSpec& s) { s.ambient_dim = gen.spec.ambient_dim; });
    over(s_gen->add_option("--separation", sp.cluster_separation, "Angle between centres (radians)"),
         [&](SyntheticSpec& s) { s.cluster_separation = gen.spec.cluster_separation; });
    over(s_gen->add_option("--noise", sp.noise_sigma, "Per-coordinate noise std"),
         [&](SyntheticSpec& s) { s.noise_sigma = gen.spec.noise_sigma; });
    over(s_gen->add_option("--seed", sp.seed, "Generator seed"),
         [&](SyntheticSpec& s) { s.seed = gen.spec.seed; });
    s_gen->add_option("--spec", gen.spec_file, "Spec file (key=value); flags override it");
    s_gen->add_option("--out", gen.out, "Output directory")->required();
    common(s_gen);
  }

  TrainCmd tr;
  CLI::App* s_train = app.add_subcommand("train", "Train one adapter");
  add_train_flags(s_train, tr.train, true);
  add_data_flags(s_train, tr.data, "Dataset directory (default: data)");
  s_train->add_option("--out", tr.out, "Run directory")->required();
  common(s_train);

  EvalCmd ev;
  CLI::App* s_eval = app.add_subcommand("eval", "Evaluate a trained run or the frozen embeddings");
  s_eval->add_option("--run", ev.run, "Run directory holding model.ckpt and manifest.txt");
  s_eval->add_option("--method", ev.method, "'frozen' to evaluate the uncompressed embeddings");
  s_eval->add_option("--k", ev.k, "Evaluation dim (0 = trained dim)");
  s_eval->add_option("--seed", ev.seed, "Seed recorded in the report (default: the run's)");
  s_eval->add_option("--jobs", ev.jobs, "Search threads")->check(CLI::PositiveNumber);
  add_data_flags(s_eval, ev.data, "Dataset directory (default: the run's data)");
  s_eval->add_option("--out", ev.out, "Output directory (default: <run>/eval)");
  common(s_eval);

  CompareCmd cmp;
  CLI::App* s_cmp = app.add_subcommand("compare", "Train and evaluate several methods over seeds");
  s_cmp->add_option("--methods", cmp.methods,
                    "Comma list of frozen, matryoshka, search, smec, dive, dive_no_contrast, "
                    "dive_single_head, pca, autoencoder");
  s_cmp->add_option("--runs", cmp.runs, "Runs per method (seed, seed+1, ...)");
  s_cmp->add_option("--jobs", cmp.jobs, "Parallel jobs")->check(CLI::PositiveNumber);
  add_train_flags(s_cmp, cmp.train, false);
  add_data_flags(s_cmp, cmp.data, "Comma list of dataset directories (default: data)");
  s_cmp->add_option("--out", cmp.out, "Output directory");
  common(s_cmp);

  DynamicsCmd dyn;
  CLI::App* s_dyn = app.add_subcommand("dynamics", "Train, log the active ratio and fit its decay");
  add_train_flags(s_dyn, dyn.t.train, true);
  add_data_flags(s_dyn, dyn.t.data, "Dataset directory (default: data)");
  s_dyn->add_option("--run", dyn.run, "Refit an existing run's dynamics.csv instead of training");
  s_dyn->add_option("--out", dyn.t.out, "Output directory");
  common(s_dyn);

  AuditCmd aud;
  CLI::App* s_aud =
      app.add_subcommand("audit-perturbation", "Compare parameter displacement against Matryoshka");
  add_train_flags(s_aud, aud.t.train, true);
  add_data_flags(s_aud, aud.t.data, "Dataset directory (default: data)");
  s_aud->add_option("--span-begin", aud.span_begin, "First epoch of the span");
  s_aud->add_option("--span-end", aud.span_end, "Last epoch of the span");
  s_aud->add_option("--out", aud.t.out, "Output directory")->required();
  common(s_aud);

  SweepCmd sw;
  CLI::App* s_sw = app.add_subcommand("sweep-margin", "Train one model per margin");
  add_train_flags(s_sw, sw.t.train, true);
  add_data_flags(s_sw, sw.t.data, "Dataset directory (default: data)");
  s_sw->add_option("--margins", sw.margins, "Comma list (default 0.2,0.5,0.7,1.0,1.3)");
  s_sw->add_option("--jobs", sw.jobs, "Parallel jobs")->check(CLI::PositiveNumber);
  s_sw->add_option("--out", sw.t.out, "Output directory")->required();
  common(s_sw);

  PcaCmd pc;
  CLI::App* s_pca = app.add_subcommand("pca", "Fit the PCA baseline on the corpus");
  s_pca->add_option("--k", pc.k, "Target dimension")->check(CLI::PositiveNumber);
  add_data_flags(s_pca, pc.data, "Dataset directory (default: data)");
  s_pca->add_option("--out", pc.out, "Run directory")->required();
  common(s_pca);

  AutoencoderCmd ae;
  CLI::App* s_ae = app.add_subcommand("autoencoder", "Train the autoencoder baseline on the corpus");
  s_ae->add_option("--k", ae.opts.target_dim, "Code dimension")->check(CLI::PositiveNumber);
  s_ae->add_option("--hidden", ae.opts.hidden, "Hidden width (0 = d/2)");
  s_ae->add_option("--epochs", ae.opts.epochs, "Epochs");
  s_ae->add_option("--lr", ae.opts.lr, "AdamW learning rate")->check(CLI::PositiveNumber);
  s_ae->add_option("--weight-decay", ae.opts.weight_decay, "Decoupled weight decay")
      ->check(CLI::NonNegativeNumber);
  s_ae->add_option("--batch-size", ae.opts.batch_size, "Rows per step")->check(CLI::PositiveNumber);
  s_ae->add_option("--seed", ae.opts.seed, "Seed");
  add_data_flags(s_ae, ae.data, "Dataset directory (default: data)");
  s_ae->add_option("--out", ae.out, "Run directory")->required();
  common(s_ae);

  std::string info_target;
  CLI::App* s_info = app.add_subcommand("info", "Describe a run directory, checkpoint, embedding or qrels file");
  s_info->add_option("path", info_target, "File or run directory")->required();
  common(s_info);

  std::vector<std::string> storage{"dive-kit"};
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());
  try {
    app.parse(int(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "dive-kit: usage error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    std::cerr << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }
  log::set_verbose(verbose);

  try {
    if (*s_gen) return cmd_gen(s_gen, gen);
    if (*s_train) return cmd_train(s_train, tr);
    if (*s_eval) return cmd_eval(s_eval, ev);
    if (*s_cmp) return cmd_compare(s_cmp, cmp);
    if (*s_dyn) return cmd_dynamics(s_dyn, dyn);
    if (*s_aud) return cmd_audit(s_aud, aud);
    if (*s_sw) return cmd_sweep(s_sw, sw);
    if (*s_pca) return cmd_pca(s_pca, pc);
    if (*s_ae) return cmd_autoencoder(s_ae, ae);
    if (*s_info) return cmd_info(info_target);
  } catch (const NumericError& e) {
    return report_error("numeric failure", e, kExitNumeric);
  } catch (const DegenerateRowError& e) {
    return report_error("numeric failure", e, kExitNumeric);
  } catch (const ContractError& e) {
    return report_error("invalid arguments", e, kExitUsage);
  } catch (const DataError& e) {
    return report_error("data error", e, kExitData);
  } catch (const std::exception& e) {
    return report_error("error", e, kExitData);
  }
  return kExitUsage;
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace dive::cli
