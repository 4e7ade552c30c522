#pragma once

// Experiment commands: generate -> train -> evaluate, plus the lambda sweep.
// All outputs of one experiment live in cfg.out_dir:
//
//   edges.txt, attributes.csv, ground_truth.csv, generate.json   (generate)
//   ratios.csv, embeddings/<regime>.emb + .json, logs/<regime>.csv (train)
//   reports/<regime>.json, reports/summary.csv                  (evaluate)
//   sweep.csv                                                   (sweep)
//
// Existing outputs are never replaced unless RunOptions::overwrite is set.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "uge/biasgen.hpp"
#include "uge/config.hpp"
#include "uge/debias.hpp"
#include "uge/embed.hpp"
#include "uge/eval.hpp"
#include "uge/graph.hpp"
#include "uge/split.hpp"

namespace uge {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

struct RunOptions {
  unsigned threads = 1;
  bool overwrite = false;
  std::ostream* log = &std::cerr;
};

// -----------------------------------------------------------------------------
// Embedding files
// -----------------------------------------------------------------------------

/// One line per node: original id followed by d values with 9 significant digits.
inline void write_embedding_text(const EmbeddingModel& m, const AttributedGraph& g, std::ostream& out) {
  char buf[32];
  for (NodeId u = 0; u < m.n_nodes(); ++u) {
    out << g.original_id(u);
    for (double x : m.row(u)) {
      std::snprintf(buf, sizeof buf, " %.9g", x);
      out << buf;
    }
    out << '\n';
  }
}

/// Reads an embedding file written for graph `g`; every node must appear once.
inline EmbeddingModel read_embedding_text(std::istream& in, const AttributedGraph& g,
                                          ModelKind kind = ModelKind::dot_bce) {
  std::unordered_map<std::string, NodeId> dense;
  for (NodeId u = 0; u < g.n_nodes(); ++u) dense.emplace(g.original_id(u), u);
  std::vector<std::vector<double>> rows(g.n_nodes());
  std::size_t dim = 0, seen = 0, line_no = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    std::istringstream fields(line);
    std::string id;
    fields >> id;
    auto it = dense.find(id);
    if (it == dense.end())
      throw ValidationError("embedding line " + std::to_string(line_no) + ": node '" + id + "' is not in the graph");
    std::vector<double> row;
    double x;
    while (fields >> x) row.push_back(x);
    if (!fields.eof()) throw ValidationError("embedding line " + std::to_string(line_no) + ": malformed number");
    if (row.empty()) throw ValidationError("embedding line " + std::to_string(line_no) + ": no values");
    if (dim == 0) dim = row.size();
    if (row.size() != dim)
      throw ValidationError("embedding line " + std::to_string(line_no) + ": dimension mismatch (" +
                            std::to_string(row.size()) + " vs " + std::to_string(dim) + ")");
    if (!rows[it->second].empty()) throw ValidationError("embedding lists node '" + id + "' twice");
    rows[it->second] = std::move(row);
    ++seen;
  }
  if (seen != g.n_nodes())
    throw ValidationError("embedding/graph dimension mismatch: " + std::to_string(seen) + " rows for " +
                          std::to_string(g.n_nodes()) + " nodes");
  EmbeddingModel m(g.n_nodes(), dim, kind);
  for (NodeId u = 0; u < g.n_nodes(); ++u) std::copy(rows[u].begin(), rows[u].end(), m.row(u).begin());
  return m;
}

// -----------------------------------------------------------------------------
// Report serialization
// -----------------------------------------------------------------------------

inline ordered_json report_to_json(const EvalReport& r, const EvalParams& p) {
  ordered_json j;
  j["regime"] = r.regime;
  j["config_hash"] = r.config_hash;
  j["seed"] = r.seed;
  j["k"] = p.k;
  j["list_size"] = p.list_size;
  j["ndcg_at_k"] = r.ndcg;
  j["evaluated_nodes"] = r.evaluated_nodes;
  j["evaluated_pairs"] = r.evaluated_pairs;
  j["min_group_pairs"] = p.min_group_pairs;
  j["probe_repeats"] = p.probe_repeats;
  for (const auto& a : r.attributes) {
    j["micro_f1." + a.attribute] = a.micro_f1;
    j["dp." + a.attribute] = a.dp ? ordered_json(*a.dp) : ordered_json(nullptr);
    j["eo." + a.attribute] = a.eo ? ordered_json(*a.eo) : ordered_json(nullptr);
    j["dp_groups." + a.attribute] = a.dp_groups;
    j["eo_groups." + a.attribute] = a.eo_groups;
    j["excluded_groups." + a.attribute] = a.excluded_groups;
  }
  j["fairness_definition"] = "max pairwise gap of mean sigmoid(score) over unordered endpoint-value groups";
  return j;
}

inline std::string csv_number(std::optional<double> x) {
  if (!x) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", *x);
  return buf;
}

inline constexpr const char* kSummaryHeader =
    "regime,attribute,micro_f1,ndcg_at_k,dp,eo,evaluated_nodes,evaluated_pairs,excluded_groups,config_hash,seed";

/// One CSV row per sensitive attribute (a single row with an empty
/// attribute when there is none).
inline std::vector<std::string> report_csv_rows(const EvalReport& r) {
  std::vector<std::string> rows;
  auto row = [&](const AttributeMetrics* a) {
    std::ostringstream o;
    o << r.regime << ',' << (a ? a->attribute : "") << ',' << (a ? csv_number(a->micro_f1) : "") << ','
      << csv_number(r.ndcg) << ',' << (a ? csv_number(a->dp) : "") << ',' << (a ? csv_number(a->eo) : "") << ','
      << r.evaluated_nodes << ',' << r.evaluated_pairs << ',' << (a ? a->excluded_groups : 0) << ','
      << r.config_hash << ',' << r.seed;
    rows.push_back(o.str());
  };
  if (r.attributes.empty()) row(nullptr);
  for (const auto& a : r.attributes) row(&a);
  return rows;
}

// -----------------------------------------------------------------------------
// Helpers
// -----------------------------------------------------------------------------

namespace detail {

inline void guard_outputs(const std::vector<fs::path>& paths, const RunOptions& opt) {
  if (opt.overwrite) return;
  for (const auto& p : paths)
    if (fs::exists(p))
      throw ValidationError("output " + p.string() + " already exists; use a new out_dir or --overwrite");
}

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ValidationError("output directory " + dir.string() + " is not writable");
}

inline void write_file(const fs::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write " + path.string());
  out << contents;
  if (!out) throw RuntimeError("write failed for " + path.string());
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::vector<double> read_weights_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open weight file " + path);
  std::vector<double> w;
  double x;
  while (in >> x) w.push_back(x);
  if (!in.eof()) throw ValidationError("weight file " + path + " contains a non-numeric token");
  return w;
}

inline void check_sensitive_names(const AttributeSchema& schema, const std::vector<std::string>& names) {
  for (const auto& n : names)
    if (!schema.index_of(n)) throw ValidationError("sensitive attribute '" + n + "' is not in the schema");
}

}  // namespace detail

inline fs::path edges_file(const ExperimentConfig& c) {
  return c.edges_path.empty() ? fs::path(c.out_dir) / "edges.txt" : fs::path(c.edges_path);
}
inline fs::path attributes_file(const ExperimentConfig& c) {
  return c.attributes_path.empty() ? fs::path(c.out_dir) / "attributes.csv" : fs::path(c.attributes_path);
}
inline fs::path embedding_file(const ExperimentConfig& c, Regime r) {
  return fs::path(c.out_dir) / "embeddings" / (std::string(to_string(r)) + ".emb");
}

/// Loads the experiment graph with the configured sensitive attributes.
inline AttributedGraph load_experiment_graph(const ExperimentConfig& c, const RunOptions& opt) {
  const auto ep = edges_file(c), ap = attributes_file(c);
  if (c.edges_path.empty() && !fs::exists(ep))
    throw ValidationError("no data.* files configured and " + ep.string() + " is missing; run generate first");
  LoadReport report;
  auto g = load_graph(ep.string(), ap.string(), {}, &report);
  detail::check_sensitive_names(g.schema(), c.sensitive);
  if (opt.log && (report.dropped.self_loops || report.dropped.duplicates))
    *opt.log << "warning: dropped " << report.dropped.self_loops << " self-loops and " << report.dropped.duplicates
             << " duplicate edges\n";
  return g.with_sensitive(c.sensitive);
}

inline EdgeSplits experiment_splits(const ExperimentConfig& c, const AttributedGraph& g, const RunOptions& opt) {
  auto s = split_edges(g, c.train_frac, c.train.neg_ratio, c.seed, opt.threads);
  if (opt.log && s.skipped_nodes)
    *opt.log << "warning: skipped " << s.skipped_nodes << " nodes adjacent to every other node\n";
  return s;
}

// -----------------------------------------------------------------------------
// Commands
// -----------------------------------------------------------------------------

/// Generator parameters of a config, with its sensitive attributes marked.
inline GenModelParams experiment_generator(const ExperimentConfig& c) {
  if (!c.gen) throw ValidationError("generate needs a gen.* block");
  GeneratorSpec spec = *c.gen;
  if (!c.weights_path.empty()) spec.weights = detail::read_weights_file(c.weights_path);
  auto params = make_generator_params(spec);
  detail::check_sensitive_names(params.schema, c.sensitive);
  params.schema.set_sensitive(c.sensitive);
  return params;
}

/// Samples the planted graph and writes it next to the ground-truth ratio
/// file (kind,key,rho,R,expected_ordered_edges).
inline void cmd_generate(const ExperimentConfig& c, const RunOptions& opt = {}) {
  const auto params = experiment_generator(c);

  const fs::path dir(c.out_dir);
  const auto ep = dir / "edges.txt", ap = dir / "attributes.csv", tp = dir / "ground_truth.csv",
             mp = dir / "generate.json";
  detail::guard_outputs({ep, ap, tp, mp}, opt);
  detail::ensure_dir(dir);

  SampleStats stats;
  const auto g = sample_biased_graph(params, opt.threads, &stats);
  if (g.num_edges() == 0) throw RuntimeError("generator produced no edges");
  if (opt.log && stats.clipped_pairs)
    *opt.log << "warning: " << stats.clipped_pairs << " pair probabilities clipped at 1\n";
  write_graph_text(g, ep.string(), ap.string());

  const auto truth = compute_true_ratios(params, params.schema.sensitive);
  std::ostringstream t;
  t << "kind,key,rho,R,expected_ordered_edges\n";
  auto num = [](double x) { return csv_number(x); };
  const auto& full = truth.groups.full;
  for (GroupKey k = 0; k < full.n_keys(); ++k)
    t << "full," << full.key_label(k, params.schema) << ',' << num(truth.planted[k]) << ','
      << num(truth.full_ratios[k]) << ',' << num(truth.expected_edges[k]) << '\n';
  const auto& ns = truth.groups.nonsensitive;
  std::vector<double> ns_edges(ns.n_keys(), 0.0);
  for (GroupKey k = 0; k < full.n_keys(); ++k) ns_edges[truth.groups.parent_key(k)] += truth.expected_edges[k];
  for (GroupKey k = 0; k < ns.n_keys(); ++k)
    t << "nonsensitive," << ns.key_label(k, params.schema) << ',' << num(truth.marginal[k]) << ','
      << num(truth.nonsensitive_ratios[k]) << ',' << num(ns_edges[k]) << '\n';
  detail::write_file(tp, t.str());

  ordered_json meta;
  meta["config_hash"] = c.hash();
  meta["seed"] = c.seed;
  meta["gen_seed"] = c.gen->seed;
  meta["n_nodes"] = g.n_nodes();
  meta["undirected_edges"] = g.num_edges();
  meta["clipped_pairs"] = stats.clipped_pairs;
  detail::write_file(mp, meta.dump(2) + "\n");
}

/// Trains every configured regime and writes each embedding with its sidecar and log.
inline void cmd_train(const ExperimentConfig& c, const RunOptions& opt = {}) {
  for (auto r : c.regimes)
    if (uses_weights(r) && !c.estimate_ratios)
      throw ValidationError("regime " + std::string(to_string(r)) + " needs ratio estimates but ratio.estimate = false");
  const fs::path dir(c.out_dir);
  std::vector<fs::path> outputs;
  if (c.estimate_ratios) outputs.push_back(dir / "ratios.csv");
  for (auto r : c.regimes) {
    outputs.push_back(embedding_file(c, r));
    outputs.push_back(fs::path(embedding_file(c, r)).replace_extension(".json"));
    outputs.push_back(dir / "logs" / (std::string(to_string(r)) + ".csv"));
  }
  detail::guard_outputs(outputs, opt);

  const auto g = load_experiment_graph(c, opt);
  const auto splits = experiment_splits(c, g, opt);
  std::optional<RatioTable> table;
  if (c.estimate_ratios) {
    table = estimate_ratios(g, c.train.factorized, c.alpha);
    std::size_t zero = 0;
    for (double r : table->full_ratios) zero += r <= 0.0;
    if (opt.log && zero) *opt.log << "warning: " << zero << " keys have R = 0; their weight is 0\n";
  }
  detail::ensure_dir(dir / "embeddings");
  detail::ensure_dir(dir / "logs");
  if (table) {
    std::ostringstream o;
    write_ratio_table_csv(*table, g.schema(), o);
    detail::write_file(dir / "ratios.csv", o.str());
  }
  const auto hash = c.hash();
  for (auto r : c.regimes) {
    TrainConfig tc = c.train;
    tc.regime = r;
    std::vector<TrainLogEntry> log;
    const auto model = train(g, splits, table ? &*table : nullptr, tc, &log);
    std::ostringstream emb;
    write_embedding_text(model, g, emb);
    detail::write_file(embedding_file(c, r), emb.str());
    ordered_json meta;
    meta["d"] = model.dim();
    meta["regime"] = to_string(r);
    meta["model"] = to_string(tc.model);
    meta["seed"] = c.seed;
    meta["config_hash"] = hash;
    detail::write_file(fs::path(embedding_file(c, r)).replace_extension(".json"), meta.dump(2) + "\n");
    std::ostringstream lg;
    lg << "epoch,loss,reg\n";
    for (const auto& e : log) lg << e.epoch << ',' << csv_number(e.loss) << ',' << csv_number(e.reg) << '\n';
    detail::write_file(dir / "logs" / (std::string(to_string(r)) + ".csv"), lg.str());
    if (opt.log) *opt.log << "trained " << to_string(r) << '\n';
  }
}

/// Evaluates the stored embedding of every configured regime.
inline std::vector<EvalReport> cmd_evaluate(const ExperimentConfig& c, const RunOptions& opt = {}) {
  const fs::path dir = fs::path(c.out_dir) / "reports";
  std::vector<fs::path> outputs{dir / "summary.csv"};
  for (auto r : c.regimes) outputs.push_back(dir / (std::string(to_string(r)) + ".json"));
  detail::guard_outputs(outputs, opt);

  const auto g = load_experiment_graph(c, opt);
  const auto splits = experiment_splits(c, g, opt);
  const auto hash = c.hash();
  std::vector<EvalReport> reports;
  for (auto r : c.regimes) {
    const auto path = embedding_file(c, r);
    if (!fs::exists(path)) throw ValidationError("missing embedding " + path.string() + "; run train first");
    std::istringstream in(detail::read_file(path));
    const auto model = read_embedding_text(in, g, c.train.model);
    auto rep = evaluate_model(model, g, splits, c.eval, c.seed, opt.threads);
    rep.regime = to_string(r);
    rep.config_hash = hash;
    reports.push_back(std::move(rep));
  }
  detail::ensure_dir(dir);
  std::ostringstream summary;
  summary << kSummaryHeader << '\n';
  for (const auto& rep : reports) {
    detail::write_file(dir / (rep.regime + ".json"), report_to_json(rep, c.eval).dump(2) + "\n");
    for (const auto& row : report_csv_rows(rep)) summary << row << '\n';
  }
  detail::write_file(dir / "summary.csv", summary.str());
  return reports;
}

struct SweepRow {
  double lambda = 0.0;
  EvalReport report;
};

/// Trains and evaluates UGE-C at every lambda of the grid; lambda points run
/// on independent worker threads.
inline std::vector<SweepRow> run_sweep(const ExperimentConfig& c, const AttributedGraph& g, const EdgeSplits& splits,
                                       const RatioTable& table, unsigned threads) {
  if (c.lambdas.empty()) throw ValidationError("sweep.lambdas must not be empty");
  std::vector<SweepRow> rows(c.lambdas.size());
  parallel_for(c.lambdas.size(), threads, [&](std::size_t i) {
    TrainConfig tc = c.train;
    tc.regime = Regime::uge_c;
    tc.lambda = c.lambdas[i];
    const auto model = train(g, splits, &table, tc);
    rows[i].lambda = c.lambdas[i];
    rows[i].report = evaluate_model(model, g, splits, c.eval, c.seed, 1);
    rows[i].report.regime = "uge-c";
  });
  return rows;
}

inline constexpr const char* kSweepHeader = "lambda,attribute,micro_f1,ndcg_at_k,dp,eo,config_hash,seed";

inline std::vector<SweepRow> cmd_sweep(const ExperimentConfig& c, const RunOptions& opt = {}) {
  if (c.lambdas.empty()) throw ValidationError("sweep.lambdas must not be empty");
  if (!c.estimate_ratios) throw ValidationError("sweep trains uge-c, which needs ratio.estimate = true");
  const auto out = fs::path(c.out_dir) / "sweep.csv";
  detail::guard_outputs({out}, opt);
  const auto g = load_experiment_graph(c, opt);
  const auto splits = experiment_splits(c, g, opt);
  const auto table = estimate_ratios(g, c.train.factorized, c.alpha);
  auto rows = run_sweep(c, g, splits, table, opt.threads);
  const auto hash = c.hash();
  std::ostringstream o;
  o << kSweepHeader << '\n';
  for (auto& row : rows) {
    row.report.config_hash = hash;
    if (row.report.attributes.empty())
      o << csv_number(row.lambda) << ",,," << csv_number(row.report.ndcg) << ",,," << hash << ',' << c.seed << '\n';
    for (const auto& a : row.report.attributes)
      o << csv_number(row.lambda) << ',' << a.attribute << ',' << csv_number(a.micro_f1) << ','
        << csv_number(row.report.ndcg) << ',' << csv_number(a.dp) << ',' << csv_number(a.eo) << ',' << hash << ','
        << c.seed << '\n';
  }
  detail::ensure_dir(c.out_dir);
  detail::write_file(out, o.str());
  return rows;
}

}  // namespace uge
