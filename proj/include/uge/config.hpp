#pragma once

// Plain-text experiment configuration: one `key = value` per line, `#`
// comments, blank lines ignored. `gen.attribute` and `gen.ratio` may repeat;
// every other key may appear once. Unknown keys are rejected.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "uge/biasgen.hpp"
#include "uge/common.hpp"
#include "uge/embed.hpp"
#include "uge/eval.hpp"
#include "uge/graph.hpp"

namespace uge {

struct ConfigEntry {
  std::string key, value;
  std::size_t line = 0;
};

inline std::vector<ConfigEntry> parse_kv(const std::string& text) {
  std::vector<ConfigEntry> out;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    auto line = detail::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ValidationError("config line " + std::to_string(line_no) + ": expected key = value");
    ConfigEntry e{std::string(detail::trim(line.substr(0, eq))), std::string(detail::trim(line.substr(eq + 1))),
                  line_no};
    if (e.key.empty()) throw ValidationError("config line " + std::to_string(line_no) + ": empty key");
    out.push_back(std::move(e));
  }
  return out;
}

/// FNV-1a 64-bit, rendered as 16 hex digits.
inline std::string fnv1a_hex(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Shortest text that parses back to the same double.
inline std::string format_double(double x) {
  char buf[32];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, x);
    if (std::strtod(buf, nullptr) == x) break;
  }
  return buf;
}

struct ExperimentConfig {
  // Data: either explicit files or the generator's output in out_dir.
  std::string edges_path, attributes_path;
  std::optional<GeneratorSpec> gen;
  std::string weights_path;
  std::vector<std::string> sensitive;
  std::vector<Regime> regimes{Regime::none, Regime::uge_w, Regime::uge_r,
                              Regime::uge_c, Regime::fairwalk, Regime::random};
  TrainConfig train;
  double train_frac = 0.9;
  bool estimate_ratios = true;
  double alpha = 0.5;
  EvalParams eval;
  std::vector<double> lambdas{0.1, 0.3, 0.5, 0.7, 0.9, 1.1, 1.3, 1.5, 1.7, 1.9};
  std::string out_dir = "out";
  std::uint64_t seed = 0;

  /// Normalized key = value listing of every setting except out_dir; the
  /// config hash is taken over this text.
  std::string canonical() const;
  std::string hash() const { return fnv1a_hex(canonical()); }
};

namespace detail {

inline double parse_double(const ConfigEntry& e) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(e.value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != e.value.size() || e.value.empty())
    throw ValidationError("config key '" + e.key + "': '" + e.value + "' is not a number");
  return v;
}

inline std::uint64_t parse_uint(const ConfigEntry& e) {
  if (e.value.empty() || e.value.find_first_not_of("0123456789") != std::string::npos)
    throw ValidationError("config key '" + e.key + "': '" + e.value + "' is not a non-negative integer");
  try {
    return std::stoull(e.value);
  } catch (const std::exception&) {
    throw ValidationError("config key '" + e.key + "': '" + e.value + "' is out of range");
  }
}

inline bool parse_bool(const ConfigEntry& e) {
  if (e.value == "true" || e.value == "1") return true;
  if (e.value == "false" || e.value == "0") return false;
  throw ValidationError("config key '" + e.key + "': expected true or false");
}

inline std::vector<std::string> parse_list(const std::string& value) {
  std::vector<std::string> out;
  for (auto& item : split(value, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

/// `name:v1,v2,...:f1,f2,...`
inline AttributeSpec parse_attribute_spec(const ConfigEntry& e) {
  const auto parts = split(e.value, ':');
  if (parts.size() != 3) throw ValidationError("gen.attribute '" + e.value + "' must look like name:values:fractions");
  AttributeSpec a;
  a.name = parts[0];
  a.values = parse_list(parts[1]);
  for (const auto& f : parse_list(parts[2])) a.fractions.push_back(parse_double({e.key, f, e.line}));
  if (a.name.empty() || a.values.empty()) throw ValidationError("gen.attribute '" + e.value + "' is incomplete");
  return a;
}

inline std::string join(const std::vector<std::string>& items, char sep = ',') {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

}  // namespace detail

inline ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig c;
  std::set<std::string> seen;
  auto& gen = c.gen;
  auto need_gen = [&]() -> GeneratorSpec& {
    if (!gen) gen.emplace();
    return *gen;
  };
  for (const auto& e : parse_kv(text)) {
    const bool repeatable = e.key == "gen.attribute" || e.key == "gen.ratio";
    if (!repeatable && !seen.insert(e.key).second)
      throw ValidationError("config key '" + e.key + "' given twice (line " + std::to_string(e.line) + ")");
    const auto& k = e.key;
    using namespace detail;
    if (k == "data.edges") c.edges_path = e.value;
    else if (k == "data.attributes") c.attributes_path = e.value;
    else if (k == "sensitive") c.sensitive = parse_list(e.value);
    else if (k == "regimes") {
      c.regimes.clear();
      for (const auto& r : parse_list(e.value)) c.regimes.push_back(parse_regime(r));
    } else if (k == "out_dir") c.out_dir = e.value;
    else if (k == "seed") c.seed = parse_uint(e);
    else if (k == "gen.n_nodes") need_gen().n_nodes = parse_uint(e);
    else if (k == "gen.mean_degree") need_gen().mean_degree = parse_double(e);
    else if (k == "gen.degree_exponent") need_gen().degree_exponent = parse_double(e);
    else if (k == "gen.max_weight") need_gen().max_weight = parse_double(e);
    else if (k == "gen.weights_file") {
      need_gen();
      c.weights_path = e.value;
    } else if (k == "gen.attribute") need_gen().attributes.push_back(parse_attribute_spec(e));
    else if (k == "gen.ratio") {
      const auto eq = e.value.rfind('=');
      if (eq == std::string::npos) throw ValidationError("gen.ratio '" + e.value + "' must look like a|b=rho");
      need_gen().ratios.emplace_back(std::string(trim(std::string_view(e.value).substr(0, eq))),
                                     parse_double({k, std::string(trim(std::string_view(e.value).substr(eq + 1))),
                                                   e.line}));
    } else if (k == "gen.seed") need_gen().seed = parse_uint(e);
    else if (k == "gen.assignment") {
      if (e.value != "stratified" && e.value != "random")
        throw ValidationError("gen.assignment must be stratified or random");
      need_gen().stratified = e.value == "stratified";
    } else if (k == "train.model") c.train.model = parse_model_kind(e.value);
    else if (k == "train.dim") c.train.dim = parse_uint(e);
    else if (k == "train.epochs") c.train.epochs = parse_uint(e);
    else if (k == "train.learning_rate") c.train.learning_rate = parse_double(e);
    else if (k == "train.weight_decay") c.train.weight_decay = parse_double(e);
    else if (k == "train.lambda") c.train.lambda = parse_double(e);
    else if (k == "train.reg_fraction") c.train.reg_fraction = parse_double(e);
    else if (k == "train.neg_ratio") c.train.neg_ratio = static_cast<std::uint32_t>(parse_uint(e));
    else if (k == "train.weight_negatives") c.train.weight_negatives = parse_bool(e);
    else if (k == "train.factorized") c.train.factorized = parse_bool(e);
    else if (k == "train.batch_nodes") c.train.batch_nodes = parse_uint(e);
    else if (k == "reg.pairs_per_group") c.train.pairs_per_group = parse_uint(e);
    else if (k == "reg.squared") c.train.reg_squared = parse_bool(e);
    else if (k == "reg.resample") {
      if (e.value != "epoch" && e.value != "step") throw ValidationError("reg.resample must be epoch or step");
      c.train.reg_resample = e.value == "epoch" ? Resample::epoch : Resample::step;
    } else if (k == "split.train_frac") c.train_frac = parse_double(e);
    else if (k == "ratio.estimate") c.estimate_ratios = parse_bool(e);
    else if (k == "ratio.alpha") c.alpha = parse_double(e);
    else if (k == "eval.k") c.eval.k = parse_uint(e);
    else if (k == "eval.list_size") c.eval.list_size = parse_uint(e);
    else if (k == "eval.min_group_pairs") c.eval.min_group_pairs = parse_uint(e);
    else if (k == "eval.probe_repeats") c.eval.probe_repeats = parse_uint(e);
    else if (k == "eval.probe_train_frac") c.eval.probe.train_frac = parse_double(e);
    else if (k == "eval.probe_iterations") c.eval.probe.iterations = parse_uint(e);
    else if (k == "eval.probe_learning_rate") c.eval.probe.learning_rate = parse_double(e);
    else if (k == "eval.probe_l2") c.eval.probe.l2 = parse_double(e);
    else if (k == "sweep.lambdas") {
      c.lambdas.clear();
      for (const auto& v : parse_list(e.value)) c.lambdas.push_back(parse_double({k, v, e.line}));
    } else
      throw ValidationError("unknown config key '" + k + "' (line " + std::to_string(e.line) + ")");
  }
  if (gen && !seen.count("gen.seed")) gen->seed = c.seed;
  c.train.seed = c.seed;
  c.train.validate();
  if (!(c.train_frac > 0 && c.train_frac < 1)) throw ValidationError("split.train_frac must lie in (0, 1)");
  if (!(c.alpha >= 0)) throw ValidationError("ratio.alpha must be >= 0");
  if (c.regimes.empty()) throw ValidationError("regimes must not be empty");
  if (c.edges_path.empty() != c.attributes_path.empty())
    throw ValidationError("data.edges and data.attributes must be given together");
  if (!c.edges_path.empty() && gen) throw ValidationError("give either data.* files or a gen.* block, not both");
  if (c.out_dir.empty()) throw ValidationError("out_dir must not be empty");
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

inline std::string ExperimentConfig::canonical() const {
  using detail::join;
  std::ostringstream o;
  auto kv = [&](const std::string& k, const std::string& v) { o << k << " = " << v << '\n'; };
  auto num = [&](double x) { return format_double(x); };
  kv("data.edges", edges_path);
  kv("data.attributes", attributes_path);
  if (gen) {
    kv("gen.n_nodes", std::to_string(gen->n_nodes));
    kv("gen.mean_degree", num(gen->mean_degree));
    if (gen->degree_exponent) kv("gen.degree_exponent", num(*gen->degree_exponent));
    if (gen->max_weight) kv("gen.max_weight", num(*gen->max_weight));
    if (!weights_path.empty()) kv("gen.weights_file", weights_path);
    for (const auto& a : gen->attributes) {
      std::vector<std::string> fr;
      for (double f : a.fractions) fr.push_back(num(f));
      kv("gen.attribute", a.name + ":" + join(a.values) + ":" + join(fr));
    }
    for (const auto& [label, rho] : gen->ratios) kv("gen.ratio", label + "=" + num(rho));
    kv("gen.seed", std::to_string(gen->seed));
    kv("gen.assignment", gen->stratified ? "stratified" : "random");
  }
  kv("sensitive", join(sensitive));
  std::vector<std::string> regs;
  for (auto r : regimes) regs.emplace_back(to_string(r));
  kv("regimes", join(regs));
  kv("seed", std::to_string(seed));
  kv("train.model", std::string(to_string(train.model)));
  kv("train.dim", std::to_string(train.dim));
  kv("train.epochs", std::to_string(train.epochs));
  kv("train.learning_rate", num(train.learning_rate));
  kv("train.weight_decay", num(train.weight_decay));
  kv("train.lambda", num(train.lambda));
  kv("train.reg_fraction", num(train.reg_fraction));
  kv("train.neg_ratio", std::to_string(train.neg_ratio));
  kv("train.weight_negatives", train.weight_negatives ? "true" : "false");
  kv("train.factorized", train.factorized ? "true" : "false");
  kv("train.batch_nodes", std::to_string(train.batch_nodes));
  kv("reg.pairs_per_group", std::to_string(train.pairs_per_group));
  kv("reg.squared", train.reg_squared ? "true" : "false");
  kv("reg.resample", train.reg_resample == Resample::epoch ? "epoch" : "step");
  kv("split.train_frac", num(train_frac));
  kv("ratio.estimate", estimate_ratios ? "true" : "false");
  kv("ratio.alpha", num(alpha));
  kv("eval.k", std::to_string(eval.k));
  kv("eval.list_size", std::to_string(eval.list_size));
  kv("eval.min_group_pairs", std::to_string(eval.min_group_pairs));
  kv("eval.probe_repeats", std::to_string(eval.probe_repeats));
  kv("eval.probe_train_frac", num(eval.probe.train_frac));
  kv("eval.probe_iterations", std::to_string(eval.probe.iterations));
  kv("eval.probe_learning_rate", num(eval.probe.learning_rate));
  kv("eval.probe_l2", num(eval.probe.l2));
  std::vector<std::string> ls;
  for (double l : lambdas) ls.push_back(num(l));
  kv("sweep.lambdas", join(ls));
  return o.str();
}

}  // namespace uge
