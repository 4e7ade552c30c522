#pragma once

// Synthetic attributed graphs: a Chung-Lu structural prior whose edge
// probabilities are multiplied by a planted ratio per attribute-value
// combination. Also computes the exact ratios implied by a construction,
// which serve as ground truth for the estimators.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "uge/common.hpp"
#include "uge/graph.hpp"
#include "uge/group_index.hpp"

namespace uge {

/// Codes of a_u followed by codes of a_v over all K attributes.
using ValueCombo = std::vector<std::uint32_t>;

struct GenModelParams {
  AttributeSchema schema;
  std::vector<double> weights;             // Chung-Lu expected degrees, all > 0
  std::vector<std::uint32_t> profiles;     // N x K codes, row-major
  std::map<ValueCombo, double> planted_ratios;  // missing combos default to 1
  std::uint64_t seed = 0;

  std::size_t n_nodes() const noexcept { return weights.size(); }

  double total_weight() const { return std::accumulate(weights.begin(), weights.end(), 0.0); }

  /// Planted multiplier for a combination; falls back to the mirrored
  /// combination, then to 1.
  double ratio(const ValueCombo& combo) const {
    if (auto it = planted_ratios.find(combo); it != planted_ratios.end()) return it->second;
    if (auto it = planted_ratios.find(mirror(combo)); it != planted_ratios.end()) return it->second;
    return 1.0;
  }

  ValueCombo combo_of(NodeId u, NodeId v) const {
    const std::size_t k = schema.size();
    ValueCombo c(profiles.begin() + static_cast<std::ptrdiff_t>(u * k),
                 profiles.begin() + static_cast<std::ptrdiff_t>((u + 1) * k));
    c.insert(c.end(), profiles.begin() + static_cast<std::ptrdiff_t>(v * k),
             profiles.begin() + static_cast<std::ptrdiff_t>((v + 1) * k));
    return c;
  }

  ValueCombo mirror(const ValueCombo& combo) const {
    const std::size_t k = schema.size();
    ValueCombo m(combo.begin() + static_cast<std::ptrdiff_t>(k), combo.end());
    m.insert(m.end(), combo.begin(), combo.begin() + static_cast<std::ptrdiff_t>(k));
    return m;
  }

  void validate() const {
    const std::size_t k = schema.size();
    if (schema.values.size() != k || schema.sensitive.size() != k)
      throw ValidationError("generator schema fields have inconsistent lengths");
    if (weights.empty()) throw ValidationError("generator needs at least one node");
    for (double w : weights)
      if (!(w > 0.0) || !std::isfinite(w)) throw ValidationError("Chung-Lu weights must be positive");
    if (profiles.size() != weights.size() * k)
      throw ValidationError("attribute profile matrix does not match node count");
    for (std::size_t i = 0; i < profiles.size(); ++i)
      if (profiles[i] >= schema.cardinality(i % k)) throw ValidationError("attribute code out of range");
    for (const auto& [combo, rho] : planted_ratios) {
      if (combo.size() != 2 * k) throw ValidationError("planted ratio key has wrong arity");
      for (std::size_t i = 0; i < combo.size(); ++i)
        if (combo[i] >= schema.cardinality(i % k)) throw ValidationError("planted ratio key out of range");
      if (!(rho >= 0.0) || !std::isfinite(rho)) throw ValidationError("planted ratios must be finite and >= 0");
      if (auto it = planted_ratios.find(mirror(combo)); it != planted_ratios.end() && it->second != rho)
        throw ValidationError("planted ratios must be symmetric in the endpoint order");
    }
  }
};

/// Chung-Lu prior P_M(E_uv = 1) = min(1, w_u w_v / sum_k w_k).
inline double structural_edge_prob(const GenModelParams& params, NodeId u, NodeId v) {
  if (u == v) throw ValidationError("structural_edge_prob: self-pairs have no edge variable");
  if (u >= params.n_nodes() || v >= params.n_nodes())
    throw ValidationError("structural_edge_prob: node out of range");
  return std::min(1.0, params.weights[u] * params.weights[v] / params.total_weight());
}

struct SampleStats {
  std::uint64_t clipped_pairs = 0;  // unordered pairs where P_M * rho exceeded 1
};

namespace detail {

/// Planted multiplier for every key of the full grouping.
inline std::vector<double> planted_by_key(const GenModelParams& params, const Grouping& full) {
  std::vector<double> out(full.n_keys());
  for (GroupKey key = 0; key < full.n_keys(); ++key) {
    auto [pu, pv] = full.key_profiles(key);
    ValueCombo combo = full.profile_codes(pu);
    const auto& rhs = full.profile_codes(pv);
    combo.insert(combo.end(), rhs.begin(), rhs.end());
    out[key] = params.ratio(combo);
  }
  return out;
}

/// Pair-count-weighted average of the planted multipliers within each
/// nonsensitive key (self-pairs included, matching the N^2 pair universe).
inline std::vector<double> marginal_by_ns_key(const GroupHierarchy& h, std::span<const double> planted) {
  std::vector<double> num(h.nonsensitive.n_keys(), 0.0), den(h.nonsensitive.n_keys(), 0.0);
  for (GroupKey key = 0; key < h.full.n_keys(); ++key) {
    auto [pu, pv] = h.full.key_profiles(key);
    const double pairs = static_cast<double>(h.full.count(pu)) * static_cast<double>(h.full.count(pv));
    const auto parent = h.parent_key(key);
    num[parent] += pairs * planted[key];
    den[parent] += pairs;
  }
  std::vector<double> out(num.size(), 1.0);
  for (std::size_t i = 0; i < out.size(); ++i)
    if (den[i] > 0) out[i] = num[i] / den[i];
  return out;
}

inline AttributeSchema schema_with_mask(AttributeSchema schema, const std::vector<bool>& mask) {
  if (mask.size() != schema.size()) throw ValidationError("sensitive mask length does not match schema");
  schema.sensitive = mask;
  return schema;
}

/// Bernoulli draw for every unordered pair with probability
/// min(1, P_M(u,v) * multiplier[key(u,v)]). The uniform for pair (u,v)
/// comes from the counter stream (seed, u, v).
inline AttributedGraph sample_with_multipliers(const GenModelParams& params, AttributeSchema schema,
                                               const Grouping& full, std::span<const double> multiplier,
                                               unsigned threads, SampleStats* stats) {
  const std::size_t n = params.n_nodes();
  const double total = params.total_weight();
  std::vector<std::vector<NodeId>> rows(n);
  std::vector<std::uint64_t> clipped(n, 0);
  parallel_for(n, threads, [&](std::size_t i) {
    const auto u = static_cast<NodeId>(i);
    for (NodeId v = u + 1; v < n; ++v) {
      const double prior = std::min(1.0, params.weights[u] * params.weights[v] / total);
      const double p = prior * multiplier[full.key_of(u, v)];
      if (p > 1.0) ++clipped[i];
      if (unit_interval(splitmix64(stream_seed(params.seed, stream::kPairs, u, v))) < p)
        rows[i].push_back(v);
    }
  });
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (NodeId u = 0; u < n; ++u)
    for (NodeId v : rows[u]) edges.emplace_back(u, v);
  if (stats) stats->clipped_pairs = std::accumulate(clipped.begin(), clipped.end(), std::uint64_t{0});
  return AttributedGraph(std::move(schema), params.profiles, edges);
}

}  // namespace detail

/// Observed graph: P_o(E_uv = 1) = min(1, P_M(E_uv = 1) * rho(a_uv)).
inline AttributedGraph sample_biased_graph(const GenModelParams& params, unsigned threads = 1,
                                           SampleStats* stats = nullptr) {
  params.validate();
  Grouping full(params.profiles, params.schema.size(), params.schema.all_attributes());
  auto planted = detail::planted_by_key(params, full);
  return detail::sample_with_multipliers(params, params.schema, full, planted, threads, stats);
}

/// Bias-free graph: the planted ratios are replaced by their marginal over
/// the sensitive attributes within each nonsensitive key.
inline AttributedGraph sample_bias_free_graph(const GenModelParams& params,
                                              const std::vector<bool>& sensitive_mask,
                                              unsigned threads = 1, SampleStats* stats = nullptr) {
  params.validate();
  auto schema = detail::schema_with_mask(params.schema, sensitive_mask);
  GroupHierarchy h(params.profiles, schema);
  auto planted = detail::planted_by_key(params, h.full);
  auto marginal = detail::marginal_by_ns_key(h, planted);
  std::vector<double> multiplier(h.full.n_keys());
  for (GroupKey key = 0; key < h.full.n_keys(); ++key) multiplier[key] = marginal[h.parent_key(key)];
  return detail::sample_with_multipliers(params, std::move(schema), h.full, multiplier, threads, stats);
}

/// Exact ratios implied by a construction. For a key c,
///   R(c) = [sum_{(u,v) in c} P_o(u,v) / sum_{(u,v) in c} P_M(u,v)] / g,
/// with g = sum P_o / sum P_M over all ordered pairs u != v (the observed
/// graph's edge rate relative to the prior). R~ uses the marginal ratios in
/// place of the planted ones and is normalized by the same g, so that
/// R~/R = rho~/rho whenever no probability is clipped.
struct TrueRatios {
  GroupHierarchy groups;
  std::vector<double> planted;             // rho per full key
  std::vector<double> marginal;            // rho~ per nonsensitive key
  std::vector<double> full_ratios;         // R per full key
  std::vector<double> nonsensitive_ratios; // R~ per nonsensitive key
  std::vector<double> expected_edges;      // expected ordered edges per full key
  double global_rate = 1.0;                // g
  std::vector<bool> sensitive;
};

inline TrueRatios compute_true_ratios(const GenModelParams& params, const std::vector<bool>& sensitive_mask) {
  params.validate();
  const auto schema = detail::schema_with_mask(params.schema, sensitive_mask);
  TrueRatios t;
  t.sensitive = sensitive_mask;
  t.groups = GroupHierarchy(params.profiles, schema);
  const auto& full = t.groups.full;
  const auto& ns = t.groups.nonsensitive;
  t.planted = detail::planted_by_key(params, full);
  t.marginal = detail::marginal_by_ns_key(t.groups, t.planted);

  std::vector<double> prior_full(full.n_keys(), 0.0), obs_full(full.n_keys(), 0.0);
  std::vector<double> prior_ns(ns.n_keys(), 0.0), free_ns(ns.n_keys(), 0.0);
  const std::size_t n = params.n_nodes();
  const double total = params.total_weight();
  for (NodeId u = 0; u < n; ++u) {
    for (NodeId v = u + 1; v < n; ++v) {
      const double prior = std::min(1.0, params.weights[u] * params.weights[v] / total);
      for (auto [a, b] : {std::pair{u, v}, std::pair{v, u}}) {
        const auto fk = full.key_of(a, b);
        const auto nk = ns.key_of(a, b);
        prior_full[fk] += prior;
        obs_full[fk] += std::min(1.0, prior * t.planted[fk]);
        prior_ns[nk] += prior;
        free_ns[nk] += std::min(1.0, prior * t.marginal[nk]);
      }
    }
  }
  const double prior_sum = std::accumulate(prior_full.begin(), prior_full.end(), 0.0);
  const double obs_sum = std::accumulate(obs_full.begin(), obs_full.end(), 0.0);
  t.global_rate = prior_sum > 0 ? obs_sum / prior_sum : 1.0;
  const double g = t.global_rate > 0 ? t.global_rate : 1.0;

  t.full_ratios.resize(full.n_keys());
  for (GroupKey k = 0; k < full.n_keys(); ++k)
    t.full_ratios[k] = (prior_full[k] > 0 ? obs_full[k] / prior_full[k] : t.planted[k]) / g;
  t.nonsensitive_ratios.resize(ns.n_keys());
  for (GroupKey k = 0; k < ns.n_keys(); ++k)
    t.nonsensitive_ratios[k] = (prior_ns[k] > 0 ? free_ns[k] / prior_ns[k] : t.marginal[k]) / g;
  t.expected_edges = obs_full;
  return t;
}

/// Analytic R for one full combination key. Throws if no node pair carries it.
inline double true_ratio(const GenModelParams& params, const ValueCombo& key) {
  const auto t = compute_true_ratios(params, params.schema.sensitive);
  const std::size_t k = params.schema.size();
  if (key.size() != 2 * k) throw ValidationError("true_ratio: key has wrong arity");
  auto pu = t.groups.full.find_profile(std::span(key).first(k));
  auto pv = t.groups.full.find_profile(std::span(key).subspan(k));
  if (!pu || !pv) throw ValidationError("true_ratio: unknown combination key");
  return t.full_ratios[t.groups.full.key(*pu, *pv)];
}

/// Analytic R~ for a nonsensitive combination (codes over the nonsensitive
/// attributes of u, then of v).
inline double true_nonsensitive_ratio(const GenModelParams& params, const std::vector<bool>& sensitive_mask,
                                      const ValueCombo& ns_key) {
  const auto t = compute_true_ratios(params, sensitive_mask);
  const std::size_t k = t.groups.nonsensitive.attributes().size();
  if (ns_key.size() != 2 * k) throw ValidationError("true_nonsensitive_ratio: key has wrong arity");
  auto pu = t.groups.nonsensitive.find_profile(std::span(ns_key).first(k));
  auto pv = t.groups.nonsensitive.find_profile(std::span(ns_key).subspan(k));
  if (!pu || !pv) throw ValidationError("true_nonsensitive_ratio: unknown combination key");
  return t.nonsensitive_ratios[t.groups.nonsensitive.key(*pu, *pv)];
}

// -----------------------------------------------------------------------------
// Construction from a declarative description
// -----------------------------------------------------------------------------

struct AttributeSpec {
  std::string name;
  std::vector<std::string> values;
  std::vector<double> fractions;
};

struct GeneratorSpec {
  std::size_t n_nodes = 0;
  double mean_degree = 10.0;
  std::optional<double> degree_exponent;  // power-law exponent gamma > 2
  std::optional<double> max_weight;
  std::vector<double> weights;             // explicit weights override the above
  std::vector<AttributeSpec> attributes;
  std::vector<std::pair<std::string, double>> ratios;  // "F;A|M;B" -> rho
  std::uint64_t seed = 0;
  bool stratified = true;  // spread every profile evenly over the weight order
};

/// Parses a "F;A|M;B" combination label against a schema.
inline ValueCombo parse_combo_label(const std::string& label, const AttributeSchema& schema) {
  const auto sides = detail::split(label, '|');
  if (sides.size() != 2) throw ValidationError("ratio key '" + label + "' must look like a|b");
  ValueCombo combo;
  for (const auto& side : sides) {
    const auto vals = detail::split(side, ';');
    if (vals.size() != schema.size())
      throw ValidationError("ratio key '" + label + "' needs one value per attribute on each side");
    for (std::size_t a = 0; a < vals.size(); ++a) {
      auto code = schema.code_of(a, vals[a]);
      if (!code)
        throw ValidationError("ratio key '" + label + "': unknown value '" + vals[a] + "' for attribute '" +
                              schema.names[a] + "'");
      combo.push_back(*code);
    }
  }
  return combo;
}

inline std::vector<double> chung_lu_weights(const GeneratorSpec& spec) {
  const std::size_t n = spec.n_nodes;
  std::vector<double> w(n, spec.mean_degree);
  if (spec.degree_exponent) {
    const double gamma = *spec.degree_exponent;
    if (!(gamma > 2.0)) throw ValidationError("gen.degree_exponent must exceed 2");
    for (std::size_t i = 0; i < n; ++i) w[i] = std::pow(static_cast<double>(i + 1), -1.0 / (gamma - 1.0));
    const double mean = std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(n);
    for (auto& x : w) x *= spec.mean_degree / mean;
  }
  if (spec.max_weight)
    for (auto& x : w) x = std::min(x, *spec.max_weight);
  return w;
}

inline GenModelParams make_generator_params(const GeneratorSpec& spec) {
  if (spec.n_nodes < 2) throw ValidationError("gen.n_nodes must be at least 2");
  if (spec.attributes.empty()) throw ValidationError("generator needs at least one attribute");
  if (!(spec.mean_degree > 0)) throw ValidationError("gen.mean_degree must be positive");

  GenModelParams p;
  p.seed = spec.seed;
  for (const auto& a : spec.attributes) {
    if (a.values.empty() || a.values.size() != a.fractions.size())
      throw ValidationError("attribute '" + a.name + "' needs one fraction per value");
    double sum = 0;
    for (double f : a.fractions) {
      if (!(f >= 0)) throw ValidationError("attribute '" + a.name + "' has a negative fraction");
      sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-6) throw ValidationError("fractions of '" + a.name + "' must sum to 1");
    p.schema.names.push_back(a.name);
    p.schema.values.push_back(a.values);
    p.schema.sensitive.push_back(false);
  }
  const std::size_t n = spec.n_nodes;
  const std::size_t k = spec.attributes.size();

  p.weights = spec.weights.empty() ? chung_lu_weights(spec) : spec.weights;
  if (p.weights.size() != n) throw ValidationError("explicit weight count does not match gen.n_nodes");

  // Joint profiles with product fractions; largest-remainder rounding to counts.
  std::vector<std::vector<std::uint32_t>> joint{{}};
  std::vector<double> frac{1.0};
  for (const auto& a : spec.attributes) {
    std::vector<std::vector<std::uint32_t>> next;
    std::vector<double> next_frac;
    for (std::size_t j = 0; j < joint.size(); ++j)
      for (std::uint32_t c = 0; c < a.values.size(); ++c) {
        auto prof = joint[j];
        prof.push_back(c);
        next.push_back(std::move(prof));
        next_frac.push_back(frac[j] * a.fractions[c]);
      }
    joint = std::move(next);
    frac = std::move(next_frac);
  }
  std::vector<std::size_t> counts(joint.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t j = 0; j < joint.size(); ++j) {
    const double exact = frac[j] * static_cast<double>(n);
    counts[j] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[j];
    remainders.emplace_back(exact - std::floor(exact), j);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++counts[remainders[i % remainders.size()].second];

  std::vector<std::size_t> sequence;
  sequence.reserve(n);
  if (spec.stratified) {
    // Smooth weighted round-robin: each profile appears count_j times, spread
    // evenly along the sequence.
    std::vector<long long> credit(joint.size(), 0);
    for (std::size_t t = 0; t < n; ++t) {
      std::size_t best = 0;
      for (std::size_t j = 0; j < joint.size(); ++j) {
        credit[j] += static_cast<long long>(counts[j]);
        if (credit[j] > credit[best]) best = j;
      }
      credit[best] -= static_cast<long long>(n);
      sequence.push_back(best);
    }
  } else {
    for (std::size_t j = 0; j < joint.size(); ++j) sequence.insert(sequence.end(), counts[j], j);
    Rng rng(stream_seed(spec.seed, stream::kAssign));
    rng.shuffle(sequence);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return p.weights[a] > p.weights[b]; });
  p.profiles.assign(n * k, 0);
  for (std::size_t t = 0; t < n; ++t)
    std::copy(joint[sequence[t]].begin(), joint[sequence[t]].end(),
              p.profiles.begin() + static_cast<std::ptrdiff_t>(order[t] * k));

  for (const auto& [label, rho] : spec.ratios) {
    auto combo = parse_combo_label(label, p.schema);
    if (auto it = p.planted_ratios.find(combo); it != p.planted_ratios.end() && it->second != rho)
      throw ValidationError("ratio key '" + label + "' given twice with different values");
    p.planted_ratios[combo] = rho;
  }
  p.validate();
  return p;
}

}  // namespace uge
