#pragma once

// Estimation of the attribute-combination ratios R and R~, the per-edge
// importance weights R~/R, and the group-score regularizer that compares
// mean scores under the full and nonsensitive groupings.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "uge/biasgen.hpp"
#include "uge/common.hpp"
#include "uge/graph.hpp"
#include "uge/group_index.hpp"

namespace uge {

struct RatioTable {
  GroupHierarchy groups;
  std::vector<double> full_ratios;          // R per full key
  std::vector<double> nonsensitive_ratios;  // R~ per nonsensitive key
  std::vector<double> weights;              // R~/R per full key, 0 where R = 0
  std::vector<std::uint64_t> pair_counts, edge_counts;  // per full key (empty for truth tables)
  double alpha = 0.5;
  bool factorized = false;
  std::size_t n_nodes = 0;
  std::vector<bool> sensitive;

  GroupKey full_key(NodeId u, NodeId v) const { return groups.full.key_of(u, v); }
  GroupKey nonsensitive_key(NodeId u, NodeId v) const { return groups.nonsensitive.key_of(u, v); }
  double weight(NodeId u, NodeId v) const { return weights[full_key(u, v)]; }
};

namespace detail {

inline double smoothed_ratio(std::uint64_t edges, std::uint64_t total_edges, std::uint64_t pairs,
                             std::uint64_t total_pairs, std::size_t n_keys, double alpha) {
  const double a = alpha;
  const double nk = static_cast<double>(n_keys);
  const double edge_den = static_cast<double>(total_edges) + a * nk;
  const double pair_num = static_cast<double>(pairs) + a;
  if (pair_num <= 0.0) throw ValidationError("ratio estimate: key with zero pairs requires alpha > 0");
  if (edge_den <= 0.0) throw ValidationError("ratio estimate: graph has no edges and alpha = 0");
  const double p_given_edge = (static_cast<double>(edges) + a) / edge_den;
  const double p_pair = pair_num / (static_cast<double>(total_pairs) + a * nk);
  return p_given_edge / p_pair;
}

inline std::vector<double> ratios_of(const GroupIndex& idx, double alpha) {
  std::vector<double> out(idx.n_keys());
  for (std::size_t k = 0; k < out.size(); ++k)
    out[k] = smoothed_ratio(idx.edge_counts[k], idx.total_edges, idx.pair_counts[k], idx.total_pairs,
                            idx.n_keys(), alpha);
  return out;
}

inline void fill_weights(RatioTable& t) {
  t.weights.resize(t.full_ratios.size());
  for (GroupKey k = 0; k < t.full_ratios.size(); ++k) {
    const double r = t.full_ratios[k];
    t.weights[k] = r > 0.0 ? t.nonsensitive_ratios[t.groups.parent_key(k)] / r : 0.0;
  }
}

}  // namespace detail

/// Maximum-likelihood ratio estimates with additive smoothing alpha:
///   R(c) = [(e_c + a) / (|E| + a n)] / [(p_c + a) / (N^2 + a n)]
/// where e_c counts ordered edges and p_c ordered pairs carrying key c, and
/// n is the number of keys. R~ uses the same formula on the nonsensitive
/// grouping with the observed edges (sensitive attributes re-route edges
/// without changing per-group totals).
///
/// With `factorized`, attributes are treated as independent: R is the
/// product of single-attribute ratios over the sensitive attributes and
/// R~ = 1.
inline RatioTable estimate_ratios(const AttributedGraph& g, bool factorized, double alpha = 0.5) {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ValidationError("smoothing alpha must be >= 0");
  RatioTable t;
  t.alpha = alpha;
  t.factorized = factorized;
  t.n_nodes = g.n_nodes();
  t.sensitive = g.schema().sensitive;
  t.groups = GroupHierarchy(g);

  const auto full_idx = build_group_index(g, GroupMode::full);
  t.pair_counts = full_idx.pair_counts;
  t.edge_counts = full_idx.edge_counts;

  if (!factorized) {
    t.full_ratios = detail::ratios_of(full_idx, alpha);
    t.nonsensitive_ratios = detail::ratios_of(build_group_index(g, GroupMode::nonsensitive), alpha);
  } else {
    t.full_ratios.assign(t.groups.full.n_keys(), 1.0);
    for (auto attr : g.schema().sensitive_attributes()) {
      const auto idx = build_group_index(g, {attr});
      const auto r = detail::ratios_of(idx, alpha);
      const auto parent = parent_profiles(t.groups.full, idx.grouping);
      for (GroupKey k = 0; k < t.full_ratios.size(); ++k) {
        auto [pu, pv] = t.groups.full.key_profiles(k);
        t.full_ratios[k] *= r[idx.grouping.key(parent[pu], parent[pv])];
      }
    }
    t.nonsensitive_ratios.assign(t.groups.nonsensitive.n_keys(), 1.0);
  }
  detail::fill_weights(t);
  return t;
}

/// Table holding the analytic ratios of a synthetic construction.
inline RatioTable ratio_table_from_truth(const TrueRatios& truth) {
  RatioTable t;
  t.alpha = 0.0;
  t.groups = truth.groups;
  t.n_nodes = truth.groups.full.n_nodes();
  t.sensitive = truth.sensitive;
  t.full_ratios = truth.full_ratios;
  t.nonsensitive_ratios = truth.nonsensitive_ratios;
  detail::fill_weights(t);
  return t;
}

struct EdgeWeight {
  double value = 1.0;
  bool zero_ratio = false;  // R(a_uv) = 0, weight reported as 0
};

/// Importance weight R~(a~_uv) / R(a_uv) for the ordered pair (u, v).
inline EdgeWeight edge_weight(const RatioTable& table, const AttributedGraph& g, NodeId u, NodeId v) {
  if (g.n_nodes() != table.n_nodes || (!table.sensitive.empty() && g.schema().sensitive != table.sensitive) ||
      g.n_attributes() != table.groups.full.attributes().size())
    throw ValidationError("edge_weight: ratio table was built for a different graph schema");
  if (u >= g.n_nodes() || v >= g.n_nodes()) throw ValidationError("edge_weight: node out of range");
  const auto k = table.full_key(u, v);
  return {table.weights[k], table.full_ratios[k] <= 0.0};
}

/// Audit export: key,R,R_tilde,weight,pair_count,edge_count.
inline void write_ratio_table_csv(const RatioTable& t, const AttributeSchema& schema, std::ostream& out) {
  out << "key,R,R_tilde,weight,pair_count,edge_count\n";
  char buf[64];
  auto num = [&](double x) {
    std::snprintf(buf, sizeof buf, "%.10g", x);
    return std::string(buf);
  };
  for (GroupKey k = 0; k < t.full_ratios.size(); ++k) {
    out << t.groups.full.key_label(k, schema) << ',' << num(t.full_ratios[k]) << ','
        << num(t.nonsensitive_ratios[t.groups.parent_key(k)]) << ',' << num(t.weights[k]) << ','
        << (t.pair_counts.empty() ? 0 : t.pair_counts[k]) << ','
        << (t.edge_counts.empty() ? 0 : t.edge_counts[k]) << '\n';
  }
}

// -----------------------------------------------------------------------------
// Group-score regularizer
// -----------------------------------------------------------------------------

/// A full key and its parent nonsensitive key.
struct GroupPair {
  GroupKey full_key = 0;
  GroupKey nonsensitive_key = 0;
  bool operator==(const GroupPair&) const = default;
};

/// Mean score over sampled member pairs of one group.
struct GroupScore {
  GroupKey key = 0;
  double q_value = 0.0;
  std::size_t sample_size = 0;
};

/// M = max(1, round(fraction * #full keys)) full keys drawn uniformly
/// without replacement, returned in ascending key order.
inline std::vector<GroupPair> sample_group_pairs(const GroupHierarchy& groups, double fraction,
                                                 std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ValidationError("group-pair fraction must be in (0, 1]");
  const std::size_t n_keys = groups.full.n_keys();
  if (n_keys == 0) return {};
  const auto m = std::min<std::size_t>(
      n_keys, std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n_keys)))));
  std::vector<GroupKey> keys(n_keys);
  for (GroupKey k = 0; k < n_keys; ++k) keys[k] = k;
  Rng rng(seed);
  for (std::size_t i = 0; i < m; ++i) {
    auto j = i + static_cast<std::size_t>(rng.below(n_keys - i));
    std::swap(keys[i], keys[j]);
  }
  keys.resize(m);
  std::sort(keys.begin(), keys.end());
  std::vector<GroupPair> out;
  out.reserve(m);
  for (auto k : keys) out.push_back({k, groups.parent_key(k)});
  return out;
}

inline std::vector<GroupPair> sample_group_pairs(const AttributedGraph& g, double fraction, std::uint64_t seed) {
  return sample_group_pairs(GroupHierarchy(g), fraction, seed);
}

/// d(term)/d(score(u, v)) for one sampled member pair.
struct PairGradient {
  NodeId u = 0, v = 0;
  double coeff = 0.0;
};

struct RegularizerResult {
  double value = 0.0;
  std::vector<PairGradient> gradients;
  std::vector<GroupScore> full_scores, nonsensitive_scores;
  std::size_t skipped_groups = 0;
};

namespace detail {

inline std::vector<std::pair<NodeId, NodeId>> sample_members(const Grouping& grp, GroupKey key,
                                                             std::size_t count, Rng& rng) {
  auto [pu, pv] = grp.key_profiles(key);
  auto mu = grp.members(pu);
  auto mv = grp.members(pv);
  std::vector<std::pair<NodeId, NodeId>> out;
  if (mu.empty() || mv.empty()) return out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i)
    out.emplace_back(mu[rng.below(mu.size())], mv[rng.below(mv.size())]);
  return out;
}

inline double sign_of(double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }

}  // namespace detail

/// Sum over sampled group pairs of |Q_full - Q_nonsensitive| (or the squared
/// difference when `squared`), where each Q is the mean score over
/// `pairs_per_group` member pairs drawn uniformly from the group's ordered
/// pair universe. Gradients are with respect to individual pair scores; at
/// an exact tie the absolute-value subgradient is 0.
template <typename ScoreFn>
RegularizerResult regularizer_term(ScoreFn&& score, const GroupHierarchy& groups,
                                   std::span<const GroupPair> sampled, std::size_t pairs_per_group,
                                   std::uint64_t seed, bool squared = false) {
  if (pairs_per_group == 0) throw ValidationError("pairs_per_group must be positive");
  RegularizerResult out;
  for (std::size_t i = 0; i < sampled.size(); ++i) {
    Rng full_rng(stream_seed(seed, stream::kRegularizer, i, 0));
    Rng ns_rng(stream_seed(seed, stream::kRegularizer, i, 1));
    auto full_pairs = detail::sample_members(groups.full, sampled[i].full_key, pairs_per_group, full_rng);
    auto ns_pairs =
        detail::sample_members(groups.nonsensitive, sampled[i].nonsensitive_key, pairs_per_group, ns_rng);
    if (full_pairs.empty() || ns_pairs.empty()) {
      ++out.skipped_groups;
      continue;
    }
    auto mean_score = [&](const auto& pairs) {
      double s = 0.0;
      for (auto [u, v] : pairs) s += score(u, v);
      return s / static_cast<double>(pairs.size());
    };
    const double q_full = mean_score(full_pairs);
    const double q_ns = mean_score(ns_pairs);
    out.full_scores.push_back({sampled[i].full_key, q_full, full_pairs.size()});
    out.nonsensitive_scores.push_back({sampled[i].nonsensitive_key, q_ns, ns_pairs.size()});
    const double diff = q_full - q_ns;
    const double outer = squared ? 2.0 * diff : detail::sign_of(diff);
    out.value += squared ? diff * diff : std::abs(diff);
    if (outer == 0.0) continue;
    for (auto [u, v] : full_pairs)
      out.gradients.push_back({u, v, outer / static_cast<double>(full_pairs.size())});
    for (auto [u, v] : ns_pairs)
      out.gradients.push_back({u, v, -outer / static_cast<double>(ns_pairs.size())});
  }
  return out;
}

// -----------------------------------------------------------------------------
// Unbiasedness identity
// -----------------------------------------------------------------------------

inline constexpr std::size_t kMaxEnumerableNodes = 64;

/// Exact check of the weighted-loss expectation identity on an enumerable
/// construction:
///   lhs = sum_{u,v} L(u,v) * w(u,v) * P_o(E_uv = 1)
///   rhs = sum_{u,v} L(u,v) * P_o~(E_uv = 1)
/// where P_o uses the planted ratios, P_o~ their sensitive-attribute
/// marginals, and w comes from `table`. `loss` is N x N row-major.
/// `max_nodes` may be raised for offline studies on larger constructions.
inline std::pair<double, double> verify_unbiased_expectation(const GenModelParams& params,
                                                             const RatioTable& table,
                                                             std::span<const double> loss,
                                                             std::size_t max_nodes = kMaxEnumerableNodes) {
  const std::size_t n = params.n_nodes();
  if (n > max_nodes) throw ValidationError("verify_unbiased_expectation: too many nodes to enumerate");
  if (loss.size() != n * n) throw ValidationError("verify_unbiased_expectation: loss table must be N x N");
  if (table.n_nodes != n) throw ValidationError("verify_unbiased_expectation: table/graph size mismatch");
  params.validate();
  const auto mask = table.sensitive.empty() ? params.schema.sensitive : table.sensitive;
  GroupHierarchy h(params.profiles, detail::schema_with_mask(params.schema, mask));
  const auto planted = detail::planted_by_key(params, h.full);
  const auto marginal = detail::marginal_by_ns_key(h, planted);
  const double total = params.total_weight();

  double lhs = 0.0, rhs = 0.0;
  for (NodeId u = 0; u < n; ++u) {
    for (NodeId v = 0; v < n; ++v) {
      if (u == v) continue;
      const double prior = std::min(1.0, params.weights[u] * params.weights[v] / total);
      const double p_obs = std::min(1.0, prior * planted[h.full.key_of(u, v)]);
      const double p_free = std::min(1.0, prior * marginal[h.nonsensitive.key_of(u, v)]);
      const double l = loss[u * n + v];
      lhs += l * table.weight(u, v) * p_obs;
      rhs += l * p_free;
    }
  }
  return {lhs, rhs};
}

}  // namespace uge
