#pragma once

// Evaluation: sensitive-attribute probe (Micro-F1), link-prediction
// NDCG@k over candidate lists, and group fairness of predicted edge
// probabilities (demographic parity, equalized opportunity).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uge/common.hpp"
#include "uge/embed.hpp"
#include "uge/graph.hpp"
#include "uge/split.hpp"

namespace uge {

// -----------------------------------------------------------------------------
// NDCG
// -----------------------------------------------------------------------------

/// NDCG@k of a ranked list of binary relevances (rank 1 first).
inline double ndcg_from_relevance(std::span<const int> ranked, std::size_t k) {
  double dcg = 0.0;
  std::size_t relevant = 0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (!ranked[i]) continue;
    ++relevant;
    if (i < k) dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  }
  double idcg = 0.0;
  for (std::size_t i = 0; i < std::min(k, relevant); ++i) idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  return idcg > 0 ? dcg / idcg : 0.0;
}

struct NdcgResult {
  double value = 0.0;
  std::size_t evaluated_nodes = 0;
};

/// For every node with test positives: the candidate list is its test
/// positives padded with uniformly sampled non-neighbors to `list_size`,
/// ranked by score descending with ties broken by node id ascending.
inline NdcgResult ndcg_at_k(const EmbeddingModel& model, const AttributedGraph& g, const EdgeSplits& splits,
                            std::size_t k = 10, std::size_t list_size = 100, std::uint64_t seed = 0,
                            unsigned threads = 1) {
  if (k == 0 || k > list_size) throw ValidationError("ndcg: need 0 < k <= list_size");
  if (model.n_nodes() != g.n_nodes()) throw ValidationError("ndcg: embedding/graph size mismatch");
  std::vector<double> per_node(splits.nodes.size(), 0.0);
  std::vector<char> used(splits.nodes.size(), 0);
  parallel_for(splits.nodes.size(), threads, [&](std::size_t i) {
    const auto& e = splits.nodes[i];
    if (e.test_pos.empty()) return;
    std::vector<NodeId> cand = e.test_pos;
    const std::size_t pad = list_size > cand.size() ? list_size - cand.size() : 0;
    Rng rng(stream_seed(seed, stream::kCandidates, e.node));
    auto neg = sample_non_neighbors(g, e.node, std::min(pad, g.n_nodes() - 1 - g.degree(e.node)), rng);
    std::vector<std::pair<double, NodeId>> scored;
    std::vector<char> is_pos;
    for (NodeId v : cand) scored.emplace_back(model.dot(e.node, v), v);
    for (NodeId v : neg) scored.emplace_back(model.dot(e.node, v), v);
    std::vector<std::size_t> idx(scored.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      if (scored[a].first != scored[b].first) return scored[a].first > scored[b].first;
      return scored[a].second < scored[b].second;
    });
    std::vector<int> rel(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) rel[r] = idx[r] < cand.size() ? 1 : 0;
    per_node[i] = ndcg_from_relevance(rel, k);
    used[i] = 1;
  });
  NdcgResult out;
  double sum = 0.0;
  for (std::size_t i = 0; i < per_node.size(); ++i)
    if (used[i]) {
      sum += per_node[i];
      ++out.evaluated_nodes;
    }
  if (out.evaluated_nodes == 0) throw RuntimeError("ndcg: no node has test positives");
  out.value = sum / static_cast<double>(out.evaluated_nodes);
  return out;
}

// -----------------------------------------------------------------------------
// Probe classifier
// -----------------------------------------------------------------------------

struct ProbeParams {
  double train_frac = 0.8;
  double l2 = 1e-4;
  double learning_rate = 0.1;
  std::size_t iterations = 500;
};

struct ProbeResult {
  double micro_f1 = 0.0;
  double accuracy = 0.0;
  std::size_t n_train = 0, n_test = 0, n_classes = 0;
};

/// Multinomial logistic regression (softmax, L2 penalty, full-batch gradient
/// descent on standardized features) trained on a label-stratified
/// `train_frac` of the rows; Micro-F1 on the rest. Features are n x dim
/// row-major.
inline ProbeResult probe_micro_f1(std::span<const double> features, std::size_t dim,
                                  std::span<const std::uint32_t> labels, const ProbeParams& params,
                                  std::uint64_t seed) {
  const std::size_t n = labels.size();
  if (dim == 0 || features.size() != n * dim) throw ValidationError("probe: feature matrix shape mismatch");
  // Stratified split: each label keeps its share in both portions.
  std::map<std::uint32_t, std::vector<std::size_t>> by_label;
  for (std::size_t r = 0; r < n; ++r) by_label[labels[r]].push_back(r);
  Rng rng(stream_seed(seed, stream::kProbe));
  std::vector<std::size_t> train_order, test_order;
  for (auto& [label, rows] : by_label) {
    rng.shuffle(rows);
    const std::size_t k = train_count(rows.size(), params.train_frac);
    train_order.insert(train_order.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(k));
    test_order.insert(test_order.end(), rows.begin() + static_cast<std::ptrdiff_t>(k), rows.end());
  }
  const std::size_t n_train = train_order.size();
  std::span<const std::size_t> train_rows(train_order);
  std::span<const std::size_t> test_rows(test_order);
  if (n_train == 0 || test_rows.empty()) throw ValidationError("probe: empty train or test portion");

  std::vector<std::uint32_t> classes;
  for (auto r : train_rows) classes.push_back(labels[r]);
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  if (classes.size() < 2) throw ValidationError("probe: training portion has fewer than two classes");
  const std::size_t c = classes.size();
  auto class_index = [&](std::uint32_t label) -> std::optional<std::size_t> {
    auto it = std::lower_bound(classes.begin(), classes.end(), label);
    if (it == classes.end() || *it != label) return std::nullopt;
    return static_cast<std::size_t>(it - classes.begin());
  };

  std::vector<double> mean(dim, 0.0), scale(dim, 0.0);
  for (auto r : train_rows)
    for (std::size_t j = 0; j < dim; ++j) mean[j] += features[r * dim + j];
  for (auto& m : mean) m /= static_cast<double>(n_train);
  for (auto r : train_rows)
    for (std::size_t j = 0; j < dim; ++j) {
      const double dv = features[r * dim + j] - mean[j];
      scale[j] += dv * dv;
    }
  for (auto& s : scale) {
    s = std::sqrt(s / static_cast<double>(n_train));
    s = s > 1e-12 ? 1.0 / s : 1.0;
  }
  const std::size_t width = dim + 1;  // trailing bias column
  auto feature_row = [&](std::size_t r, std::vector<double>& x) {
    for (std::size_t j = 0; j < dim; ++j) x[j] = (features[r * dim + j] - mean[j]) * scale[j];
    x[dim] = 1.0;
  };
  std::vector<std::vector<double>> x_train(n_train, std::vector<double>(width));
  std::vector<std::size_t> y_train(n_train);
  for (std::size_t i = 0; i < n_train; ++i) {
    feature_row(train_rows[i], x_train[i]);
    y_train[i] = *class_index(labels[train_rows[i]]);
  }

  std::vector<double> w(c * width, 0.0), grad(c * width), logits(c);
  auto softmax = [&](const std::vector<double>& x) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < c; ++k) {
      double s = 0.0;
      for (std::size_t j = 0; j < width; ++j) s += w[k * width + j] * x[j];
      logits[k] = s;
      mx = std::max(mx, s);
    }
    double z = 0.0;
    for (auto& l : logits) z += (l = std::exp(l - mx));
    for (auto& l : logits) l /= z;
  };
  const double inv_n = 1.0 / static_cast<double>(n_train);
  for (std::size_t it = 0; it < params.iterations; ++it) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t i = 0; i < n_train; ++i) {
      softmax(x_train[i]);
      for (std::size_t k = 0; k < c; ++k) {
        const double err = (logits[k] - (k == y_train[i] ? 1.0 : 0.0)) * inv_n;
        for (std::size_t j = 0; j < width; ++j) grad[k * width + j] += err * x_train[i][j];
      }
    }
    for (std::size_t k = 0; k < c; ++k)
      for (std::size_t j = 0; j < dim; ++j) grad[k * width + j] += params.l2 * w[k * width + j];
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= params.learning_rate * grad[i];
  }

  // Confusion counts; with one label per row, micro precision and recall
  // both reduce to accuracy.
  std::vector<double> x(width);
  std::size_t tp = 0, fp = 0, fn = 0, correct = 0;
  for (auto r : test_rows) {
    feature_row(r, x);
    softmax(x);
    const auto pred = static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    const auto truth = class_index(labels[r]);
    if (truth && *truth == pred) {
      ++tp;
      ++correct;
    } else {
      ++fp;
      ++fn;
    }
  }
  ProbeResult out;
  const double precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  const double recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  out.micro_f1 = precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
  out.accuracy = static_cast<double>(correct) / static_cast<double>(test_rows.size());
  out.n_train = n_train;
  out.n_test = test_rows.size();
  out.n_classes = c;
  if (std::abs(out.micro_f1 - out.accuracy) > 1e-12)
    throw RuntimeError("probe: Micro-F1 differs from accuracy for a single-label task");
  return out;
}

/// Mean Micro-F1 over `repeats` independent random train/test splits.
inline double probe_micro_f1_mean(std::span<const double> features, std::size_t dim,
                                  std::span<const std::uint32_t> labels, const ProbeParams& params,
                                  std::uint64_t seed, std::size_t repeats) {
  if (repeats == 0) throw ValidationError("probe: repeats must be positive");
  double sum = 0.0;
  for (std::size_t r = 0; r < repeats; ++r)
    sum += probe_micro_f1(features, dim, labels, params, stream_seed(seed, stream::kProbe, r)).micro_f1;
  return sum / static_cast<double>(repeats);
}

// -----------------------------------------------------------------------------
// Fairness
// -----------------------------------------------------------------------------

struct LabeledPair {
  NodeId u = 0, v = 0;
  bool positive = false;
};

/// Accumulated predicted probabilities of one endpoint-value group.
struct GroupRates {
  double prob_sum = 0.0;
  std::size_t pairs = 0;
  double pos_prob_sum = 0.0;
  std::size_t positives = 0;
};

struct FairnessResult {
  std::optional<double> dp, eo;  // absent when fewer than two groups qualify
  std::size_t dp_groups = 0, eo_groups = 0;
  std::size_t excluded_groups = 0;  // groups below min_group_pairs for DP
  std::size_t pairs = 0;
};

inline std::optional<double> max_pairwise_gap(const std::vector<double>& rates) {
  if (rates.size() < 2) return std::nullopt;
  double gap = 0.0;
  for (std::size_t i = 0; i < rates.size(); ++i)
    for (std::size_t j = i + 1; j < rates.size(); ++j) gap = std::max(gap, std::abs(rates[i] - rates[j]));
  return gap;
}

/// DP over groups with at least `min_group_pairs` pairs; EO over groups with
/// at least `min_group_pairs` positive pairs.
inline FairnessResult fairness_from_groups(std::span<const GroupRates> groups, std::size_t min_group_pairs) {
  if (min_group_pairs < 1) throw ValidationError("min_group_pairs must be >= 1");
  FairnessResult out;
  std::vector<double> pred_rates, tprs;
  for (const auto& g : groups) {
    out.pairs += g.pairs;
    if (g.pairs >= min_group_pairs)
      pred_rates.push_back(g.prob_sum / static_cast<double>(g.pairs));
    else
      ++out.excluded_groups;
    if (g.positives >= min_group_pairs) tprs.push_back(g.pos_prob_sum / static_cast<double>(g.positives));
  }
  out.dp_groups = pred_rates.size();
  out.eo_groups = tprs.size();
  out.dp = max_pairwise_gap(pred_rates);
  out.eo = max_pairwise_gap(tprs);
  return out;
}

/// Groups pairs by the unordered pair of endpoint values of attribute
/// `attr`; predicted probability is sigmoid(score).
inline FairnessResult fairness_dp_eo(const EmbeddingModel& model, const AttributedGraph& g,
                                     std::span<const LabeledPair> pairs, std::size_t attr,
                                     std::size_t min_group_pairs = 10) {
  if (attr >= g.n_attributes()) throw ValidationError("fairness: attribute index out of range");
  if (model.n_nodes() != g.n_nodes()) throw ValidationError("fairness: embedding/graph size mismatch");
  std::map<std::pair<std::uint32_t, std::uint32_t>, GroupRates> by_key;
  for (const auto& p : pairs) {
    auto a = g.attribute(p.u, attr);
    auto b = g.attribute(p.v, attr);
    auto& grp = by_key[{std::min(a, b), std::max(a, b)}];
    const double prob = sigmoid(model.dot(p.u, p.v));
    grp.prob_sum += prob;
    ++grp.pairs;
    if (p.positive) {
      grp.pos_prob_sum += prob;
      ++grp.positives;
    }
  }
  std::vector<GroupRates> groups;
  for (const auto& [key, rates] : by_key) groups.push_back(rates);
  return fairness_from_groups(groups, min_group_pairs);
}

/// Test positives and test negatives of a split as labeled pairs.
inline std::vector<LabeledPair> test_pairs(const EdgeSplits& splits) {
  std::vector<LabeledPair> out;
  for (const auto& e : splits.nodes) {
    for (NodeId v : e.test_pos) out.push_back({e.node, v, true});
    for (NodeId v : e.test_neg) out.push_back({e.node, v, false});
  }
  return out;
}

// -----------------------------------------------------------------------------
// Report
// -----------------------------------------------------------------------------

struct EvalParams {
  std::size_t k = 10;
  std::size_t list_size = 100;
  std::size_t min_group_pairs = 10;
  std::size_t probe_repeats = 5;
  ProbeParams probe;
};

struct AttributeMetrics {
  std::string attribute;
  double micro_f1 = 0.0;
  std::optional<double> dp, eo;
  std::size_t dp_groups = 0, eo_groups = 0, excluded_groups = 0;
};

struct EvalReport {
  std::string regime;
  double ndcg = 0.0;
  std::size_t evaluated_nodes = 0;
  std::size_t evaluated_pairs = 0;
  std::vector<AttributeMetrics> attributes;  // one per sensitive attribute
  std::string config_hash;
  std::uint64_t seed = 0;
};

/// Per-attribute probe and fairness metrics plus NDCG@k, all on the test
/// portion of `splits`.
inline EvalReport evaluate_model(const EmbeddingModel& model, const AttributedGraph& g, const EdgeSplits& splits,
                                 const EvalParams& params, std::uint64_t seed, unsigned threads = 1) {
  if (model.n_nodes() != g.n_nodes())
    throw ValidationError("embedding has " + std::to_string(model.n_nodes()) + " rows but the graph has " +
                          std::to_string(g.n_nodes()) + " nodes");
  EvalReport r;
  r.seed = seed;
  const auto nd = ndcg_at_k(model, g, splits, params.k, params.list_size, stream_seed(seed, stream::kCandidates),
                            threads);
  r.ndcg = nd.value;
  r.evaluated_nodes = nd.evaluated_nodes;
  const auto pairs = test_pairs(splits);
  r.evaluated_pairs = pairs.size();
  for (std::size_t a : g.schema().sensitive_attributes()) {
    AttributeMetrics m;
    m.attribute = g.schema().names[a];
    std::vector<std::uint32_t> labels(g.n_nodes());
    for (NodeId u = 0; u < g.n_nodes(); ++u) labels[u] = g.attribute(u, a);
    m.micro_f1 = probe_micro_f1_mean(model.data(), model.dim(), labels, params.probe,
                                     stream_seed(seed, stream::kProbe, a), params.probe_repeats);
    const auto f = fairness_dp_eo(model, g, pairs, a, params.min_group_pairs);
    m.dp = f.dp;
    m.eo = f.eo;
    m.dp_groups = f.dp_groups;
    m.eo_groups = f.eo_groups;
    m.excluded_groups = f.excluded_groups;
    r.attributes.push_back(std::move(m));
  }
  return r;
}

}  // namespace uge
