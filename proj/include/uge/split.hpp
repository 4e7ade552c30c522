#pragma once

// Per-node link-prediction examples: positives are a node's neighbors,
// negatives are sampled non-neighbors, and both are split into train and
// test portions. Each node draws from its own stream keyed on
// (seed, node), so results do not depend on the number of worker threads.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <utility>
#include <vector>

#include "uge/common.hpp"
#include "uge/graph.hpp"

namespace uge {

struct NodeExamples {
  NodeId node = 0;
  std::vector<NodeId> train_pos, train_neg, test_pos, test_neg;
};

struct EdgeSplits {
  std::vector<NodeExamples> nodes;  // ascending node order
  std::size_t skipped_nodes = 0;    // nodes with no available negatives
  double train_frac = 0.9;
  std::uint32_t neg_ratio = 20;
  std::uint64_t seed = 0;

  using Pairs = std::vector<std::pair<NodeId, NodeId>>;

  Pairs train_positives() const { return collect(&NodeExamples::train_pos); }
  Pairs train_negatives() const { return collect(&NodeExamples::train_neg); }
  Pairs test_positives() const { return collect(&NodeExamples::test_pos); }
  Pairs test_negatives() const { return collect(&NodeExamples::test_neg); }

  /// Entry for node u, or nullptr if u produced no examples.
  const NodeExamples* find(NodeId u) const {
    auto it = std::lower_bound(nodes.begin(), nodes.end(), u,
                               [](const NodeExamples& e, NodeId x) { return e.node < x; });
    return (it != nodes.end() && it->node == u) ? &*it : nullptr;
  }

 private:
  Pairs collect(std::vector<NodeId> NodeExamples::*field) const {
    Pairs out;
    for (const auto& e : nodes)
      for (NodeId v : e.*field) out.emplace_back(e.node, v);
    return out;
  }
};

/// Number of items of a list of size n placed in the training portion.
inline std::size_t train_count(std::size_t n, double train_frac) {
  return static_cast<std::size_t>(std::floor(static_cast<double>(n) * train_frac + 1e-9));
}

/// Draws `count` non-neighbors of u (excluding u). Without replacement when
/// enough candidates exist, otherwise uniformly with replacement.
inline std::vector<NodeId> sample_non_neighbors(const AttributedGraph& g, NodeId u,
                                                std::size_t count, Rng& rng) {
  const std::size_t n = g.n_nodes();
  const auto nb = g.neighbors(u);
  const std::size_t available = n - 1 - nb.size();
  std::vector<NodeId> out;
  if (available == 0 || count == 0) return out;
  out.reserve(count);
  auto excluded = [&](NodeId v) { return v == u || std::binary_search(nb.begin(), nb.end(), v); };

  if (count > available) {
    while (out.size() < count) {
      auto v = static_cast<NodeId>(rng.below(n));
      if (!excluded(v)) out.push_back(v);
    }
  } else if (2 * count <= available) {
    std::set<NodeId> taken;
    while (out.size() < count) {
      auto v = static_cast<NodeId>(rng.below(n));
      if (!excluded(v) && taken.insert(v).second) out.push_back(v);
    }
  } else {
    std::vector<NodeId> pool;
    pool.reserve(available);
    for (NodeId v = 0; v < n; ++v)
      if (!excluded(v)) pool.push_back(v);
    for (std::size_t i = 0; i < count; ++i) {
      auto j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
      std::swap(pool[i], pool[j]);
      out.push_back(pool[i]);
    }
  }
  return out;
}

inline EdgeSplits split_edges(const AttributedGraph& g, double train_frac, std::uint32_t neg_ratio,
                              std::uint64_t seed, unsigned threads = 1) {
  if (!(train_frac > 0.0 && train_frac < 1.0))
    throw ValidationError("train_frac must lie strictly between 0 and 1");
  if (neg_ratio < 1) throw ValidationError("neg_ratio must be at least 1");

  const std::size_t n = g.n_nodes();
  std::vector<NodeExamples> per_node(n);
  std::vector<char> keep(n, 0), skipped(n, 0);
  parallel_for(n, threads, [&](std::size_t i) {
    const auto u = static_cast<NodeId>(i);
    const auto deg = g.degree(u);
    if (deg == 0) return;
    if (deg >= n - 1) {
      skipped[i] = 1;
      return;
    }
    Rng rng(stream_seed(seed, stream::kSplit, u));
    auto nb = g.neighbors(u);
    std::vector<NodeId> pos(nb.begin(), nb.end());
    auto neg = sample_non_neighbors(g, u, static_cast<std::size_t>(neg_ratio) * deg, rng);
    rng.shuffle(pos);
    rng.shuffle(neg);
    auto& e = per_node[i];
    e.node = u;
    const auto np = train_count(pos.size(), train_frac);
    const auto nn = train_count(neg.size(), train_frac);
    e.train_pos.assign(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(np));
    e.test_pos.assign(pos.begin() + static_cast<std::ptrdiff_t>(np), pos.end());
    e.train_neg.assign(neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(nn));
    e.test_neg.assign(neg.begin() + static_cast<std::ptrdiff_t>(nn), neg.end());
    keep[i] = 1;
  });

  EdgeSplits out;
  out.train_frac = train_frac;
  out.neg_ratio = neg_ratio;
  out.seed = seed;
  for (std::size_t i = 0; i < n; ++i) {
    if (keep[i]) out.nodes.push_back(std::move(per_node[i]));
    out.skipped_nodes += skipped[i];
  }
  return out;
}

}  // namespace uge
