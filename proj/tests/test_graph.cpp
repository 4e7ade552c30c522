#include <gtest/gtest.h>

#include <numeric>
#include <set>

#include "test_util.hpp"

using namespace uge;
using namespace uge::testing;

// ---- loading ----------------------------------------------------------------

TEST(LoadGraph, ThreeNodeFile) {
  auto dir = temp_dir("load3");
  write_text(dir / "e.txt", "1 2\n1 3\n");
  write_text(dir / "a.csv", "id,gender\n1,F\n2,F\n3,M\n");
  auto g = load_graph((dir / "e.txt").string(), (dir / "a.csv").string());
  EXPECT_EQ(g.n_nodes(), 3u);
  EXPECT_EQ(g.num_ordered_edges(), 4u);
  EXPECT_EQ(g.n_attributes(), 1u);
  EXPECT_EQ(g.original_id(0), "1");
  EXPECT_TRUE(g.has_edge(0, 1));
  EXPECT_TRUE(g.has_edge(2, 0));
  EXPECT_FALSE(g.has_edge(1, 2));
}

TEST(LoadGraph, DropsSelfLoopsAndDuplicatesWithCounts) {
  auto dir = temp_dir("selfloop");
  write_text(dir / "e.txt", "# comment\n1,2\n2 2\n2 1\n1 3\n");
  write_text(dir / "a.csv", "id,gender\n1,F\n2,F\n3,M\n");
  LoadReport rep;
  auto g = load_graph((dir / "e.txt").string(), (dir / "a.csv").string(), {}, &rep);
  EXPECT_EQ(rep.dropped.self_loops, 1u);
  EXPECT_EQ(rep.dropped.duplicates, 1u);
  EXPECT_EQ(g.num_edges(), 2u);
}

TEST(LoadGraph, DensifiesInAttributeFileOrder) {
  auto dir = temp_dir("dense");
  write_text(dir / "e.txt", "c a\n");
  write_text(dir / "a.csv", "id,x\nc,1\nb,2\na,1\n");
  auto g = load_graph((dir / "e.txt").string(), (dir / "a.csv").string());
  EXPECT_EQ(g.original_id(0), "c");
  EXPECT_EQ(g.original_id(1), "b");
  EXPECT_EQ(g.original_id(2), "a");
  EXPECT_TRUE(g.has_edge(0, 2));
  EXPECT_EQ(g.degree(1), 0u);
}

TEST(LoadGraph, Errors) {
  auto dir = temp_dir("errors");
  write_text(dir / "a.csv", "id,gender\n1,F\n2,M\n");
  write_text(dir / "unknown.txt", "1 9\n");
  write_text(dir / "empty.txt", "# nothing\n");
  write_text(dir / "loops.txt", "1 1\n");
  write_text(dir / "ok.txt", "1 2\n");
  write_text(dir / "ragged.csv", "id,gender\n1,F\n2\n");
  auto a = (dir / "a.csv").string();
  EXPECT_THROW(load_graph((dir / "unknown.txt").string(), a), ValidationError);
  EXPECT_THROW(load_graph((dir / "empty.txt").string(), a), ValidationError);
  EXPECT_THROW(load_graph((dir / "loops.txt").string(), a), ValidationError);
  EXPECT_THROW(load_graph((dir / "ok.txt").string(), (dir / "ragged.csv").string()), ValidationError);
  std::vector<std::string> bad{"age"};
  EXPECT_THROW(load_graph((dir / "ok.txt").string(), a, bad), ValidationError);
}

TEST(LoadGraph, SensitiveNamesSetMask) {
  auto dir = temp_dir("mask");
  write_text(dir / "e.txt", "1 2\n");
  write_text(dir / "a.csv", "id,gender,region\n1,F,x\n2,M,y\n");
  std::vector<std::string> s{"region"};
  auto g = load_graph((dir / "e.txt").string(), (dir / "a.csv").string(), s);
  EXPECT_EQ(g.schema().sensitive, (std::vector<bool>{false, true}));
}

// ---- canonical form and serialization ----------------------------------------

TEST(Graph, CanonicalAdjacencyIsSymmetricAndSorted) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto g = random_graph(30, 0.2, {2, 3}, seed);
    std::size_t total = 0;
    for (NodeId u = 0; u < g.n_nodes(); ++u) {
      auto nb = g.neighbors(u);
      total += nb.size();
      for (std::size_t i = 0; i < nb.size(); ++i) {
        EXPECT_NE(nb[i], u);
        if (i) {
          EXPECT_LT(nb[i - 1], nb[i]);
        }
        EXPECT_TRUE(g.has_edge(nb[i], u));
      }
    }
    EXPECT_EQ(total, 2 * g.num_edges());
  }
}

TEST(Graph, BinaryRoundTrip) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto g = random_graph(25 + seed, 0.15, {2, 4}, seed, {true, false});
    auto bytes = serialize_graph(g);
    auto h = deserialize_graph(bytes);
    EXPECT_EQ(g, h);
    EXPECT_EQ(serialize_graph(h), bytes);
  }
  auto dir = temp_dir("bin");
  auto g = t1_graph();
  save_graph_binary(g, (dir / "g.bin").string());
  EXPECT_EQ(load_graph_binary((dir / "g.bin").string()), g);
}

TEST(Graph, BinaryRejectsCorruptInput) {
  auto bytes = serialize_graph(t1_graph());
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(deserialize_graph(bad_magic), ValidationError);
  EXPECT_THROW(deserialize_graph(bytes.substr(0, bytes.size() - 3)), ValidationError);
}

TEST(Graph, TextRoundTrip) {
  auto dir = temp_dir("text");
  auto g = random_graph(40, 0.1, {3}, 7);
  write_graph_text(g, (dir / "e.txt").string(), (dir / "a.csv").string());
  auto h = load_graph((dir / "e.txt").string(), (dir / "a.csv").string());
  ASSERT_EQ(h.n_nodes(), g.n_nodes());
  for (NodeId u = 0; u < g.n_nodes(); ++u) {
    EXPECT_TRUE(std::ranges::equal(g.neighbors(u), h.neighbors(u)));
    EXPECT_EQ(g.schema().values[0][g.attribute(u, 0)], h.schema().values[0][h.attribute(u, 0)]);
  }
}

// ---- group index -----------------------------------------------------------

TEST(GroupIndex, T1FullMode) {
  auto g = t1_graph();
  auto idx = build_group_index(g, GroupMode::full);
  const auto& grp = idx.grouping;
  ASSERT_EQ(idx.n_keys(), 4u);
  // Oracle: enumerate all nine ordered pairs.
  std::map<std::string, std::pair<int, int>> expect;
  const char* gender = "FFM";
  for (NodeId u = 0; u < 3; ++u)
    for (NodeId v = 0; v < 3; ++v) {
      auto& e = expect[std::string(1, gender[u]) + "|" + std::string(1, gender[v])];
      ++e.first;
      e.second += g.has_edge(u, v);
    }
  EXPECT_EQ(expect["F|F"], std::make_pair(4, 2));
  EXPECT_EQ(expect["F|M"], std::make_pair(2, 1));
  EXPECT_EQ(expect["M|F"], std::make_pair(2, 1));
  EXPECT_EQ(expect["M|M"], std::make_pair(1, 0));
  for (GroupKey k = 0; k < idx.n_keys(); ++k) {
    auto [pairs, edges] = expect.at(grp.key_label(k, g.schema()));
    EXPECT_EQ(idx.pair_counts[k], static_cast<std::uint64_t>(pairs));
    EXPECT_EQ(idx.edge_counts[k], static_cast<std::uint64_t>(edges));
  }
}

TEST(GroupIndex, T1NonsensitiveModeIsOneGroup) {
  auto idx = build_group_index(t1_graph(), GroupMode::nonsensitive);
  ASSERT_EQ(idx.n_keys(), 1u);
  EXPECT_EQ(idx.pair_counts[0], 9u);
  EXPECT_EQ(idx.edge_counts[0], 4u);
}

TEST(GroupIndex, PartitionIdentitiesOnRandomGraphs) {
  Rng meta(99);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + meta.below(50);
    const std::size_t k = 1 + meta.below(3);
    std::vector<std::size_t> cards;
    std::vector<bool> sens;
    for (std::size_t a = 0; a < k; ++a) {
      cards.push_back(1 + meta.below(4));
      sens.push_back(meta.below(2) == 1);
    }
    auto g = random_graph(n, meta.uniform(), cards, meta.next(), sens);
    auto full = build_group_index(g, GroupMode::full);
    auto ns = build_group_index(g, GroupMode::nonsensitive);
    for (const auto* idx : {&full, &ns}) {
      EXPECT_EQ(std::accumulate(idx->pair_counts.begin(), idx->pair_counts.end(), std::uint64_t{0}), n * n);
      EXPECT_EQ(std::accumulate(idx->edge_counts.begin(), idx->edge_counts.end(), std::uint64_t{0}),
                g.num_ordered_edges());
    }
    // Every full key maps into exactly one nonsensitive key, and the
    // nonsensitive counts are sums of their children.
    GroupHierarchy h(g);
    std::vector<std::uint64_t> pairs(ns.n_keys(), 0), edges(ns.n_keys(), 0);
    for (GroupKey key = 0; key < full.n_keys(); ++key) {
      pairs[h.parent_key(key)] += full.pair_counts[key];
      edges[h.parent_key(key)] += full.edge_counts[key];
    }
    EXPECT_EQ(pairs, ns.pair_counts);
    EXPECT_EQ(edges, ns.edge_counts);
    for (NodeId u = 0; u < n; ++u)
      for (NodeId v = 0; v < n; ++v) EXPECT_EQ(h.parent_key(h.full.key_of(u, v)), h.nonsensitive.key_of(u, v));
  }
}

// ---- splits -----------------------------------------------------------------

namespace {

/// Star center 0 with four leaves inside an otherwise sparse 200-node graph.
AttributedGraph star_graph() {
  AttributeSchema s{{"g"}, {{"a"}}, {false}};
  std::vector<std::pair<NodeId, NodeId>> edges{{0, 1}, {0, 2}, {0, 3}, {0, 4}};
  for (NodeId u = 5; u + 1 < 200; u += 2) edges.emplace_back(u, u + 1);
  return AttributedGraph(s, std::vector<std::uint32_t>(200, 0), edges);
}

}  // namespace

TEST(Split, DegreeFourNodeCounts) {
  auto g = star_graph();
  auto s = split_edges(g, 0.9, 20, 1);
  const auto* e = s.find(0);
  ASSERT_NE(e, nullptr);
  EXPECT_EQ(e->train_pos.size(), 3u);
  EXPECT_EQ(e->test_pos.size(), 1u);
  EXPECT_EQ(e->train_neg.size(), 72u);
  EXPECT_EQ(e->test_neg.size(), 8u);
}

TEST(Split, EightyTwentyOnBipartite) {
  // Users 0..9 each rate items 10..14.
  AttributeSchema s{{"kind"}, {{"user", "item"}}, {false}};
  std::vector<std::uint32_t> codes(60, 1);
  for (int u = 0; u < 10; ++u) codes[u] = 0;
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (NodeId u = 0; u < 10; ++u)
    for (NodeId i = 10; i < 15; ++i) edges.emplace_back(u, i);
  AttributedGraph g(s, codes, edges);
  auto sp = split_edges(g, 0.8, 1, 3);
  std::size_t train = 0, test = 0;
  for (NodeId u = 0; u < 10; ++u) {
    train += sp.find(u)->train_pos.size();
    test += sp.find(u)->test_pos.size();
  }
  EXPECT_EQ(train, 40u);
  EXPECT_EQ(test, 10u);
}

TEST(Split, DeterministicAndThreadIndependent) {
  auto g = random_graph(120, 0.05, {2}, 5);
  auto a = split_edges(g, 0.9, 20, 42, 1);
  auto b = split_edges(g, 0.9, 20, 42, 1);
  auto c = split_edges(g, 0.9, 20, 42, 4);
  EXPECT_EQ(a.train_positives(), b.train_positives());
  EXPECT_EQ(a.test_negatives(), b.test_negatives());
  EXPECT_EQ(a.train_negatives(), c.train_negatives());
  EXPECT_EQ(a.test_positives(), c.test_positives());
  auto d = split_edges(g, 0.9, 20, 43, 1);
  EXPECT_NE(a.train_negatives(), d.train_negatives());
}

TEST(Split, IsAPartitionPerNode) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto g = random_graph(60, 0.1, {2}, seed);
    auto s = split_edges(g, 0.9, 5, seed);
    for (const auto& e : s.nodes) {
      std::multiset<NodeId> pos(e.train_pos.begin(), e.train_pos.end());
      pos.insert(e.test_pos.begin(), e.test_pos.end());
      auto nb = g.neighbors(e.node);
      EXPECT_EQ(pos, std::multiset<NodeId>(nb.begin(), nb.end()));
      // Disjoint whenever negatives could be drawn without replacement.
      if (5 * g.degree(e.node) <= g.n_nodes() - 1 - g.degree(e.node)) {
        std::set<NodeId> train_neg(e.train_neg.begin(), e.train_neg.end());
        for (NodeId v : e.test_neg) EXPECT_FALSE(train_neg.count(v));
      }
      EXPECT_EQ(e.train_neg.size() + e.test_neg.size(), 5 * g.degree(e.node));
      for (NodeId v : e.train_neg) {
        EXPECT_NE(v, e.node);
        EXPECT_FALSE(g.has_edge(e.node, v));
      }
    }
  }
}

TEST(Split, SkipsNodesAdjacentToEveryone) {
  AttributeSchema s{{"g"}, {{"a"}}, {false}};
  std::vector<std::pair<NodeId, NodeId>> edges{{0, 1}, {0, 2}, {0, 3}, {1, 2}};
  AttributedGraph g(s, {0, 0, 0, 0}, edges);
  auto sp = split_edges(g, 0.5, 1, 0);
  EXPECT_EQ(sp.skipped_nodes, 1u);
  EXPECT_EQ(sp.find(0), nullptr);
  EXPECT_NE(sp.find(1), nullptr);
}

TEST(Split, RejectsBadParameters) {
  auto g = t1_graph();
  EXPECT_THROW(split_edges(g, 0.0, 20, 0), ValidationError);
  EXPECT_THROW(split_edges(g, 1.0, 20, 0), ValidationError);
  EXPECT_THROW(split_edges(g, 0.5, 0, 0), ValidationError);
}
