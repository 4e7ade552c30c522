#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"

using namespace uge;
using namespace uge::testing;

namespace {

GroupKey key_by_label(const RatioTable& t, const AttributeSchema& s, const std::string& label) {
  for (GroupKey k = 0; k < t.full_ratios.size(); ++k)
    if (t.groups.full.key_label(k, s) == label) return k;
  throw std::runtime_error("no key " + label);
}

/// Brute-force smoothed ratio for the key of (u,v) under attribute subset
/// `attrs`: enumerates every ordered pair of the graph.
double oracle_ratio(const AttributedGraph& g, const std::vector<std::size_t>& attrs, NodeId u, NodeId v,
                    double alpha) {
  auto same_key = [&](NodeId a, NodeId b) {
    for (auto i : attrs)
      if (g.attribute(a, i) != g.attribute(u, i) || g.attribute(b, i) != g.attribute(v, i)) return false;
    return true;
  };
  std::set<std::vector<std::uint32_t>> profiles;
  for (NodeId a = 0; a < g.n_nodes(); ++a) {
    std::vector<std::uint32_t> p;
    for (auto i : attrs) p.push_back(g.attribute(a, i));
    profiles.insert(p);
  }
  const double n_keys = static_cast<double>(profiles.size() * profiles.size());
  double pairs = 0, edges = 0;
  for (NodeId a = 0; a < g.n_nodes(); ++a)
    for (NodeId b = 0; b < g.n_nodes(); ++b)
      if (same_key(a, b)) {
        pairs += 1;
        edges += g.has_edge(a, b);
      }
  const double n = static_cast<double>(g.n_nodes());
  const double e = static_cast<double>(g.num_ordered_edges());
  return ((edges + alpha) / (e + alpha * n_keys)) / ((pairs + alpha) / (n * n + alpha * n_keys));
}

}  // namespace

TEST(EstimateRatios, T1ExactValues) {
  auto g = t1_graph();
  auto t = estimate_ratios(g, false, 0.0);
  const auto& s = g.schema();
  EXPECT_NEAR(t.full_ratios[key_by_label(t, s, "F|F")], 1.125, 1e-15);
  EXPECT_NEAR(t.full_ratios[key_by_label(t, s, "F|M")], 1.125, 1e-15);
  EXPECT_NEAR(t.full_ratios[key_by_label(t, s, "M|F")], 1.125, 1e-15);
  EXPECT_EQ(t.full_ratios[key_by_label(t, s, "M|M")], 0.0);
  ASSERT_EQ(t.nonsensitive_ratios.size(), 1u);
  EXPECT_NEAR(t.nonsensitive_ratios[0], 1.0, 1e-15);
}

TEST(EdgeWeight, T1Values) {
  auto g = t1_graph();
  auto t = estimate_ratios(g, false, 0.0);
  auto w = edge_weight(t, g, 0, 1);
  EXPECT_NEAR(w.value, 1.0 / 1.125, 1e-15);
  EXPECT_FALSE(w.zero_ratio);
  auto z = edge_weight(t, g, 2, 2);
  EXPECT_EQ(z.value, 0.0);
  EXPECT_TRUE(z.zero_ratio);
}

TEST(EdgeWeight, SchemaMismatchRejected) {
  auto t = estimate_ratios(t1_graph(), false, 0.5);
  auto other = random_graph(5, 0.5, {2}, 1, {true});
  EXPECT_THROW(edge_weight(t, other, 0, 1), ValidationError);
  EXPECT_THROW(edge_weight(t, t1_graph(false), 0, 1), ValidationError);
}

TEST(EstimateRatios, NoSensitiveAttributesGiveUnitWeights) {
  auto g = random_graph(40, 0.2, {2, 3}, 9, {false, false});
  for (double alpha : {0.0, 0.5}) {
    auto t = estimate_ratios(g, false, alpha);
    EXPECT_EQ(t.full_ratios, t.nonsensitive_ratios);
    for (NodeId u = 0; u < g.n_nodes(); ++u)
      for (NodeId v = 0; v < g.n_nodes(); ++v) EXPECT_EQ(edge_weight(t, g, u, v).value, 1.0);
  }
}

TEST(EstimateRatios, SmoothedValuesMatchEnumerationOracle) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto g = random_graph(35, 0.15, {2, 3}, seed, {true, false});
    for (double alpha : {0.0, 0.5, 2.0}) {
      auto t = estimate_ratios(g, false, alpha);
      for (NodeId u = 0; u < g.n_nodes(); u += 3)
        for (NodeId v = 0; v < g.n_nodes(); v += 4) {
          const double r = oracle_ratio(g, {0, 1}, u, v, alpha);
          const double rt = oracle_ratio(g, {1}, u, v, alpha);
          EXPECT_NEAR(t.full_ratios[t.full_key(u, v)], r, 1e-12);
          EXPECT_NEAR(t.nonsensitive_ratios[t.nonsensitive_key(u, v)], rt, 1e-12);
          if (r > 0) {
            EXPECT_NEAR(edge_weight(t, g, u, v).value, rt / r, 1e-12);
          }
        }
    }
  }
}

TEST(EstimateRatios, FactorizedIsProductOfPerAttributeRatios) {
  auto g = random_graph(40, 0.2, {2, 3}, 4, {true, true});
  auto t = estimate_ratios(g, true, 0.5);
  for (double r : t.nonsensitive_ratios) EXPECT_EQ(r, 1.0);
  for (NodeId u = 0; u < g.n_nodes(); u += 5)
    for (NodeId v = 0; v < g.n_nodes(); v += 3) {
      const double r1 = oracle_ratio(g, {0}, u, v, 0.5);
      const double r2 = oracle_ratio(g, {1}, u, v, 0.5);
      EXPECT_NEAR(edge_weight(t, g, u, v).value, 1.0 / (r1 * r2), 1e-12);
    }
}

TEST(EstimateRatios, EstimatedConditionalDistributionsNormalize) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto g = random_graph(30, 0.2, {3, 2}, seed, {true, false});
    for (double alpha : {0.0, 0.5}) {
      auto t = estimate_ratios(g, false, alpha);
      const double n_keys = static_cast<double>(t.full_ratios.size());
      const double n2 = static_cast<double>(g.n_nodes() * g.n_nodes());
      // sum_c R(c) P(c) = sum_c P(c | edge) = 1.
      double total = 0;
      for (GroupKey k = 0; k < t.full_ratios.size(); ++k)
        total += t.full_ratios[k] * (static_cast<double>(t.pair_counts[k]) + alpha) / (n2 + alpha * n_keys);
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST(EstimateRatios, MirroredKeysAgreeOnSymmetricData) {
  auto g = random_graph(50, 0.2, {2, 2}, 8, {true, false});
  auto t = estimate_ratios(g, false, 0.5);
  const auto& grp = t.groups.full;
  for (GroupKey k = 0; k < grp.n_keys(); ++k) {
    auto [pu, pv] = grp.key_profiles(k);
    EXPECT_NEAR(t.full_ratios[k], t.full_ratios[grp.key(pv, pu)], 1e-12);
  }
}

TEST(EstimateRatios, RejectsNegativeAlpha) {
  EXPECT_THROW(estimate_ratios(t1_graph(), false, -0.1), ValidationError);
}

TEST(RatioTable, CsvExport) {
  auto g = t1_graph();
  std::ostringstream o;
  write_ratio_table_csv(estimate_ratios(g, false, 0.0), g.schema(), o);
  const auto text = o.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "key,R,R_tilde,weight,pair_count,edge_count");
  EXPECT_NE(text.find("F|F,1.125,1,0.8888888889,4,2"), std::string::npos);
  EXPECT_NE(text.find("M|M,0,1,0,1,0"), std::string::npos);
}

// ---- group sampling -----------------------------------------------------------

TEST(SampleGroupPairs, CountsAndDeterminism) {
  // Six profiles give 36 ordered keys; 10% rounds to 4.
  auto g = random_graph(80, 0.1, {2, 3}, 2, {true, false});
  GroupHierarchy h(g);
  ASSERT_EQ(h.full.n_keys(), 36u);
  auto a = sample_group_pairs(h, 0.1, 7);
  EXPECT_EQ(a.size(), 4u);
  EXPECT_EQ(a, sample_group_pairs(h, 0.1, 7));
  for (const auto& gp : a) EXPECT_EQ(gp.nonsensitive_key, h.parent_key(gp.full_key));
  auto all = sample_group_pairs(h, 1.0, 1);
  ASSERT_EQ(all.size(), 36u);
  for (GroupKey k = 0; k < 36; ++k) EXPECT_EQ(all[k].full_key, k);
  EXPECT_EQ(all, sample_group_pairs(h, 1.0, 2));
  EXPECT_EQ(sample_group_pairs(h, 0.001, 3).size(), 1u);
  EXPECT_THROW(sample_group_pairs(h, 0.0, 3), ValidationError);
  EXPECT_THROW(sample_group_pairs(h, 1.5, 3), ValidationError);
}

// ---- regularizer ------------------------------------------------------------

TEST(Regularizer, ConstantScoresGiveZero) {
  auto g = random_graph(30, 0.2, {2, 2}, 1, {true, false});
  GroupHierarchy h(g);
  auto pairs = sample_group_pairs(h, 1.0, 0);
  auto r = regularizer_term([](NodeId, NodeId) { return 0.37; }, h, pairs, 16, 5);
  EXPECT_EQ(r.value, 0.0);
  EXPECT_TRUE(r.gradients.empty());
  EXPECT_EQ(r.full_scores.size(), pairs.size());
}

TEST(Regularizer, SingleGroupPairValueAndSubgradient) {
  // Scorer returns 0.8 for the first 128 calls (the full-key sample) and 0.6
  // afterwards (the nonsensitive sample).
  auto g = t1_graph();
  GroupHierarchy h(g);
  std::vector<GroupPair> one{{0, h.parent_key(0)}};
  int calls = 0;
  auto scorer = [&](NodeId, NodeId) { return calls++ < 128 ? 0.8 : 0.6; };
  auto r = regularizer_term(scorer, h, one, 128, 3);
  EXPECT_NEAR(r.value, 0.2, 1e-12);
  ASSERT_EQ(r.gradients.size(), 256u);
  for (std::size_t i = 0; i < 128; ++i) EXPECT_DOUBLE_EQ(r.gradients[i].coeff, 1.0 / 128);
  for (std::size_t i = 128; i < 256; ++i) EXPECT_DOUBLE_EQ(r.gradients[i].coeff, -1.0 / 128);

  calls = 0;
  auto sq = regularizer_term(scorer, h, one, 128, 3, true);
  EXPECT_NEAR(sq.value, 0.04, 1e-12);
  EXPECT_NEAR(sq.gradients[0].coeff, 2 * 0.2 / 128, 1e-15);
}

TEST(Regularizer, TieHasZeroSubgradient) {
  auto g = t1_graph();
  GroupHierarchy h(g);
  std::vector<GroupPair> one{{1, h.parent_key(1)}};
  auto r = regularizer_term([](NodeId, NodeId) { return 1.5; }, h, one, 8, 0);
  EXPECT_EQ(r.value, 0.0);
  EXPECT_TRUE(r.gradients.empty());
}

TEST(Regularizer, NonNegativeAndDeterministic) {
  auto g = random_graph(40, 0.2, {2, 3}, 3, {true, false});
  GroupHierarchy h(g);
  auto pairs = sample_group_pairs(h, 0.5, 4);
  auto score = [](NodeId u, NodeId v) { return std::sin(0.3 * u + 0.7 * v); };
  auto a = regularizer_term(score, h, pairs, 32, 9);
  auto b = regularizer_term(score, h, pairs, 32, 9);
  EXPECT_GE(a.value, 0.0);
  EXPECT_GT(a.value, 0.0);
  EXPECT_EQ(a.value, b.value);
  ASSERT_EQ(a.gradients.size(), b.gradients.size());
  // Members come from the right groups.
  for (std::size_t i = 0; i < a.full_scores.size(); ++i) EXPECT_EQ(a.full_scores[i].sample_size, 32u);
}

// ---- unbiasedness identity ----------------------------------------------------

namespace {

GenModelParams three_node_construction() {
  GenModelParams p;
  p.schema = {{"gender"}, {{"F", "M"}}, {true}};
  p.weights = {1.0, 0.7, 1.3};
  p.profiles = {0, 0, 1};
  p.planted_ratios[{0, 0}] = 1.6;
  p.planted_ratios[{0, 1}] = 0.4;
  p.planted_ratios[{1, 1}] = 0.9;
  return p;
}

}  // namespace

TEST(UnbiasedExpectation, UnitRatiosTrivial) {
  auto p = three_node_construction();
  p.planted_ratios.clear();
  auto t = ratio_table_from_truth(compute_true_ratios(p, {true}));
  std::vector<double> loss{0, 1, 2, 3, 0, 5, 6, 7, 0};
  auto [lhs, rhs] = verify_unbiased_expectation(p, t, loss);
  EXPECT_NEAR(lhs, rhs, 1e-12);
}

TEST(UnbiasedExpectation, ThreeNodeConstructionExact) {
  auto p = three_node_construction();
  auto t = ratio_table_from_truth(compute_true_ratios(p, {true}));
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> loss(9);
    for (auto& l : loss) l = rng.uniform(-3, 3);
    auto [lhs, rhs] = verify_unbiased_expectation(p, t, loss);
    EXPECT_NEAR(lhs, rhs, 1e-10);
  }
}

TEST(UnbiasedExpectation, RejectsOversizedConstructions) {
  GenModelParams p;
  p.schema = {{"g"}, {{"a"}}, {true}};
  p.weights.assign(65, 1.0);
  p.profiles.assign(65, 0);
  auto t = ratio_table_from_truth(compute_true_ratios(p, {true}));
  std::vector<double> loss(65 * 65, 1.0);
  EXPECT_THROW(verify_unbiased_expectation(p, t, loss), ValidationError);
  EXPECT_NO_THROW(verify_unbiased_expectation(p, t, loss, 100));
}

TEST(UnbiasedExpectation, EstimatedRatioGapShrinksWithN) {
  // Relative gap of the identity under estimated ratios, averaged over seeds.
  std::vector<double> gaps;
  for (std::size_t n : {100u, 400u, 1600u}) {
    double gap = 0;
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      GeneratorSpec s;
      s.n_nodes = n;
      s.mean_degree = 10;
      s.attributes = {{"gender", {"F", "M"}, {0.5, 0.5}}, {"region", {"a", "b"}, {0.5, 0.5}}};
      s.ratios = {{"F;a|F;a", 2.0}, {"F;b|F;b", 2.0}, {"M;a|M;a", 2.0}, {"M;b|M;b", 2.0},
                  {"F;a|M;a", 0.5}, {"F;b|M;b", 0.5}, {"F;a|M;b", 0.5}, {"F;b|M;a", 0.5}};
      s.seed = seed;
      auto p = make_generator_params(s);
      p.schema.sensitive = {true, false};
      auto g = sample_biased_graph(p);
      auto t = estimate_ratios(g, false, 0.5);
      std::vector<double> loss(n * n);
      Rng rng(seed + 77);
      for (auto& l : loss) l = rng.uniform();
      auto [lhs, rhs] = verify_unbiased_expectation(p, t, loss, 2000);
      gap += std::abs(lhs - rhs) / rhs;
    }
    gaps.push_back(gap / 4);
  }
  EXPECT_GT(gaps[0], gaps[1]);
  EXPECT_GT(gaps[1], gaps[2]);
}
