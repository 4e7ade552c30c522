#pragma once

// Grouping of nodes and ordered node pairs by attribute-value combination.
//
// A node's *profile* is its tuple of codes over a chosen attribute subset.
// The combination key of an ordered pair (u, v) is the pair of profiles
// (profile(u), profile(v)), stored densely as profile(u) * P + profile(v).
// Pair statistics use the ordered-pair universe V x V including self-pairs,
// so per-key pair counts sum to N^2 and edge counts sum to 2|E|.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "uge/common.hpp"
#include "uge/graph.hpp"

namespace uge {

using ProfileId = std::uint32_t;
using GroupKey = std::uint32_t;

class Grouping {
 public:
  Grouping() = default;

  /// Groups the n rows of a row-major code matrix with `width` columns by
  /// their codes over `attrs`. Profiles are numbered in lexicographic order
  /// of their code tuples.
  Grouping(std::span<const std::uint32_t> codes, std::size_t width,
           std::vector<std::size_t> attrs)
      : attrs_(std::move(attrs)) {
    const std::size_t n = width == 0 ? 0 : codes.size() / width;
    std::map<std::vector<std::uint32_t>, ProfileId> ids;
    std::vector<std::vector<std::uint32_t>> node_profiles(n);
    for (std::size_t u = 0; u < n; ++u) {
      auto& p = node_profiles[u];
      p.reserve(attrs_.size());
      for (auto a : attrs_) p.push_back(codes[u * width + a]);
      ids.emplace(p, 0);
    }
    ProfileId next = 0;
    for (auto& [codes_of, id] : ids) {
      id = next++;
      profile_codes_.push_back(codes_of);
    }
    profile_of_.resize(n);
    counts_.assign(profile_codes_.size(), 0);
    for (std::size_t u = 0; u < n; ++u) {
      profile_of_[u] = ids.at(node_profiles[u]);
      ++counts_[profile_of_[u]];
    }
    member_offsets_.assign(profile_codes_.size() + 1, 0);
    for (std::size_t p = 0; p < counts_.size(); ++p)
      member_offsets_[p + 1] = member_offsets_[p] + counts_[p];
    members_.resize(n);
    auto cursor = member_offsets_;
    for (std::size_t u = 0; u < n; ++u) members_[cursor[profile_of_[u]]++] = static_cast<NodeId>(u);
  }

  Grouping(const AttributedGraph& g, std::vector<std::size_t> attrs)
      : Grouping(g.codes(), g.n_attributes(), std::move(attrs)) {}

  std::size_t n_nodes() const noexcept { return profile_of_.size(); }
  std::size_t n_profiles() const noexcept { return profile_codes_.size(); }
  std::size_t n_keys() const noexcept { return n_profiles() * n_profiles(); }
  const std::vector<std::size_t>& attributes() const noexcept { return attrs_; }

  ProfileId profile_of(NodeId u) const { return profile_of_[u]; }
  const std::vector<std::uint32_t>& profile_codes(ProfileId p) const { return profile_codes_[p]; }
  std::uint64_t count(ProfileId p) const { return counts_[p]; }
  std::span<const NodeId> members(ProfileId p) const {
    return {members_.data() + member_offsets_[p], members_.data() + member_offsets_[p + 1]};
  }

  GroupKey key(ProfileId pu, ProfileId pv) const {
    return static_cast<GroupKey>(pu * n_profiles() + pv);
  }
  GroupKey key_of(NodeId u, NodeId v) const { return key(profile_of_[u], profile_of_[v]); }
  std::pair<ProfileId, ProfileId> key_profiles(GroupKey k) const {
    return {static_cast<ProfileId>(k / n_profiles()), static_cast<ProfileId>(k % n_profiles())};
  }

  /// Profile id for a code tuple over attributes(), if any node has it.
  std::optional<ProfileId> find_profile(std::span<const std::uint32_t> codes) const {
    for (ProfileId p = 0; p < n_profiles(); ++p)
      if (std::equal(codes.begin(), codes.end(), profile_codes_[p].begin(), profile_codes_[p].end()))
        return p;
    return std::nullopt;
  }

  /// "F;A" style label; "*" when the attribute subset is empty.
  std::string profile_label(ProfileId p, const AttributeSchema& schema) const {
    if (attrs_.empty()) return "*";
    std::string out;
    for (std::size_t i = 0; i < attrs_.size(); ++i) {
      if (i) out += ';';
      out += schema.values[attrs_[i]][profile_codes_[p][i]];
    }
    return out;
  }

  /// "F;A|M;B" style label for a combination key.
  std::string key_label(GroupKey k, const AttributeSchema& schema) const {
    auto [pu, pv] = key_profiles(k);
    return profile_label(pu, schema) + "|" + profile_label(pv, schema);
  }

 private:
  std::vector<std::size_t> attrs_;
  std::vector<ProfileId> profile_of_;
  std::vector<std::vector<std::uint32_t>> profile_codes_;
  std::vector<std::uint64_t> counts_;
  std::vector<std::uint64_t> member_offsets_{0};
  std::vector<NodeId> members_;
};

/// For each profile of `fine`, the profile of `coarse` containing it. The
/// coarse attribute set must be a subset of the fine one.
inline std::vector<ProfileId> parent_profiles(const Grouping& fine, const Grouping& coarse) {
  std::vector<ProfileId> parent(fine.n_profiles());
  for (ProfileId p = 0; p < fine.n_profiles(); ++p)
    parent[p] = coarse.profile_of(fine.members(p).front());
  return parent;
}

enum class GroupMode { full, nonsensitive };

/// Full and nonsensitive groupings of one attribute table, with the map from
/// full profiles to their nonsensitive parents.
struct GroupHierarchy {
  Grouping full;
  Grouping nonsensitive;
  std::vector<ProfileId> parent;

  GroupHierarchy() = default;
  GroupHierarchy(std::span<const std::uint32_t> codes, const AttributeSchema& schema)
      : full(codes, schema.size(), schema.all_attributes()),
        nonsensitive(codes, schema.size(), schema.nonsensitive_attributes()),
        parent(parent_profiles(full, nonsensitive)) {}
  explicit GroupHierarchy(const AttributedGraph& g) : GroupHierarchy(g.codes(), g.schema()) {}

  GroupKey parent_key(GroupKey full_key) const {
    auto [pu, pv] = full.key_profiles(full_key);
    return nonsensitive.key(parent[pu], parent[pv]);
  }
};

struct GroupIndex {
  GroupMode mode = GroupMode::full;
  Grouping grouping;
  std::vector<std::uint64_t> pair_counts;  // per key, over V x V with self-pairs
  std::vector<std::uint64_t> edge_counts;  // per key, over ordered edges
  std::uint64_t total_pairs = 0;
  std::uint64_t total_edges = 0;

  std::size_t n_keys() const noexcept { return pair_counts.size(); }
  GroupKey key_of(NodeId u, NodeId v) const { return grouping.key_of(u, v); }
};

/// Pair counts come from profile sizes (|p| * |q|); edge counts from one
/// pass over the ordered edges.
inline GroupIndex build_group_index(const AttributedGraph& g, std::vector<std::size_t> attrs,
                                    GroupMode mode = GroupMode::full) {
  GroupIndex idx;
  idx.mode = mode;
  idx.grouping = Grouping(g, std::move(attrs));
  const auto& grp = idx.grouping;
  idx.pair_counts.assign(grp.n_keys(), 0);
  idx.edge_counts.assign(grp.n_keys(), 0);
  for (ProfileId p = 0; p < grp.n_profiles(); ++p)
    for (ProfileId q = 0; q < grp.n_profiles(); ++q)
      idx.pair_counts[grp.key(p, q)] = grp.count(p) * grp.count(q);
  for (NodeId u = 0; u < g.n_nodes(); ++u)
    for (NodeId v : g.neighbors(u)) ++idx.edge_counts[grp.key_of(u, v)];
  idx.total_pairs = static_cast<std::uint64_t>(g.n_nodes()) * g.n_nodes();
  idx.total_edges = g.num_ordered_edges();
  return idx;
}

inline GroupIndex build_group_index(const AttributedGraph& g, GroupMode mode) {
  return build_group_index(g,
                           mode == GroupMode::full ? g.schema().all_attributes()
                                                   : g.schema().nonsensitive_attributes(),
                           mode);
}

}  // namespace uge
