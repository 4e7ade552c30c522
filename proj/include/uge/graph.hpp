#pragma once

// Attributed undirected graph in canonical CSR form, plus text loaders and a
// little-endian binary save format.
//
// Binary layout (all integers little-endian):
//   magic      4 bytes  "UGEG"
//   version    u32      1
//   n_nodes    u64
//   n_attrs    u32
//   per attribute:
//     name       str    (u32 byte length, then bytes)
//     sensitive  u8
//     n_values   u32, then n_values x str
//   offsets    (n_nodes + 1) x u64
//   neighbors  offsets[n_nodes] x u32
//   codes      n_nodes * n_attrs x u32 (row-major, node by node)
//   ids        n_nodes x str

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "uge/common.hpp"

namespace uge {

/// Attribute names, per-attribute value dictionaries and the sensitive mask.
struct AttributeSchema {
  std::vector<std::string> names;
  std::vector<std::vector<std::string>> values;  // code -> category string
  std::vector<bool> sensitive;

  std::size_t size() const noexcept { return names.size(); }
  std::size_t cardinality(std::size_t attr) const { return values.at(attr).size(); }

  std::optional<std::size_t> index_of(std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return i;
    return std::nullopt;
  }

  std::optional<std::uint32_t> code_of(std::size_t attr, std::string_view value) const {
    const auto& dict = values.at(attr);
    for (std::size_t c = 0; c < dict.size(); ++c)
      if (dict[c] == value) return static_cast<std::uint32_t>(c);
    return std::nullopt;
  }

  std::vector<std::size_t> sensitive_attributes() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < size(); ++i)
      if (sensitive[i]) out.push_back(i);
    return out;
  }

  std::vector<std::size_t> nonsensitive_attributes() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < size(); ++i)
      if (!sensitive[i]) out.push_back(i);
    return out;
  }

  std::vector<std::size_t> all_attributes() const {
    std::vector<std::size_t> out(size());
    for (std::size_t i = 0; i < size(); ++i) out[i] = i;
    return out;
  }

  /// Marks exactly the named attributes as sensitive.
  void set_sensitive(std::span<const std::string> sensitive_names) {
    sensitive.assign(size(), false);
    for (const auto& name : sensitive_names) {
      auto idx = index_of(name);
      if (!idx) throw ValidationError("unknown sensitive attribute '" + name + "'");
      sensitive[*idx] = true;
    }
  }

  bool operator==(const AttributeSchema&) const = default;
};

/// Counters for edges discarded while canonicalizing an edge list.
struct CanonicalizeStats {
  std::size_t self_loops = 0;
  std::size_t duplicates = 0;
};

/// Immutable undirected attributed graph. Neighbor lists are strictly sorted,
/// symmetric, and free of self-loops.
class AttributedGraph {
 public:
  AttributedGraph() = default;

  /// Builds the canonical form from raw endpoint pairs over dense ids.
  /// Self-loops and duplicates (in either orientation) are dropped and
  /// counted in `stats`.
  AttributedGraph(AttributeSchema schema, std::vector<std::uint32_t> codes,
                  std::span<const std::pair<NodeId, NodeId>> edges,
                  std::vector<std::string> ids = {},
                  CanonicalizeStats* stats = nullptr)
      : schema_(std::move(schema)), codes_(std::move(codes)), ids_(std::move(ids)) {
    const std::size_t k = schema_.size();
    if (schema_.sensitive.size() != k || schema_.values.size() != k)
      throw ValidationError("attribute schema fields have inconsistent lengths");
    if (k == 0) {
      if (ids_.empty()) throw ValidationError("graph without attributes needs explicit ids");
      n_ = ids_.size();
    } else {
      if (codes_.size() % k != 0) throw ValidationError("attribute matrix is ragged");
      n_ = codes_.size() / k;
    }
    if (ids_.empty()) {
      ids_.reserve(n_);
      for (std::size_t u = 0; u < n_; ++u) ids_.push_back(std::to_string(u));
    }
    if (ids_.size() != n_) throw ValidationError("id table size does not match node count");
    for (std::size_t u = 0; u < n_; ++u)
      for (std::size_t a = 0; a < k; ++a)
        if (codes_[u * k + a] >= schema_.cardinality(a))
          throw ValidationError("attribute code out of range for '" + schema_.names[a] + "'");

    CanonicalizeStats local;
    std::vector<std::pair<NodeId, NodeId>> directed;
    directed.reserve(edges.size() * 2);
    for (auto [u, v] : edges) {
      if (u >= n_ || v >= n_) throw ValidationError("edge endpoint out of range");
      if (u == v) {
        ++local.self_loops;
        continue;
      }
      directed.emplace_back(u, v);
      directed.emplace_back(v, u);
    }
    std::sort(directed.begin(), directed.end());
    const auto before = directed.size();
    directed.erase(std::unique(directed.begin(), directed.end()), directed.end());
    local.duplicates = (before - directed.size()) / 2;

    offsets_.assign(n_ + 1, 0);
    for (auto [u, v] : directed) ++offsets_[u + 1];
    for (std::size_t u = 0; u < n_; ++u) offsets_[u + 1] += offsets_[u];
    neighbors_.resize(directed.size());
    for (std::size_t i = 0; i < directed.size(); ++i) neighbors_[i] = directed[i].second;
    if (stats) *stats = local;
  }

  /// Adopts an already-canonical CSR representation (used by the binary loader).
  static AttributedGraph from_csr(AttributeSchema schema, std::vector<std::uint32_t> codes,
                                  std::vector<std::uint64_t> offsets,
                                  std::vector<NodeId> neighbors,
                                  std::vector<std::string> ids) {
    AttributedGraph g;
    g.schema_ = std::move(schema);
    g.codes_ = std::move(codes);
    g.offsets_ = std::move(offsets);
    g.neighbors_ = std::move(neighbors);
    g.ids_ = std::move(ids);
    g.n_ = g.ids_.size();
    g.check_canonical();
    return g;
  }

  std::size_t n_nodes() const noexcept { return n_; }
  std::size_t num_edges() const noexcept { return neighbors_.size() / 2; }
  std::size_t num_ordered_edges() const noexcept { return neighbors_.size(); }
  std::size_t n_attributes() const noexcept { return schema_.size(); }

  std::span<const NodeId> neighbors(NodeId u) const {
    return {neighbors_.data() + offsets_[u], neighbors_.data() + offsets_[u + 1]};
  }
  std::size_t degree(NodeId u) const { return offsets_[u + 1] - offsets_[u]; }

  bool has_edge(NodeId u, NodeId v) const {
    auto nb = neighbors(u);
    return std::binary_search(nb.begin(), nb.end(), v);
  }

  std::uint32_t attribute(NodeId u, std::size_t attr) const {
    return codes_[u * schema_.size() + attr];
  }
  std::span<const std::uint32_t> attributes(NodeId u) const {
    return {codes_.data() + u * schema_.size(), schema_.size()};
  }

  const AttributeSchema& schema() const noexcept { return schema_; }
  std::span<const std::uint32_t> codes() const noexcept { return codes_; }
  std::span<const std::uint64_t> offsets() const noexcept { return offsets_; }
  std::span<const NodeId> adjacency() const noexcept { return neighbors_; }
  const std::string& original_id(NodeId u) const { return ids_.at(u); }
  const std::vector<std::string>& original_ids() const noexcept { return ids_; }

  /// Undirected edge list with u < v, in canonical order.
  std::vector<std::pair<NodeId, NodeId>> edge_list() const {
    std::vector<std::pair<NodeId, NodeId>> out;
    out.reserve(num_edges());
    for (NodeId u = 0; u < n_; ++u)
      for (NodeId v : neighbors(u))
        if (u < v) out.emplace_back(u, v);
    return out;
  }

  /// Copy of this graph with a different sensitive mask.
  AttributedGraph with_sensitive(std::span<const std::string> names) const {
    AttributedGraph g = *this;
    g.schema_.set_sensitive(names);
    return g;
  }

  bool operator==(const AttributedGraph&) const = default;

 private:
  void check_canonical() const {
    if (offsets_.size() != n_ + 1 || offsets_.front() != 0 || offsets_.back() != neighbors_.size())
      throw ValidationError("corrupt adjacency offsets");
    if (codes_.size() != n_ * schema_.size()) throw ValidationError("corrupt attribute matrix");
    for (NodeId u = 0; u < n_; ++u) {
      if (offsets_[u] > offsets_[u + 1]) throw ValidationError("corrupt adjacency offsets");
      auto nb = neighbors(u);
      for (std::size_t i = 0; i < nb.size(); ++i) {
        if (nb[i] >= n_ || nb[i] == u || (i > 0 && nb[i] <= nb[i - 1]))
          throw ValidationError("adjacency is not canonical");
        if (!has_edge(nb[i], u)) throw ValidationError("adjacency is not symmetric");
      }
    }
  }

  AttributeSchema schema_;
  std::vector<std::uint32_t> codes_;
  std::vector<std::uint64_t> offsets_{0};
  std::vector<NodeId> neighbors_;
  std::vector<std::string> ids_;
  std::size_t n_ = 0;
};

// -----------------------------------------------------------------------------
// Text loading
// -----------------------------------------------------------------------------

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto* ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    out.emplace_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace detail

struct LoadReport {
  CanonicalizeStats dropped;
  std::size_t edge_lines = 0;
};

/// Loads an edge list plus attribute table. Node ids are densified in the
/// order they appear in the attribute file.
inline AttributedGraph load_graph(const std::string& edge_path, const std::string& attr_path,
                                  std::span<const std::string> sensitive_names = {},
                                  LoadReport* report = nullptr) {
  std::ifstream attr_in(attr_path);
  if (!attr_in) throw ValidationError("cannot open attribute file " + attr_path);
  std::string line;
  if (!std::getline(attr_in, line)) throw ValidationError("attribute file is empty: " + attr_path);
  auto header = detail::split(line, ',');
  if (header.size() < 2) throw ValidationError("attribute header needs id plus at least one attribute");

  AttributeSchema schema;
  schema.names.assign(header.begin() + 1, header.end());
  const std::size_t k = schema.names.size();
  schema.values.resize(k);
  schema.sensitive.assign(k, false);
  std::vector<std::unordered_map<std::string, std::uint32_t>> dicts(k);
  std::unordered_map<std::string, NodeId> dense;
  std::vector<std::string> ids;
  std::vector<std::uint32_t> codes;

  std::size_t line_no = 1;
  while (std::getline(attr_in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto fields = detail::split(line, ',');
    if (fields.size() != k + 1)
      throw ValidationError(attr_path + ":" + std::to_string(line_no) + ": expected " +
                            std::to_string(k + 1) + " fields, got " + std::to_string(fields.size()));
    if (!dense.emplace(fields[0], static_cast<NodeId>(ids.size())).second)
      throw ValidationError(attr_path + ":" + std::to_string(line_no) + ": duplicate node id " + fields[0]);
    ids.push_back(fields[0]);
    for (std::size_t a = 0; a < k; ++a) {
      auto [it, inserted] =
          dicts[a].emplace(fields[a + 1], static_cast<std::uint32_t>(schema.values[a].size()));
      if (inserted) schema.values[a].push_back(fields[a + 1]);
      codes.push_back(it->second);
    }
  }
  if (ids.empty()) throw ValidationError("attribute file has no nodes: " + attr_path);
  schema.set_sensitive(sensitive_names);

  std::ifstream edge_in(edge_path);
  if (!edge_in) throw ValidationError("cannot open edge file " + edge_path);
  std::vector<std::pair<NodeId, NodeId>> edges;
  LoadReport local;
  line_no = 0;
  while (std::getline(edge_in, line)) {
    ++line_no;
    auto body = detail::trim(line);
    if (body.empty() || body.front() == '#') continue;
    std::string normalized(body);
    std::replace(normalized.begin(), normalized.end(), ',', ' ');
    std::istringstream fields(normalized);
    std::string a, b, extra;
    if (!(fields >> a >> b) || (fields >> extra))
      throw ValidationError(edge_path + ":" + std::to_string(line_no) + ": expected two node ids");
    auto ia = dense.find(a);
    auto ib = dense.find(b);
    if (ia == dense.end() || ib == dense.end())
      throw ValidationError(edge_path + ":" + std::to_string(line_no) + ": unknown node id " +
                            (ia == dense.end() ? a : b));
    edges.emplace_back(ia->second, ib->second);
    ++local.edge_lines;
  }
  if (edges.empty()) throw ValidationError("edge file has no edges: " + edge_path);

  AttributedGraph g(std::move(schema), std::move(codes), edges, std::move(ids), &local.dropped);
  if (g.num_edges() == 0) throw ValidationError("edge file has no edges after canonicalization");
  if (report) *report = local;
  return g;
}

/// Writes the edge list (one "u v" line per undirected edge, original ids)
/// and the attribute table consumed by load_graph.
inline void write_graph_text(const AttributedGraph& g, const std::string& edge_path,
                             const std::string& attr_path) {
  std::ofstream edges(edge_path);
  if (!edges) throw RuntimeError("cannot write " + edge_path);
  for (auto [u, v] : g.edge_list())
    edges << g.original_id(u) << ' ' << g.original_id(v) << '\n';
  std::ofstream attrs(attr_path);
  if (!attrs) throw RuntimeError("cannot write " + attr_path);
  attrs << "id";
  for (const auto& name : g.schema().names) attrs << ',' << name;
  attrs << '\n';
  for (NodeId u = 0; u < g.n_nodes(); ++u) {
    attrs << g.original_id(u);
    for (std::size_t a = 0; a < g.n_attributes(); ++a)
      attrs << ',' << g.schema().values[a][g.attribute(u, a)];
    attrs << '\n';
  }
}

// -----------------------------------------------------------------------------
// Binary format
// -----------------------------------------------------------------------------

namespace detail {

class ByteWriter {
 public:
  template <typename T>
  void put(T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i)
      bytes_.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xff));
  }
  void put_str(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }
  void raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  const std::string& bytes() const noexcept { return bytes_; }

 private:
  std::string bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string bytes) : bytes_(std::move(bytes)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }
  std::string get_str() {
    auto len = get<std::uint32_t>();
    need(len);
    std::string s = bytes_.substr(pos_, len);
    pos_ += len;
    return s;
  }
  std::string raw(std::size_t len) {
    need(len);
    std::string s = bytes_.substr(pos_, len);
    pos_ += len;
    return s;
  }
  bool done() const noexcept { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw ValidationError("truncated graph file");
  }
  std::string bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline constexpr std::string_view kGraphMagic = "UGEG";
inline constexpr std::uint32_t kGraphVersion = 1;

inline std::string serialize_graph(const AttributedGraph& g) {
  detail::ByteWriter w;
  w.raw(kGraphMagic);
  w.put<std::uint32_t>(kGraphVersion);
  w.put<std::uint64_t>(g.n_nodes());
  const auto& schema = g.schema();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(schema.size()));
  for (std::size_t a = 0; a < schema.size(); ++a) {
    w.put_str(schema.names[a]);
    w.put<std::uint8_t>(schema.sensitive[a] ? 1 : 0);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(schema.values[a].size()));
    for (const auto& v : schema.values[a]) w.put_str(v);
  }
  for (auto off : g.offsets()) w.put<std::uint64_t>(off);
  for (auto v : g.adjacency()) w.put<std::uint32_t>(v);
  for (auto c : g.codes()) w.put<std::uint32_t>(c);
  for (const auto& id : g.original_ids()) w.put_str(id);
  return w.bytes();
}

inline AttributedGraph deserialize_graph(std::string bytes) {
  detail::ByteReader r(std::move(bytes));
  if (r.raw(kGraphMagic.size()) != kGraphMagic) throw ValidationError("not a graph file (bad magic)");
  if (r.get<std::uint32_t>() != kGraphVersion) throw ValidationError("unsupported graph file version");
  const auto n = r.get<std::uint64_t>();
  AttributeSchema schema;
  const auto k = r.get<std::uint32_t>();
  for (std::uint32_t a = 0; a < k; ++a) {
    schema.names.push_back(r.get_str());
    schema.sensitive.push_back(r.get<std::uint8_t>() != 0);
    const auto nv = r.get<std::uint32_t>();
    auto& vals = schema.values.emplace_back();
    for (std::uint32_t i = 0; i < nv; ++i) vals.push_back(r.get_str());
  }
  std::vector<std::uint64_t> offsets(n + 1);
  for (auto& o : offsets) o = r.get<std::uint64_t>();
  std::vector<NodeId> adj(offsets.back());
  for (auto& v : adj) v = r.get<std::uint32_t>();
  std::vector<std::uint32_t> codes(n * k);
  for (auto& c : codes) c = r.get<std::uint32_t>();
  std::vector<std::string> ids(n);
  for (auto& id : ids) id = r.get_str();
  if (!r.done()) throw ValidationError("trailing bytes in graph file");
  for (std::size_t i = 0; i < codes.size(); ++i)
    if (codes[i] >= schema.values[i % k].size()) throw ValidationError("attribute code out of range");
  return AttributedGraph::from_csr(std::move(schema), std::move(codes), std::move(offsets),
                                   std::move(adj), std::move(ids));
}

inline void save_graph_binary(const AttributedGraph& g, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write " + path);
  const auto bytes = serialize_graph(g);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline AttributedGraph load_graph_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_graph(std::move(bytes));
}

}  // namespace uge
