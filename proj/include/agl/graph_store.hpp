// Copyright 2026 The agl-desk Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Attributed directed graphs: node/edge tables, the immutable Graph view,
// synthetic fixtures and the canonical GraphFeature text record.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "agl/error.hpp"
#include "agl/io_util.hpp"

namespace agl {

using NodeId = std::uint64_t;

/// Immutable feature vector with shared storage. Copies are cheap, which
/// matters when the same node appears in thousands of neighborhoods.
class FeatureRow {
 public:
  FeatureRow() = default;
  explicit FeatureRow(std::vector<float> values)
      : data_(values.empty() ? nullptr
                             : std::make_shared<const std::vector<float>>(std::move(values))) {}
  FeatureRow(std::initializer_list<float> values) : FeatureRow(std::vector<float>(values)) {}

  std::span<const float> values() const {
    return data_ ? std::span<const float>(*data_) : std::span<const float>();
  }
  std::size_t size() const { return data_ ? data_->size() : 0; }
  float operator[](std::size_t i) const { return (*data_)[i]; }

  friend bool operator==(const FeatureRow& a, const FeatureRow& b) {
    if (a.data_ == b.data_) return true;
    auto x = a.values();
    auto y = b.values();
    return x.size() == y.size() &&
           std::equal(x.begin(), x.end(), y.begin(), [](float p, float q) {
             return std::bit_cast<std::uint32_t>(p) == std::bit_cast<std::uint32_t>(q);
           });
  }

 private:
  std::shared_ptr<const std::vector<float>> data_;
};

struct NodeRecord {
  NodeId id = 0;
  FeatureRow features;

  friend bool operator==(const NodeRecord&, const NodeRecord&) = default;
};

/// Directed edge src -> dst; the dst node aggregates along it.
struct EdgeRecord {
  NodeId src = 0;
  NodeId dst = 0;
  float weight = 1.0f;
  FeatureRow features;

  friend bool operator==(const EdgeRecord&, const EdgeRecord&) = default;
};

/// Canonical edge order: by destination, then source.
inline bool edge_order(const EdgeRecord& a, const EdgeRecord& b) {
  return std::pair(a.dst, a.src) < std::pair(b.dst, b.src);
}

using NodeIdSet = std::unordered_set<NodeId>;

namespace detail {

inline void append_features(std::string& out, const FeatureRow& row) {
  for (float v : row.values()) {
    out.push_back('\t');
    append_float(out, v);
  }
}

inline std::vector<float> parse_features(std::span<const std::string_view> fields,
                                         std::size_t line_no) {
  std::vector<float> values(fields.size());
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (!parse_float(fields[i], values[i])) {
      raise(ErrorKind::kParse, "line " + std::to_string(line_no) + ": bad real '" +
                                   std::string(fields[i]) + "'");
    }
  }
  return values;
}

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    std::string_view line = strip_cr(text.substr(start, end - start));
    if (!line.empty()) fn(line, line_no);
    start = end + 1;
  }
}

}  // namespace detail

// Node and edge tables ---------------------------------------------------------

/// Parses `<id>\t<f1>...\t<fd>` rows. With no dim given, the first row fixes it.
inline std::vector<NodeRecord> parse_node_table(std::string_view text,
                                                std::optional<std::size_t> dim) {
  std::vector<NodeRecord> nodes;
  NodeIdSet seen;
  detail::for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    auto fields = split(line, '\t');
    NodeId id = 0;
    if (!parse_u64(fields[0], id)) {
      raise(ErrorKind::kParse, "line " + std::to_string(line_no) + ": bad node id '" +
                                   std::string(fields[0]) + "'");
    }
    if (!dim) dim = fields.size() - 1;
    if (fields.size() - 1 != *dim) {
      raise(ErrorKind::kSchema, "line " + std::to_string(line_no) + ": expected " +
                                    std::to_string(*dim) + " node features, got " +
                                    std::to_string(fields.size() - 1));
    }
    if (!seen.insert(id).second) {
      raise(ErrorKind::kDuplicateNode, "node " + std::to_string(id) + " at line " +
                                           std::to_string(line_no));
    }
    auto values = detail::parse_features(std::span(fields).subspan(1), line_no);
    nodes.push_back({id, FeatureRow(std::move(values))});
  });
  return nodes;
}

inline std::vector<NodeRecord> load_node_table(const std::filesystem::path& path,
                                               std::optional<std::size_t> dim) {
  return parse_node_table(read_file(path), dim);
}

inline NodeIdSet node_id_set(std::span<const NodeRecord> nodes) {
  NodeIdSet ids;
  ids.reserve(nodes.size());
  for (const auto& n : nodes) ids.insert(n.id);
  return ids;
}

/// Parses `<src>\t<dst>\t<weight>\t<f1>...` rows against a known node set.
inline std::vector<EdgeRecord> parse_edge_table(std::string_view text,
                                                std::optional<std::size_t> dim,
                                                const NodeIdSet& nodes) {
  std::vector<EdgeRecord> edges;
  std::set<std::pair<NodeId, NodeId>> seen;
  detail::for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    auto fields = split(line, '\t');
    auto where = "line " + std::to_string(line_no);
    if (fields.size() < 3) raise(ErrorKind::kSchema, where + ": edge rows need src, dst, weight");
    EdgeRecord e;
    if (!parse_u64(fields[0], e.src) || !parse_u64(fields[1], e.dst)) {
      raise(ErrorKind::kParse, where + ": bad endpoint id");
    }
    if (!parse_float(fields[2], e.weight)) raise(ErrorKind::kParse, where + ": bad weight");
    if (!(e.weight > 0.0f)) {
      raise(ErrorKind::kInvalidWeight, where + ": weight must be > 0, got " + std::string(fields[2]));
    }
    if (!dim) dim = fields.size() - 3;
    if (fields.size() - 3 != *dim) {
      raise(ErrorKind::kSchema, where + ": expected " + std::to_string(*dim) +
                                    " edge features, got " + std::to_string(fields.size() - 3));
    }
    if (!nodes.contains(e.src) || !nodes.contains(e.dst)) {
      raise(ErrorKind::kDanglingEdge, where + ": edge " + std::to_string(e.src) + "->" +
                                          std::to_string(e.dst) + " references unknown node");
    }
    if (!seen.emplace(e.src, e.dst).second) {
      raise(ErrorKind::kDuplicateEdge, where + ": duplicate edge " + std::to_string(e.src) +
                                           "->" + std::to_string(e.dst));
    }
    e.features = FeatureRow(detail::parse_features(std::span(fields).subspan(3), line_no));
    edges.push_back(std::move(e));
  });
  return edges;
}

inline std::vector<EdgeRecord> load_edge_table(const std::filesystem::path& path,
                                               std::optional<std::size_t> dim,
                                               const NodeIdSet& nodes) {
  return parse_edge_table(read_file(path), dim, nodes);
}

inline void append_node_line(std::string& out, const NodeRecord& n) {
  out += std::to_string(n.id);
  detail::append_features(out, n.features);
  out.push_back('\n');
}

inline void append_edge_line(std::string& out, const EdgeRecord& e) {
  out += std::to_string(e.src);
  out.push_back('\t');
  out += std::to_string(e.dst);
  out.push_back('\t');
  append_float(out, e.weight);
  detail::append_features(out, e.features);
  out.push_back('\n');
}

/// Canonical node table: ascending id.
inline std::string write_node_table(std::vector<NodeRecord> nodes) {
  std::sort(nodes.begin(), nodes.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  std::string out;
  for (const auto& n : nodes) append_node_line(out, n);
  return out;
}

/// Canonical edge table: ascending (dst, src).
inline std::string write_edge_table(std::vector<EdgeRecord> edges) {
  std::sort(edges.begin(), edges.end(), edge_order);
  std::string out;
  for (const auto& e : edges) append_edge_line(out, e);
  return out;
}

// Graph ------------------------------------------------------------------------

/// Immutable adjacency view. Nodes are indexed by ascending id; edges are
/// stored in canonical (dst, src) order so in_edges(v) is a contiguous span.
class Graph {
 public:
  Graph() = default;

  Graph(std::vector<NodeRecord> nodes, std::vector<EdgeRecord> edges,
        std::optional<std::size_t> node_dim = std::nullopt,
        std::optional<std::size_t> edge_dim = std::nullopt)
      : nodes_(std::move(nodes)), edges_(std::move(edges)) {
    std::sort(nodes_.begin(), nodes_.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    for (std::size_t i = 1; i < nodes_.size(); ++i) {
      if (nodes_[i].id == nodes_[i - 1].id) {
        raise(ErrorKind::kDuplicateNode, "node " + std::to_string(nodes_[i].id));
      }
    }
    node_dim_ = node_dim ? *node_dim : (nodes_.empty() ? 0 : nodes_.front().features.size());
    for (const auto& n : nodes_) {
      if (n.features.size() != node_dim_) {
        raise(ErrorKind::kSchema, "node " + std::to_string(n.id) + " has " +
                                      std::to_string(n.features.size()) + " features, expected " +
                                      std::to_string(node_dim_));
      }
    }

    std::sort(edges_.begin(), edges_.end(), edge_order);
    edge_dim_ = edge_dim ? *edge_dim : (edges_.empty() ? 0 : edges_.front().features.size());
    for (std::size_t i = 0; i < edges_.size(); ++i) {
      const auto& e = edges_[i];
      auto tag = std::to_string(e.src) + "->" + std::to_string(e.dst);
      if (i > 0 && edges_[i - 1].src == e.src && edges_[i - 1].dst == e.dst) {
        raise(ErrorKind::kDuplicateEdge, tag);
      }
      if (!(e.weight > 0.0f)) raise(ErrorKind::kInvalidWeight, tag);
      if (!index_of(e.src) || !index_of(e.dst)) raise(ErrorKind::kDanglingEdge, tag);
      if (e.features.size() != edge_dim_) raise(ErrorKind::kSchema, tag + ": edge feature arity");
    }

    in_offsets_.assign(nodes_.size() + 1, 0);
    std::vector<std::size_t> out_count(nodes_.size() + 1, 0);
    for (const auto& e : edges_) {
      ++in_offsets_[*index_of(e.dst) + 1];
      ++out_count[*index_of(e.src) + 1];
    }
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      in_offsets_[i + 1] += in_offsets_[i];
      out_count[i + 1] += out_count[i];
    }
    out_offsets_ = out_count;
    out_edges_.resize(edges_.size());
    auto cursor = out_count;
    // Walking edges in (dst, src) order leaves each out-list sorted by dst.
    for (std::size_t i = 0; i < edges_.size(); ++i) {
      out_edges_[cursor[*index_of(edges_[i].src)]++] = i;
    }
  }

  std::size_t num_nodes() const { return nodes_.size(); }
  std::size_t num_edges() const { return edges_.size(); }
  std::size_t node_dim() const { return node_dim_; }
  std::size_t edge_dim() const { return edge_dim_; }

  const std::vector<NodeRecord>& nodes() const { return nodes_; }
  const std::vector<EdgeRecord>& edges() const { return edges_; }
  const NodeRecord& node(std::size_t index) const { return nodes_[index]; }

  std::optional<std::size_t> index_of(NodeId id) const {
    auto it = std::lower_bound(nodes_.begin(), nodes_.end(), id,
                               [](const NodeRecord& n, NodeId v) { return n.id < v; });
    if (it == nodes_.end() || it->id != id) return std::nullopt;
    return static_cast<std::size_t>(it - nodes_.begin());
  }
  bool contains(NodeId id) const { return index_of(id).has_value(); }

  /// In-edges u -> v of node index v, ascending by u.
  std::span<const EdgeRecord> in_edges(std::size_t v) const {
    return std::span(edges_).subspan(in_offsets_[v], in_offsets_[v + 1] - in_offsets_[v]);
  }

  /// Indices into edges() of the out-edges of node index v, ascending by dst.
  std::span<const std::size_t> out_edges(std::size_t v) const {
    return std::span(out_edges_).subspan(out_offsets_[v], out_offsets_[v + 1] - out_offsets_[v]);
  }

  std::size_t in_degree(std::size_t v) const { return in_offsets_[v + 1] - in_offsets_[v]; }
  std::size_t out_degree(std::size_t v) const { return out_offsets_[v + 1] - out_offsets_[v]; }

 private:
  std::vector<NodeRecord> nodes_;
  std::vector<EdgeRecord> edges_;
  std::size_t node_dim_ = 0;
  std::size_t edge_dim_ = 0;
  std::vector<std::size_t> in_offsets_;
  std::vector<std::size_t> out_offsets_;
  std::vector<std::size_t> out_edges_;
};

inline Graph load_graph(const std::filesystem::path& node_table,
                        const std::filesystem::path& edge_table,
                        std::optional<std::size_t> node_dim = std::nullopt,
                        std::optional<std::size_t> edge_dim = std::nullopt) {
  auto nodes = load_node_table(node_table, node_dim);
  auto ids = node_id_set(nodes);
  auto edges = load_edge_table(edge_table, edge_dim, ids);
  std::size_t nd = node_dim ? *node_dim : (nodes.empty() ? 0 : nodes.front().features.size());
  std::size_t ed = edge_dim ? *edge_dim : (edges.empty() ? 0 : edges.front().features.size());
  return Graph(std::move(nodes), std::move(edges), nd, ed);
}

/// Adds v -> u for every u -> v that lacks a reverse, copying weight and
/// features. Existing reverse edges are kept as they are.
inline Graph symmetrize(const Graph& g) {
  std::set<std::pair<NodeId, NodeId>> present;
  for (const auto& e : g.edges()) present.emplace(e.src, e.dst);
  std::vector<EdgeRecord> edges = g.edges();
  for (const auto& e : g.edges()) {
    if (!present.contains({e.dst, e.src})) {
      edges.push_back({e.dst, e.src, e.weight, e.features});
      present.emplace(e.dst, e.src);
    }
  }
  return Graph(g.nodes(), std::move(edges), g.node_dim(), g.edge_dim());
}

/// Subgraph induced by a node set: all edges with both endpoints kept.
inline Graph induced_subgraph(const Graph& g, const NodeIdSet& keep) {
  std::vector<NodeRecord> nodes;
  for (const auto& n : g.nodes()) {
    if (keep.contains(n.id)) nodes.push_back(n);
  }
  std::vector<EdgeRecord> edges;
  for (const auto& e : g.edges()) {
    if (keep.contains(e.src) && keep.contains(e.dst)) edges.push_back(e);
  }
  return Graph(std::move(nodes), std::move(edges), g.node_dim(), g.edge_dim());
}

// Synthetic fixtures ------------------------------------------------------------

enum class SyntheticModel { kPath, kStar, kPowerLaw };

struct SyntheticSpec {
  std::size_t n = 0;
  SyntheticModel model = SyntheticModel::kPath;
  std::uint64_t seed = 0;
  std::size_t node_dim = 1;
  std::size_t edge_dim = 0;
  std::size_t attach = 2;  // power_law: out-edges per new node
};

inline std::optional<SyntheticModel> parse_synthetic_model(std::string_view name) {
  if (name == "path") return SyntheticModel::kPath;
  if (name == "star") return SyntheticModel::kStar;
  if (name == "power_law") return SyntheticModel::kPowerLaw;
  return std::nullopt;
}

/// path:      i -> i-1, unit weights; node i has feature[0] = i + 1.
/// star:      every i > 0 points at hub 0.
/// power_law: preferential attachment on in-degree, random weights in (0.5, 1.5].
inline Graph generate_synthetic(const SyntheticSpec& spec) {
  if (spec.n == 0) raise(ErrorKind::kEmptySpec, "synthetic graph needs n >= 1");
  std::mt19937_64 rng(mix_seed(spec.seed, 0x5eedULL));
  std::uniform_real_distribution<float> feature_dist(-1.0f, 1.0f);

  std::vector<NodeRecord> nodes;
  nodes.reserve(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    std::vector<float> f(spec.node_dim);
    for (std::size_t j = 0; j < spec.node_dim; ++j) {
      f[j] = (j == 0 && spec.model == SyntheticModel::kPath) ? static_cast<float>(i + 1)
                                                              : feature_dist(rng);
    }
    nodes.push_back({i, FeatureRow(std::move(f))});
  }

  auto edge_features = [&] {
    std::vector<float> f(spec.edge_dim);
    for (auto& v : f) v = feature_dist(rng);
    return FeatureRow(std::move(f));
  };

  std::vector<EdgeRecord> edges;
  switch (spec.model) {
    case SyntheticModel::kPath:
      for (std::size_t i = 1; i < spec.n; ++i) edges.push_back({i, i - 1, 1.0f, edge_features()});
      break;
    case SyntheticModel::kStar:
      for (std::size_t i = 1; i < spec.n; ++i) edges.push_back({i, 0, 1.0f, edge_features()});
      break;
    case SyntheticModel::kPowerLaw: {
      // Attachment pool holds each node once plus once per received in-edge.
      std::vector<NodeId> pool;
      std::uniform_real_distribution<float> weight_dist(0.5f, 1.5f);
      for (std::size_t i = 0; i < spec.n; ++i) {
        std::set<NodeId> picked;
        std::size_t want = std::min(spec.attach, i);
        while (picked.size() < want) {
          std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
          picked.insert(pool[pick(rng)]);
        }
        for (NodeId t : picked) {
          float w = 2.0f - weight_dist(rng);
          edges.push_back({i, t, w, edge_features()});
          pool.push_back(t);
        }
        pool.push_back(i);
      }
      break;
    }
  }
  return Graph(std::move(nodes), std::move(edges), spec.node_dim, spec.edge_dim);
}

// GraphFeature -----------------------------------------------------------------

/// A flattened k-hop neighborhood of one target node.
struct GraphFeature {
  NodeId target = 0;
  int hop = 0;
  std::vector<NodeRecord> nodes;  // ascending id
  std::vector<EdgeRecord> edges;  // ascending (dst, src)

  friend bool operator==(const GraphFeature&, const GraphFeature&) = default;
};

/// Checks the ordering and closure invariants; throws SchemaError.
inline void validate(const GraphFeature& gf) {
  auto fail = [&](const std::string& what) {
    raise(ErrorKind::kSchema, "GraphFeature(target=" + std::to_string(gf.target) + "): " + what);
  };
  if (gf.hop < 0) fail("negative hop");
  for (std::size_t i = 1; i < gf.nodes.size(); ++i) {
    if (!(gf.nodes[i - 1].id < gf.nodes[i].id)) fail("nodes not strictly ascending");
  }
  for (std::size_t i = 1; i < gf.edges.size(); ++i) {
    if (!edge_order(gf.edges[i - 1], gf.edges[i])) fail("edges not strictly ascending");
  }
  auto has = [&](NodeId id) {
    return std::binary_search(gf.nodes.begin(), gf.nodes.end(), NodeRecord{id, {}},
                              [](const NodeRecord& a, const NodeRecord& b) { return a.id < b.id; });
  };
  if (!has(gf.target)) fail("target missing from node set");
  for (const auto& e : gf.edges) {
    if (!has(e.src) || !has(e.dst)) fail("edge endpoint outside node set");
  }
}

/// Canonical text: a `GF v1 ...` header, node lines, then edge lines, each
/// newline-terminated.
inline std::string to_text(const GraphFeature& gf) {
  std::string out = "GF v1 target=" + std::to_string(gf.target) + " hop=" + std::to_string(gf.hop) +
                    " n=" + std::to_string(gf.nodes.size()) + " m=" + std::to_string(gf.edges.size()) +
                    "\n";
  for (const auto& n : gf.nodes) append_node_line(out, n);
  for (const auto& e : gf.edges) append_edge_line(out, e);
  return out;
}

namespace detail {

inline std::uint64_t header_field(std::string_view token, std::string_view name) {
  std::uint64_t v = 0;
  if (!token.starts_with(name) || token.size() <= name.size() || token[name.size()] != '=' ||
      !parse_u64(token.substr(name.size() + 1), v)) {
    raise(ErrorKind::kParse, "GraphFeature header: expected " + std::string(name) + "=<int>");
  }
  return v;
}

}  // namespace detail

/// Inverse of to_text. `separator` lets records embedded in single-line
/// formats use another line delimiter.
inline GraphFeature parse_graphfeature(std::string_view text, char separator = '\n') {
  std::vector<std::string_view> lines;
  for (auto line : split(text, separator)) lines.push_back(strip_cr(line));
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) raise(ErrorKind::kParse, "empty GraphFeature record");
  auto head = split(lines[0], ' ');
  if (head.size() != 6 || head[0] != "GF" || head[1] != "v1") {
    raise(ErrorKind::kParse, "GraphFeature header must start with 'GF v1'");
  }
  GraphFeature gf;
  gf.target = detail::header_field(head[2], "target");
  gf.hop = static_cast<int>(detail::header_field(head[3], "hop"));
  std::size_t n = detail::header_field(head[4], "n");
  std::size_t m = detail::header_field(head[5], "m");
  if (lines.size() != 1 + n + m) {
    raise(ErrorKind::kSchema, "GraphFeature declares " + std::to_string(n + m) + " rows, has " +
                                  std::to_string(lines.size() - 1));
  }
  std::string nodes_text, edges_text;
  for (std::size_t i = 1; i <= n; ++i) (nodes_text += lines[i]) += '\n';
  for (std::size_t i = n + 1; i < lines.size(); ++i) (edges_text += lines[i]) += '\n';
  gf.nodes = parse_node_table(nodes_text, std::nullopt);
  gf.edges = parse_edge_table(edges_text, std::nullopt, node_id_set(gf.nodes));
  validate(gf);
  return gf;
}

}  // namespace agl
