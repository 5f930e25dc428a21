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

// Batch vectorization, per-layer pruning and edge partitioning.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "agl/error.hpp"
#include "agl/graph_store.hpp"
#include "agl/graphflat.hpp"
#include "agl/tensor.hpp"

namespace agl {

/// Edge u -> v of a batch in row coordinates. `edge` indexes the batch's
/// edge-feature matrix.
struct AdjEntry {
  std::uint32_t dst = 0;
  std::uint32_t src = 0;
  float weight = 1.0f;
  std::uint32_t edge = 0;

  friend bool operator==(const AdjEntry&, const AdjEntry&) = default;
};

/// Sparse adjacency sorted by (dst, src) with a set of active destination
/// rows. A layer computes output only for active rows; every entry's
/// destination is active.
class Adjacency {
 public:
  Adjacency() = default;

  Adjacency(std::size_t num_rows, std::vector<AdjEntry> entries, std::vector<std::uint8_t> active)
      : num_rows_(num_rows), entries_(std::move(entries)), active_(std::move(active)) {
    check_shape(active_.size() == num_rows_, "adjacency: active mask size");
    std::sort(entries_.begin(), entries_.end(), [](const AdjEntry& a, const AdjEntry& b) {
      return a.dst != b.dst ? a.dst < b.dst : a.src < b.src;
    });
    row_ptr_.assign(num_rows_ + 1, 0);
    for (const auto& e : entries_) {
      check_shape(e.dst < num_rows_ && e.src < num_rows_, "adjacency: entry out of range");
      check_shape(active_[e.dst] != 0, "adjacency: entry into inactive row");
      ++row_ptr_[e.dst + 1];
    }
    for (std::size_t r = 0; r < num_rows_; ++r) row_ptr_[r + 1] += row_ptr_[r];

    std::vector<std::uint8_t> used(active_);
    for (const auto& e : entries_) used[e.src] = 1;
    for (std::uint32_t r = 0; r < num_rows_; ++r) {
      if (active_[r]) active_rows_.push_back(r);
      if (used[r]) input_rows_.push_back(r);
    }

    by_src_.resize(entries_.size());
    for (std::uint32_t i = 0; i < by_src_.size(); ++i) by_src_[i] = i;
    std::stable_sort(by_src_.begin(), by_src_.end(),
                     [&](std::uint32_t a, std::uint32_t b) { return entries_[a].src < entries_[b].src; });
  }

  /// All rows active.
  static Adjacency full(std::size_t num_rows, std::vector<AdjEntry> entries) {
    return Adjacency(num_rows, std::move(entries), std::vector<std::uint8_t>(num_rows, 1));
  }

  std::size_t num_rows() const { return num_rows_; }
  std::size_t num_entries() const { return entries_.size(); }
  const std::vector<AdjEntry>& entries() const { return entries_; }
  std::span<const AdjEntry> row(std::size_t r) const {
    return {entries_.data() + row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]};
  }
  std::size_t row_begin(std::size_t r) const { return row_ptr_[r]; }
  bool active(std::size_t r) const { return active_[r] != 0; }
  const std::vector<std::uint8_t>& active_mask() const { return active_; }
  /// Ascending active rows.
  const std::vector<std::uint32_t>& active_rows() const { return active_rows_; }
  /// Rows whose embeddings this layer reads: active rows plus entry sources.
  const std::vector<std::uint32_t>& input_rows() const { return input_rows_; }
  /// Entry indices ordered by (src, dst).
  const std::vector<std::uint32_t>& by_src() const { return by_src_; }

 private:
  std::size_t num_rows_ = 0;
  std::vector<AdjEntry> entries_;
  std::vector<std::uint8_t> active_;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<std::uint32_t> active_rows_;
  std::vector<std::uint32_t> input_rows_;
  std::vector<std::uint32_t> by_src_;
};

/// Contiguous ranges of whole destination rows: partition p covers rows
/// [bounds[p], bounds[p+1]).
struct EdgePartition {
  std::vector<std::size_t> bounds;

  std::size_t parts() const { return bounds.size() - 1; }
};

/// Cuts the rows into t ranges balanced by entry count. Each cut lands on the
/// first row boundary at or past its share, so a range overshoots its share
/// by less than one row's degree.
inline EdgePartition partition_edges(const Adjacency& a, std::size_t t) {
  t = std::max<std::size_t>(t, 1);
  EdgePartition p;
  p.bounds.push_back(0);
  const std::size_t total = a.num_entries();
  std::size_t row = 0;
  for (std::size_t k = 1; k < t; ++k) {
    // Smallest row r with entries-before(r) >= total * k / t.
    const std::size_t goal = (total * k + t - 1) / t;
    while (row < a.num_rows() && a.row_begin(row) < goal) ++row;
    p.bounds.push_back(std::max(row, p.bounds.back()));
  }
  p.bounds.push_back(a.num_rows());
  return p;
}

/// Merged mini-batch: one row per distinct node, ascending by node id.
struct VectorizedBatch {
  int hops = 0;
  std::vector<NodeId> ids;
  Matrix<float> x;
  Matrix<float> e;  // edge features; row i belongs to the entry with edge == i
  Adjacency a;      // every row active
  std::vector<Adjacency> pruned;
  std::vector<std::uint32_t> targets;
  std::vector<Label> labels;  // one per target

  std::optional<std::uint32_t> row_of(NodeId id) const {
    auto it = std::lower_bound(ids.begin(), ids.end(), id);
    if (it == ids.end() || *it != id) return std::nullopt;
    return static_cast<std::uint32_t>(it - ids.begin());
  }
};

/// Reverse-BFS distance from the target rows along in-edges; unreachable rows
/// get INT_MAX.
inline std::vector<int> target_distances(const Adjacency& a, std::span<const std::uint32_t> targets) {
  std::vector<int> dist(a.num_rows(), std::numeric_limits<int>::max());
  std::vector<std::uint32_t> frontier;
  for (auto t : targets) {
    if (dist[t] != 0) {
      dist[t] = 0;
      frontier.push_back(t);
    }
  }
  for (int d = 1; !frontier.empty(); ++d) {
    std::vector<std::uint32_t> next;
    for (auto v : frontier) {
      for (const auto& e : a.row(v)) {
        if (dist[e.src] == std::numeric_limits<int>::max()) {
          dist[e.src] = d;
          next.push_back(e.src);
        }
      }
    }
    frontier = std::move(next);
  }
  return dist;
}

/// Per-layer adjacencies. Layer k (0-based) produces embeddings only for rows
/// with d <= K-(k+1) and keeps only the entries into those rows; the last
/// layer therefore touches the targets alone.
inline std::vector<Adjacency> prune(const Adjacency& a, std::span<const std::uint32_t> targets, int hops) {
  auto dist = target_distances(a, targets);
  std::vector<Adjacency> layers;
  for (int k = 0; k < hops; ++k) {
    const int limit = hops - (k + 1);
    std::vector<std::uint8_t> active(a.num_rows(), 0);
    for (std::size_t r = 0; r < a.num_rows(); ++r) active[r] = dist[r] <= limit;
    std::vector<AdjEntry> kept;
    for (const auto& e : a.entries()) {
      if (active[e.dst]) kept.push_back(e);
    }
    layers.emplace_back(a.num_rows(), std::move(kept), std::move(active));
  }
  return layers;
}

namespace detail {

inline void check_row_dim(const FeatureRow& f, std::size_t& dim, bool& seen, const char* what) {
  if (!seen) {
    dim = f.size();
    seen = true;
  } else if (f.size() != dim) {
    raise(ErrorKind::kSchema, std::string(what) + " feature dims differ within a batch");
  }
}

inline VectorizedBatch assemble(int hops, const std::vector<NodeRecord>& nodes,
                                const std::vector<EdgeRecord>& edges, std::span<const NodeId> target_ids,
                                std::vector<Label> labels) {
  VectorizedBatch b;
  b.hops = hops;
  std::size_t node_dim = 0, edge_dim = 0;
  bool seen_node = false, seen_edge = false;
  for (const auto& n : nodes) {
    detail::check_row_dim(n.features, node_dim, seen_node, "node");
    b.ids.push_back(n.id);
  }
  for (const auto& e : edges) detail::check_row_dim(e.features, edge_dim, seen_edge, "edge");

  b.x = Matrix<float>(nodes.size(), node_dim);
  for (std::size_t r = 0; r < nodes.size(); ++r) {
    std::copy(nodes[r].features.values().begin(), nodes[r].features.values().end(), b.x.row(r).begin());
  }
  b.e = Matrix<float>(edges.size(), edge_dim);
  std::vector<AdjEntry> entries;
  entries.reserve(edges.size());
  for (std::size_t i = 0; i < edges.size(); ++i) {
    std::copy(edges[i].features.values().begin(), edges[i].features.values().end(), b.e.row(i).begin());
    entries.push_back({*b.row_of(edges[i].dst), *b.row_of(edges[i].src), edges[i].weight,
                       static_cast<std::uint32_t>(i)});
  }
  b.a = Adjacency::full(nodes.size(), std::move(entries));
  for (auto t : target_ids) {
    auto row = b.row_of(t);
    if (!row) raise(ErrorKind::kUnknownTarget, "target " + std::to_string(t) + " not in batch");
    b.targets.push_back(*row);
  }
  b.labels = std::move(labels);
  b.labels.resize(b.targets.size());
  b.pruned = prune(b.a, b.targets, hops);
  return b;
}

}  // namespace detail

/// Merges the triples' subgraphs: nodes deduplicated by id, edges by
/// (src, dst), rows ascending by id.
inline VectorizedBatch vectorize(std::span<const Triple> batch) {
  if (batch.empty()) raise(ErrorKind::kSchema, "empty batch");
  const int hops = batch.front().gf.hop;
  std::map<NodeId, const NodeRecord*> nodes;
  std::map<std::pair<NodeId, NodeId>, const EdgeRecord*> edges;  // (dst, src)
  std::vector<NodeId> targets;
  std::vector<Label> labels;
  for (const auto& t : batch) {
    if (t.gf.hop != hops) raise(ErrorKind::kSchema, "GraphFeatures of one batch differ in hop count");
    for (const auto& n : t.gf.nodes) nodes.emplace(n.id, &n);
    for (const auto& e : t.gf.edges) edges.emplace(std::pair{e.dst, e.src}, &e);
    targets.push_back(t.target);
    labels.push_back(t.label);
  }
  std::vector<NodeRecord> node_list;
  node_list.reserve(nodes.size());
  for (const auto& [id, n] : nodes) node_list.push_back(*n);
  std::vector<EdgeRecord> edge_list;
  edge_list.reserve(edges.size());
  for (const auto& [key, e] : edges) edge_list.push_back(*e);
  return detail::assemble(hops, node_list, edge_list, targets, std::move(labels));
}

/// The whole graph as one batch.
inline VectorizedBatch vectorize_graph(const Graph& g, std::span<const NodeId> targets, int hops,
                                       std::vector<Label> labels = {}) {
  return detail::assemble(hops, g.nodes(), g.edges(), targets, std::move(labels));
}

}  // namespace agl
