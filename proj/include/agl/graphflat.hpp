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

// k-hop neighborhood generation as K rounds of merge-and-propagate.
//
// Map emits, per node v, its self information (v plus its in-edge row), one
// in-edge record per u -> v carrying u's self information, and one out-edge
// record per v -> x. Round k merges the self record with the (sampled)
// in-edge records and sends the union along the out-edges. The node set after
// round k is everything within k reverse hops; carrying each node's in-edge
// row lets the final record induce every edge among those nodes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <random>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "agl/error.hpp"
#include "agl/graph_store.hpp"
#include "agl/io_util.hpp"
#include "agl/mr_engine.hpp"

namespace agl {

// Sampling and re-indexing -------------------------------------------------------

enum class SamplingKind { kNone, kUniform, kWeighted };

struct SamplingStrategy {
  SamplingKind kind = SamplingKind::kNone;
  std::size_t fanout = 0;  // max in-edges kept per node
  std::uint64_t seed = 0;

  bool enabled() const { return kind != SamplingKind::kNone; }
};

/// "none", "uniform:<F>" or "weighted:<F>".
inline SamplingStrategy parse_sampling(std::string_view text, std::uint64_t seed = 0) {
  SamplingStrategy s;
  s.seed = seed;
  if (text == "none") return s;
  auto colon = text.find(':');
  auto name = text.substr(0, colon);
  if (name == "uniform") {
    s.kind = SamplingKind::kUniform;
  } else if (name == "weighted") {
    s.kind = SamplingKind::kWeighted;
  } else {
    raise(ErrorKind::kUsage, "unknown sampling strategy '" + std::string(text) + "'");
  }
  std::uint64_t fanout = 0;
  if (colon == std::string_view::npos || !parse_u64(text.substr(colon + 1), fanout) || fanout == 0) {
    raise(ErrorKind::kUsage, "sampling strategy needs a positive fanout, e.g. uniform:10");
  }
  s.fanout = fanout;
  return s;
}

inline std::string to_string(const SamplingStrategy& s) {
  switch (s.kind) {
    case SamplingKind::kNone: return "none";
    case SamplingKind::kUniform: return "uniform:" + std::to_string(s.fanout);
    case SamplingKind::kWeighted: return "weighted:" + std::to_string(s.fanout);
  }
  return "none";
}

struct ReindexConfig {
  std::size_t threshold = 1000;  // in-degree above which a key is split
  std::size_t suffixes = 8;
  std::uint64_t seed = 0;

  static ReindexConfig disabled() { return {SIZE_MAX, 1, 0}; }
};

struct Candidate {
  NodeId src = 0;
  float weight = 1.0f;
};

/// Picks up to `quota` candidates for one (possibly suffixed) key. Uniform and
/// weighted draws are both weighted reservoir keys log(u)/w (w = 1 for
/// uniform), seeded by the key so every round and every caller agrees.
/// Returns ascending candidate indices.
inline std::vector<std::size_t> sample_group(const ShuffleKey& key, std::span<const Candidate> cands,
                                             std::size_t quota, const SamplingStrategy& s) {
  std::vector<std::size_t> picked(cands.size());
  for (std::size_t i = 0; i < cands.size(); ++i) picked[i] = i;
  if (!s.enabled() || cands.size() <= quota) return picked;

  std::mt19937_64 rng(mix_seed(s.seed, key.id, key.suffix));
  std::vector<std::pair<double, std::size_t>> keyed;
  keyed.reserve(cands.size());
  for (std::size_t i = 0; i < cands.size(); ++i) {
    double w = s.kind == SamplingKind::kWeighted ? static_cast<double>(cands[i].weight) : 1.0;
    keyed.emplace_back(std::log(unit_open_closed(rng())) / w, i);
  }
  std::partial_sort(keyed.begin(), keyed.begin() + static_cast<std::ptrdiff_t>(quota), keyed.end(),
                    [](const auto& a, const auto& b) {
                      return a.first != b.first ? a.first > b.first : a.second < b.second;
                    });
  picked.clear();
  for (std::size_t i = 0; i < quota; ++i) picked.push_back(keyed[i].second);
  std::sort(picked.begin(), picked.end());
  return picked;
}

inline bool needs_reindex(std::size_t in_degree, const ReindexConfig& r) {
  return r.suffixes > 1 && in_degree > r.threshold;
}

/// Suffix in [1, suffixes] for the in-edge record from `src`.
inline std::uint32_t reindex_suffix(NodeId src, const ReindexConfig& r) {
  return static_cast<std::uint32_t>(1 + mix_seed(r.seed, src) % r.suffixes);
}

/// Per-suffix share of the fanout; shares sum to exactly the fanout.
inline std::size_t suffix_quota(std::uint32_t suffix, std::size_t fanout, const ReindexConfig& r) {
  std::size_t base = fanout / r.suffixes;
  return base + ((suffix - 1) < fanout % r.suffixes ? 1 : 0);
}

/// Splits a hub's candidates by re-index suffix: suffix -> ascending indices.
inline std::map<std::uint32_t, std::vector<std::size_t>> reindex_partition(
    std::span<const Candidate> cands, const ReindexConfig& r) {
  std::map<std::uint32_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < cands.size(); ++i) groups[reindex_suffix(cands[i].src, r)].push_back(i);
  return groups;
}

/// The in-edges node `key` keeps, as ascending indices into `cands` (which
/// must be sorted by src). Map-time rows and reducers both call this, so they
/// always agree.
inline std::vector<std::size_t> select_in_edges(NodeId key, std::span<const Candidate> cands,
                                                const SamplingStrategy& s, const ReindexConfig& r) {
  if (!needs_reindex(cands.size(), r)) return sample_group({key, 0}, cands, s.fanout, s);
  std::vector<std::size_t> out;
  for (const auto& [suffix, members] : reindex_partition(cands, r)) {
    std::vector<Candidate> sub;
    sub.reserve(members.size());
    for (auto i : members) sub.push_back(cands[i]);
    for (auto j : sample_group({key, suffix}, sub, suffix_quota(suffix, s.fanout, r), s)) {
      out.push_back(members[j]);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// The graph where each node keeps only its selected in-edges. GraphFlat
/// with sampling produces exactly the k-hop neighborhoods of this graph.
inline Graph sampled_graph(const Graph& g, const SamplingStrategy& s, const ReindexConfig& r) {
  if (!s.enabled()) return g;
  std::vector<EdgeRecord> kept;
  for (std::size_t v = 0; v < g.num_nodes(); ++v) {
    auto in = g.in_edges(v);
    std::vector<Candidate> cands;
    for (const auto& e : in) cands.push_back({e.src, e.weight});
    for (auto i : select_in_edges(g.node(v).id, cands, s, r)) kept.push_back(in[i]);
  }
  return Graph(g.nodes(), std::move(kept), g.node_dim(), g.edge_dim());
}

// Info records ------------------------------------------------------------------

struct RowEdge {
  NodeId src = 0;
  float weight = 1.0f;
  FeatureRow features;
};

/// One node of a partial neighborhood: its features and its kept in-edges.
struct NeighborEntry {
  NodeId id = 0;
  FeatureRow features;
  std::vector<RowEdge> in_row;  // ascending src
};

/// Ascending by id, unique.
using Neighborhood = std::vector<NeighborEntry>;

enum class InfoKind : std::uint8_t { kInEdge = 'I', kOutEdge = 'O', kSelf = 'S' };

/// Shuffle value. Self: `hood` is the node's accumulated neighborhood.
/// InEdge: `peer` is the source, `hood` the source's neighborhood.
/// OutEdge: `peer` is the destination, `hood` is empty.
struct InfoRecord {
  InfoKind kind = InfoKind::kSelf;
  NodeId peer = 0;
  float weight = 1.0f;
  FeatureRow edge_features;
  std::shared_ptr<const Neighborhood> hood;
};

/// Interns node feature rows during decoding so one node's features are
/// stored once no matter how many neighborhoods contain it.
class FeatureCache {
 public:
  FeatureRow intern(NodeId id, std::vector<float> values) {
    auto it = rows_.find(id);
    if (it != rows_.end() && it->second.size() == values.size() &&
        std::equal(values.begin(), values.end(), it->second.values().begin())) {
      return it->second;
    }
    FeatureRow row(std::move(values));
    rows_[id] = row;
    return row;
  }

 private:
  std::unordered_map<NodeId, FeatureRow> rows_;
};

namespace detail {

inline void encode_hood(ByteWriter& w, const Neighborhood& hood) {
  w.u32(static_cast<std::uint32_t>(hood.size()));
  for (const auto& n : hood) {
    w.u64(n.id);
    w.floats(n.features.values());
    w.u32(static_cast<std::uint32_t>(n.in_row.size()));
    for (const auto& e : n.in_row) {
      w.u64(e.src);
      w.f32(e.weight);
      w.floats(e.features.values());
    }
  }
}

inline Neighborhood decode_hood(ByteReader& in, FeatureCache* cache) {
  Neighborhood hood(in.u32());
  for (auto& n : hood) {
    n.id = in.u64();
    auto values = in.floats();
    n.features = cache ? cache->intern(n.id, std::move(values)) : FeatureRow(std::move(values));
    n.in_row.resize(in.u32());
    for (auto& e : n.in_row) {
      e.src = in.u64();
      e.weight = in.f32();
      e.features = FeatureRow(in.floats());
    }
  }
  return hood;
}

}  // namespace detail

inline std::string encode_info(const InfoRecord& r) {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(r.kind));
  w.u64(r.peer);
  if (r.kind != InfoKind::kSelf) {
    w.f32(r.weight);
    w.floats(r.edge_features.values());
  }
  if (r.kind != InfoKind::kOutEdge) detail::encode_hood(w, *r.hood);
  return std::move(w).str();
}

inline InfoRecord decode_info(std::string_view bytes, FeatureCache* cache = nullptr) {
  ByteReader in(bytes);
  InfoRecord r;
  auto tag = in.u8();
  if (tag != 'I' && tag != 'O' && tag != 'S') raise(ErrorKind::kCorruptRecord, "unknown info kind");
  r.kind = static_cast<InfoKind>(tag);
  r.peer = in.u64();
  if (r.kind != InfoKind::kSelf) {
    r.weight = in.f32();
    r.edge_features = FeatureRow(in.floats());
  }
  if (r.kind != InfoKind::kOutEdge) {
    r.hood = std::make_shared<const Neighborhood>(detail::decode_hood(in, cache));
  }
  if (!in.done()) raise(ErrorKind::kCorruptRecord, "trailing bytes in info record");
  return r;
}

/// Set union of neighborhoods, deduplicated by node id.
inline Neighborhood merge_hoods(std::span<const Neighborhood* const> hoods) {
  std::vector<const NeighborEntry*> all;
  for (const auto* h : hoods) {
    for (const auto& n : *h) all.push_back(&n);
  }
  std::stable_sort(all.begin(), all.end(), [](const auto* a, const auto* b) { return a->id < b->id; });
  Neighborhood out;
  for (const auto* n : all) {
    if (out.empty() || out.back().id != n->id) out.push_back(*n);
  }
  return out;
}

/// Materializes a neighborhood: nodes plus every row edge whose source is in
/// the node set.
inline GraphFeature to_graphfeature(NodeId target, int hop, const Neighborhood& hood) {
  GraphFeature gf;
  gf.target = target;
  gf.hop = hop;
  gf.nodes.reserve(hood.size());
  for (const auto& n : hood) gf.nodes.push_back({n.id, n.features});
  std::vector<NodeId> ids;
  ids.reserve(hood.size());
  for (const auto& n : hood) ids.push_back(n.id);
  auto in_set = [&](NodeId id) { return std::binary_search(ids.begin(), ids.end(), id); };
  for (const auto& n : hood) {
    for (const auto& e : n.in_row) {
      if (in_set(e.src)) gf.edges.push_back({e.src, n.id, e.weight, e.features});
    }
  }
  return gf;
}

// Map and reduce ----------------------------------------------------------------

/// Per-node kept in-edge rows, computed once before the map stage.
class FlatMapper {
 public:
  FlatMapper(const Graph& g, SamplingStrategy sampling, ReindexConfig reindex)
      : g_(&g), rows_(g.num_nodes()) {
    for (std::size_t v = 0; v < g.num_nodes(); ++v) {
      auto in = g.in_edges(v);
      std::vector<Candidate> cands;
      cands.reserve(in.size());
      for (const auto& e : in) cands.push_back({e.src, e.weight});
      for (auto i : select_in_edges(g.node(v).id, cands, sampling, reindex)) {
        rows_[v].push_back({in[i].src, in[i].weight, in[i].features});
      }
    }
  }

  Neighborhood self_hood(std::size_t v) const {
    return {NeighborEntry{g_->node(v).id, g_->node(v).features, rows_[v]}};
  }

  /// Records emitted for node index v: its self record, one in-edge record per
  /// u -> v and one out-edge record per v -> x.
  std::vector<KeyedRecord> operator()(std::size_t v) const {
    std::vector<KeyedRecord> out;
    const NodeId id = g_->node(v).id;
    auto self = std::make_shared<const Neighborhood>(self_hood(v));
    out.push_back({{id, 0}, encode_info({InfoKind::kSelf, id, 1.0f, {}, self})});
    for (const auto& e : g_->in_edges(v)) {
      auto src = *g_->index_of(e.src);
      auto hood = std::make_shared<const Neighborhood>(self_hood(src));
      out.push_back({{id, 0}, encode_info({InfoKind::kInEdge, e.src, e.weight, e.features, hood})});
    }
    for (auto ei : g_->out_edges(v)) {
      const auto& e = g_->edges()[ei];
      out.push_back({{id, 0}, encode_info({InfoKind::kOutEdge, e.dst, e.weight, e.features, nullptr})});
    }
    return out;
  }

 private:
  const Graph* g_;
  std::vector<std::vector<RowEdge>> rows_;
};

/// All map-stage records of a graph.
inline std::vector<KeyedRecord> flat_map(const Graph& g,
                                         const SamplingStrategy& sampling = {},
                                         const ReindexConfig& reindex = ReindexConfig::disabled()) {
  FlatMapper mapper(g, sampling, reindex);
  std::vector<KeyedRecord> out;
  for (std::size_t v = 0; v < g.num_nodes(); ++v) {
    auto part = mapper(v);
    std::move(part.begin(), part.end(), std::back_inserter(out));
  }
  return out;
}

struct FlatReduceOptions {
  SamplingStrategy sampling;
  ReindexConfig reindex = ReindexConfig::disabled();
  bool final_round = false;  // emit only the self record
};

/// One merge-and-propagate step for a key group.
inline std::vector<KeyedRecord> flat_reduce(ReduceContext& ctx, const ShuffleKey& key,
                                            std::span<const std::string> values,
                                            const FlatReduceOptions& opt) {
  FeatureCache cache;
  std::optional<InfoRecord> self;
  std::vector<InfoRecord> in_edges;
  std::vector<std::size_t> out_edges;  // indices into values, re-emitted verbatim
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto r = decode_info(values[i], &cache);
    switch (r.kind) {
      case InfoKind::kSelf:
        if (self) raise(ErrorKind::kMalformedGroup, "duplicate self record for key " + to_string(key));
        self = std::move(r);
        break;
      case InfoKind::kInEdge: in_edges.push_back(std::move(r)); break;
      case InfoKind::kOutEdge: out_edges.push_back(i); break;
    }
  }
  if (!self) raise(ErrorKind::kMalformedGroup, "no self record for key " + to_string(key));
  std::sort(in_edges.begin(), in_edges.end(),
            [](const auto& a, const auto& b) { return a.peer < b.peer; });

  std::vector<Candidate> cands;
  cands.reserve(in_edges.size());
  for (const auto& r : in_edges) cands.push_back({r.peer, r.weight});

  std::vector<const Neighborhood*> parts{self->hood.get()};
  std::vector<Neighborhood> partials;  // re-indexed sub-key results
  if (needs_reindex(cands.size(), opt.reindex)) {
    ctx.count("graphflat.reindexed_keys", 1);
    auto groups = reindex_partition(cands, opt.reindex);
    partials.reserve(groups.size());
    for (const auto& [suffix, members] : groups) {
      // Reduce the sub-key (key.id, suffix) on its own...
      std::vector<Candidate> sub;
      for (auto i : members) sub.push_back(cands[i]);
      auto quota = suffix_quota(suffix, opt.sampling.fanout, opt.reindex);
      std::vector<const Neighborhood*> sub_hoods;
      for (auto j : sample_group({key.id, suffix}, sub, quota, opt.sampling)) {
        sub_hoods.push_back(in_edges[members[j]].hood.get());
      }
      partials.push_back(merge_hoods(sub_hoods));
    }
    // ...then restore the original key and fold the partials into self.
    for (const auto& p : partials) parts.push_back(&p);
  } else {
    for (auto i : sample_group(key, cands, opt.sampling.fanout, opt.sampling)) {
      parts.push_back(in_edges[i].hood.get());
    }
  }
  auto merged = std::make_shared<const Neighborhood>(merge_hoods(parts));
  ctx.count("graphflat.self_nodes", merged->size());

  std::vector<KeyedRecord> out;
  out.push_back({key, encode_info({InfoKind::kSelf, key.id, 1.0f, {}, merged})});
  if (opt.final_round) return out;
  for (auto i : out_edges) {
    auto edge = decode_info(values[i]);
    out.push_back({{edge.peer, 0},
                   encode_info({InfoKind::kInEdge, key.id, edge.weight, edge.edge_features, merged})});
    out.push_back({key, values[i]});
  }
  return out;
}

// Pipeline ----------------------------------------------------------------------

struct FlatOptions {
  SamplingStrategy sampling;
  ReindexConfig reindex = ReindexConfig::disabled();
  std::size_t workers = 1;
  std::size_t partitions = 8;
  std::optional<std::filesystem::path> work_dir;  // temp dir when unset
};

/// k-hop GraphFeatures for `targets`, computed with K reduce rounds.
inline std::map<NodeId, GraphFeature> build_graphfeatures(const Graph& g,
                                                          std::span<const NodeId> targets, int hops,
                                                          const FlatOptions& opt = {}) {
  if (hops < 0) raise(ErrorKind::kUsage, "hops must be >= 0");
  std::set<NodeId> wanted;
  for (auto t : targets) {
    if (!g.contains(t)) raise(ErrorKind::kUnknownTarget, "node " + std::to_string(t));
    wanted.insert(t);
  }

  std::optional<TempDir> scratch;
  std::filesystem::path dir;
  if (opt.work_dir) {
    dir = *opt.work_dir;
  } else {
    scratch.emplace("agl-graphflat");
    dir = scratch->path();
  }
  Engine engine({dir, opt.workers, opt.partitions, 64});

  FlatMapper mapper(g, opt.sampling, opt.reindex);
  std::vector<std::size_t> input(g.num_nodes());
  for (std::size_t i = 0; i < input.size(); ++i) input[i] = i;

  auto reducer = [&](ReduceContext& ctx, const ShuffleKey& key, std::span<const std::string> values) {
    FlatReduceOptions ro{opt.sampling, opt.reindex, ctx.round() == hops};
    return flat_reduce(ctx, key, values, ro);
  };
  auto ckpt = engine.run_job(std::span<const std::size_t>(input), mapper, reducer, hops);

  std::map<NodeId, GraphFeature> out;
  FeatureCache cache;
  engine.scan(ckpt, [&](const KeyedRecord& r) {
    if (r.key.suffix != 0 || !wanted.contains(r.key.id)) return;
    if (r.value.empty() || r.value[0] != static_cast<char>(InfoKind::kSelf)) return;
    auto info = decode_info(r.value, &cache);
    out.emplace(r.key.id, to_graphfeature(r.key.id, hops, *info.hood));
  });
  return out;
}

inline std::map<NodeId, GraphFeature> build_graphfeatures(const Graph& g,
                                                          std::initializer_list<NodeId> targets,
                                                          int hops, const FlatOptions& opt = {}) {
  std::vector<NodeId> t(targets);
  return build_graphfeatures(g, std::span<const NodeId>(t), hops, opt);
}

/// Reference k-hop neighborhood: reverse BFS along in-edges to depth K, then
/// every edge with both endpoints in the reached set.
inline GraphFeature khop_oracle(const Graph& g, NodeId target, int hops) {
  std::map<NodeId, int> dist{{target, 0}};
  std::queue<NodeId> frontier;
  frontier.push(target);
  while (!frontier.empty()) {
    NodeId v = frontier.front();
    frontier.pop();
    int d = dist[v];
    if (d == hops) continue;
    for (const auto& e : g.edges()) {
      if (e.dst == v && !dist.contains(e.src)) {
        dist[e.src] = d + 1;
        frontier.push(e.src);
      }
    }
  }
  GraphFeature gf;
  gf.target = target;
  gf.hop = hops;
  for (const auto& n : g.nodes()) {
    if (dist.contains(n.id)) gf.nodes.push_back(n);
  }
  for (const auto& e : g.edges()) {
    if (dist.contains(e.src) && dist.contains(e.dst)) gf.edges.push_back(e);
  }
  std::sort(gf.edges.begin(), gf.edges.end(), edge_order);
  return gf;
}

// Training-sample triples ---------------------------------------------------------

/// Single-label class id (or -1 when unlabeled), or a multi-hot vector.
struct Label {
  int cls = -1;
  std::vector<std::uint8_t> multi;

  bool is_multi() const { return !multi.empty(); }
  friend bool operator==(const Label&, const Label&) = default;
};

inline std::string to_string(const Label& label) {
  if (!label.is_multi()) return std::to_string(label.cls);
  std::string out;
  for (std::size_t i = 0; i < label.multi.size(); ++i) {
    if (i) out.push_back(',');
    out.push_back(label.multi[i] ? '1' : '0');
  }
  return out;
}

inline Label parse_label(std::string_view text) {
  Label label;
  if (text.find(',') != std::string_view::npos) {
    for (auto f : split(text, ',')) {
      if (f != "0" && f != "1") raise(ErrorKind::kParse, "multi-label entries must be 0 or 1");
      label.multi.push_back(f == "1" ? 1 : 0);
    }
    return label;
  }
  std::int64_t cls = 0;
  if (!parse_i64(text, cls) || cls < -1) raise(ErrorKind::kParse, "bad label '" + std::string(text) + "'");
  label.cls = static_cast<int>(cls);
  return label;
}

/// `<id>\t<label>` rows.
inline std::map<NodeId, Label> parse_label_table(std::string_view text) {
  std::map<NodeId, Label> labels;
  detail::for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    auto fields = split(line, '\t');
    NodeId id = 0;
    if (fields.size() != 2 || !parse_u64(fields[0], id)) {
      raise(ErrorKind::kParse, "label table line " + std::to_string(line_no));
    }
    if (!labels.emplace(id, parse_label(fields[1])).second) {
      raise(ErrorKind::kDuplicateNode, "label for node " + std::to_string(id) + " given twice");
    }
  });
  return labels;
}

struct Triple {
  NodeId target = 0;
  Label label;
  GraphFeature gf;
};

/// `<target>\t<label>\t<GraphFeature>` on one line; the record's own line
/// breaks become '|'.
inline std::string to_line(const Triple& t) {
  auto text = to_text(t.gf);
  if (!text.empty() && text.back() == '\n') text.pop_back();
  std::replace(text.begin(), text.end(), '\n', '|');
  return std::to_string(t.target) + "\t" + to_string(t.label) + "\t" + text;
}

inline Triple parse_triple(std::string_view line) {
  auto first = line.find('\t');
  auto second = first == std::string_view::npos ? first : line.find('\t', first + 1);
  if (second == std::string_view::npos) raise(ErrorKind::kParse, "triple needs three tab-separated fields");
  Triple t;
  if (!parse_u64(line.substr(0, first), t.target)) raise(ErrorKind::kParse, "bad triple target");
  t.label = parse_label(line.substr(first + 1, second - first - 1));
  t.gf = parse_graphfeature(line.substr(second + 1), '|');
  if (t.gf.target != t.target) raise(ErrorKind::kSchema, "triple target differs from GraphFeature target");
  return t;
}

inline void write_triples(const std::filesystem::path& path, std::span<const Triple> triples) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(ErrorKind::kIo, "cannot write " + path.string());
  for (const auto& t : triples) out << to_line(t) << '\n';
  if (!out) raise(ErrorKind::kIo, "short write to " + path.string());
}

inline std::vector<Triple> read_triples(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorKind::kIo, "cannot open " + path.string());
  std::vector<Triple> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto view = strip_cr(line);
    if (view.empty()) continue;
    try {
      out.push_back(parse_triple(view));
    } catch (const Error& e) {
      raise(e.kind(), path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace agl
