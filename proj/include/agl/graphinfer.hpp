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

// Whole-graph inference in K+1 reduce rounds. The map stage seeds every node
// with its raw features and the (sampled) edge structure; round k evaluates
// layer k once per node from its in-neighbors' layer k-1 embeddings and sends
// the result along its out-edges; round K+1 applies the prediction head.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "agl/error.hpp"
#include "agl/gnn_core.hpp"
#include "agl/graph_store.hpp"
#include "agl/graphflat.hpp"
#include "agl/io_util.hpp"
#include "agl/mr_engine.hpp"

namespace agl {

// Model segmentation --------------------------------------------------------------

/// One layer (index < K) or the head (index == K), as verbatim checkpoint
/// text.
struct ModelSlice {
  std::size_t index = 0;
  bool is_head = false;
  std::string text;
};

struct SegmentedModel {
  std::string header;  // first line, newline included
  ModelConfig config;
  std::vector<ModelSlice> slices;
};

/// Splits a checkpoint into K+1 slices. Every slice is parsed once here so a
/// corrupt checkpoint fails before any inference round runs.
inline SegmentedModel segment_model(std::string_view checkpoint) {
  std::string_view header;
  auto blocks = split_checkpoint_blocks(checkpoint, header);
  SegmentedModel out;
  out.header = std::string(header);
  out.config = parse_model_header(header.substr(0, header.size() - 1));
  if (blocks.size() != static_cast<std::size_t>(out.config.hops()) + 1) {
    raise(ErrorKind::kCheckpoint, "header and layer blocks disagree on K");
  }
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    const bool head = k + 1 == blocks.size();
    if (head) {
      parse_head_block(blocks[k]);
    } else {
      parse_layer_block(blocks[k], k);
    }
    out.slices.push_back({k, head, std::string(blocks[k])});
  }
  return out;
}

inline std::string reassemble(const SegmentedModel& m) {
  std::string out = m.header;
  for (const auto& s : m.slices) out += s.text;
  return out;
}

// Scores --------------------------------------------------------------------------

using ScoreMap = std::map<NodeId, std::vector<float>>;

/// `<id>\t<score>...` lines, ascending by id.
inline std::string format_scores(const ScoreMap& scores) {
  std::string out;
  for (const auto& [id, s] : scores) {
    out += std::to_string(id);
    for (float v : s) {
      out.push_back('\t');
      append_float(out, v);
    }
    out.push_back('\n');
  }
  return out;
}

struct InferResult {
  ScoreMap scores;
  WorkCounter work;
};

// Pipeline ------------------------------------------------------------------------

struct InferOptions {
  SamplingStrategy sampling;
  ReindexConfig reindex = ReindexConfig::disabled();
  std::size_t workers = 1;
  std::size_t partitions = 8;
  std::optional<std::filesystem::path> work_dir;
  /// When set, only nodes within K reverse hops of these targets take part
  /// and only their scores are returned.
  std::optional<std::vector<NodeId>> targets;
};

namespace detail {

enum class EmbKind : std::uint8_t { kInEdge = 'I', kOutEdge = 'O', kSelf = 'S' };

struct EmbRecord {
  EmbKind kind = EmbKind::kSelf;
  NodeId peer = 0;
  float weight = 1.0f;
  std::vector<float> embedding;
};

inline std::string encode_emb(EmbKind kind, NodeId peer, float weight, std::span<const float> emb) {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(kind));
  w.u64(peer);
  w.f32(weight);
  w.floats(emb);
  return std::move(w).str();
}

inline EmbRecord decode_emb(std::string_view bytes) {
  ByteReader in(bytes);
  EmbRecord r;
  auto tag = in.u8();
  if (tag != 'I' && tag != 'O' && tag != 'S') raise(ErrorKind::kCorruptRecord, "unknown embedding record");
  r.kind = static_cast<EmbKind>(tag);
  r.peer = in.u64();
  r.weight = in.f32();
  r.embedding = in.floats();
  if (!in.done()) raise(ErrorKind::kCorruptRecord, "trailing bytes in embedding record");
  return r;
}

/// Node v's next embedding from its own and its in-neighbors' embeddings,
/// evaluated with the batch layer code on a one-destination adjacency whose
/// rows are ascending by node id (the same source order a batch uses).
inline std::vector<float> node_layer(const LayerParams<float>& layer, NodeId self_id,
                                     std::span<const float> self_emb, std::span<const EmbRecord> in_edges,
                                     Activation act, WorkCounter& work) {
  std::vector<NodeId> ids{self_id};
  for (const auto& e : in_edges) ids.push_back(e.peer);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  auto row_of = [&](NodeId id) {
    return static_cast<std::uint32_t>(std::lower_bound(ids.begin(), ids.end(), id) - ids.begin());
  };
  Matrix<float> h(ids.size(), layer.in_dim);
  auto put = [&](NodeId id, std::span<const float> emb) {
    check_shape(emb.size() == layer.in_dim, "slice expects width " + std::to_string(layer.in_dim) +
                                                ", embedding has " + std::to_string(emb.size()));
    std::copy(emb.begin(), emb.end(), h.row(row_of(id)).begin());
  };
  put(self_id, self_emb);
  std::vector<AdjEntry> entries;
  const std::uint32_t v = row_of(self_id);
  for (const auto& e : in_edges) {
    if (e.peer != self_id) put(e.peer, e.embedding);
    entries.push_back({v, row_of(e.peer), e.weight, 0});
  }
  std::vector<std::uint8_t> active(ids.size(), 0);
  active[v] = 1;
  Adjacency a(ids.size(), std::move(entries), std::move(active));
  auto out = layer_forward<float>(layer, h, a, 1, nullptr, &work);
  std::vector<float> result(out.row(v).begin(), out.row(v).end());
  if (act == Activation::kRelu) {
    for (auto& x : result) x = x > 0 ? x : 0.0f;
  }
  return result;
}

}  // namespace detail

/// Nodes within `hops` reverse hops of any target.
inline NodeIdSet within_hops(const Graph& g, std::span<const NodeId> targets, int hops) {
  NodeIdSet seen;
  std::vector<NodeId> frontier;
  for (auto t : targets) {
    if (!g.contains(t)) raise(ErrorKind::kUnknownTarget, "node " + std::to_string(t));
    if (seen.insert(t).second) frontier.push_back(t);
  }
  for (int d = 0; d < hops && !frontier.empty(); ++d) {
    std::vector<NodeId> next;
    for (auto v : frontier) {
      for (const auto& e : g.in_edges(*g.index_of(v))) {
        if (seen.insert(e.src).second) next.push_back(e.src);
      }
    }
    frontier = std::move(next);
  }
  return seen;
}

inline InferResult run_inference(const Graph& input, const SegmentedModel& model, const InferOptions& opt = {}) {
  const int hops = model.config.hops();
  std::vector<LayerParams<float>> layers;
  for (int k = 0; k < hops; ++k) layers.push_back(parse_layer_block(model.slices[k].text, k));
  const HeadParams<float> head = parse_head_block(model.slices.back().text);
  if (layers.front().in_dim != input.node_dim()) {
    raise(ErrorKind::kShape, "model expects " + std::to_string(layers.front().in_dim) +
                                 " node features, graph has " + std::to_string(input.node_dim()));
  }
  const Activation act = model.config.activation;
  const LossKind loss = model.config.loss;

  // Sampling happens once, up front, with the GraphFlat selection rule; every
  // round then works on the same kept edges.
  Graph g = sampled_graph(input, opt.sampling, opt.reindex);
  if (opt.targets) g = induced_subgraph(g, within_hops(g, *opt.targets, hops));

  std::optional<TempDir> scratch;
  std::filesystem::path dir;
  if (opt.work_dir) {
    dir = *opt.work_dir;
  } else {
    scratch.emplace("agl-graphinfer");
    dir = scratch->path();
  }
  Engine engine({dir, opt.workers, opt.partitions, 64});

  auto mapper = [&](std::size_t v) {
    std::vector<KeyedRecord> out;
    const auto& node = g.node(v);
    out.push_back({{node.id, 0}, detail::encode_emb(detail::EmbKind::kSelf, node.id, 1.0f, node.features.values())});
    for (const auto& e : g.in_edges(v)) {
      const auto& src = g.node(*g.index_of(e.src));
      out.push_back({{node.id, 0}, detail::encode_emb(detail::EmbKind::kInEdge, e.src, e.weight, src.features.values())});
    }
    for (auto ei : g.out_edges(v)) {
      const auto& e = g.edges()[ei];
      out.push_back({{node.id, 0}, detail::encode_emb(detail::EmbKind::kOutEdge, e.dst, e.weight, {})});
    }
    return out;
  };

  auto reducer = [&](ReduceContext& ctx, const ShuffleKey& key, std::span<const std::string> values) {
    std::optional<detail::EmbRecord> self;
    std::vector<detail::EmbRecord> in_edges, out_edges;
    for (const auto& v : values) {
      auto r = detail::decode_emb(v);
      switch (r.kind) {
        case detail::EmbKind::kSelf:
          if (self) raise(ErrorKind::kMalformedGroup, "duplicate self record for key " + to_string(key));
          self = std::move(r);
          break;
        case detail::EmbKind::kInEdge: in_edges.push_back(std::move(r)); break;
        case detail::EmbKind::kOutEdge: out_edges.push_back(std::move(r)); break;
      }
    }
    if (!self) raise(ErrorKind::kMalformedGroup, "no self record for key " + to_string(key));
    std::sort(in_edges.begin(), in_edges.end(), [](const auto& a, const auto& b) { return a.peer < b.peer; });

    std::vector<KeyedRecord> out;
    WorkCounter work;
    if (ctx.round() == hops + 1) {
      check_shape(self->embedding.size() == head.weight.rows(), "head width");
      std::vector<float> logits(head.weight.cols());
      for (std::size_t c = 0; c < logits.size(); ++c) {
        float acc = 0;
        for (std::size_t i = 0; i < self->embedding.size(); ++i) acc += self->embedding[i] * head.weight(i, c);
        logits[c] = acc + head.bias(0, c);
      }
      work.embedding_evals += 1;
      auto probs = probabilities(std::span<const float>(logits), loss);
      out.push_back({key, detail::encode_emb(detail::EmbKind::kSelf, key.id, 1.0f, probs)});
    } else {
      const auto& layer = layers[static_cast<std::size_t>(ctx.round() - 1)];
      auto emb = detail::node_layer(layer, key.id, self->embedding, in_edges, act, work);
      out.push_back({key, detail::encode_emb(detail::EmbKind::kSelf, key.id, 1.0f, emb)});
      if (ctx.round() < hops) {
        for (const auto& e : out_edges) {
          out.push_back({{e.peer, 0}, detail::encode_emb(detail::EmbKind::kInEdge, key.id, e.weight, emb)});
          out.push_back({key, detail::encode_emb(detail::EmbKind::kOutEdge, e.peer, e.weight, {})});
        }
      }
    }
    ctx.count("graphinfer.embedding_evals", work.embedding_evals);
    ctx.count("graphinfer.aggregation_ops", work.aggregation_ops);
    return out;
  };

  std::vector<std::size_t> input_rows(g.num_nodes());
  for (std::size_t i = 0; i < input_rows.size(); ++i) input_rows[i] = i;
  auto ckpt = engine.run_job(std::span<const std::size_t>(input_rows), mapper, reducer, hops + 1);

  InferResult result;
  auto counters = engine.total_counters(hops + 1);
  result.work.embedding_evals = counters["graphinfer.embedding_evals"];
  result.work.aggregation_ops = counters["graphinfer.aggregation_ops"];
  std::set<NodeId> wanted;
  if (opt.targets) wanted.insert(opt.targets->begin(), opt.targets->end());
  engine.scan(ckpt, [&](const KeyedRecord& r) {
    if (opt.targets && !wanted.contains(r.key.id)) return;
    result.scores[r.key.id] = detail::decode_emb(r.value).embedding;
  });
  return result;
}

inline InferResult run_inference(const Graph& g, std::string_view checkpoint, const InferOptions& opt = {}) {
  return run_inference(g, segment_model(checkpoint), opt);
}

/// Reference: a GraphFeature per target and an independent pruned forward
/// for each, with no sharing of intermediate embeddings.
inline InferResult naive_oracle(const Graph& g, const Model<float>& model, std::span<const NodeId> targets,
                                const SamplingStrategy& sampling = {},
                                const ReindexConfig& reindex = ReindexConfig::disabled()) {
  FlatOptions fo;
  fo.sampling = sampling;
  fo.reindex = reindex;
  auto gfs = build_graphfeatures(g, targets, model.config.hops(), fo);
  InferResult result;
  ForwardOptions opt;
  opt.work = &result.work;
  for (auto& [id, gf] : gfs) {
    std::vector<Triple> one{{id, {}, std::move(gf)}};
    auto batch = vectorize(one);
    auto logits = forward(model, batch, opt);
    result.scores[id] = probabilities<float>(logits.row(0), model.config.loss);
  }
  return result;
}

}  // namespace agl
