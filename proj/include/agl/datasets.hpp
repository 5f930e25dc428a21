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

// Node-classification datasets: the LINQS Cora release, a prepared TSV
// layout, and a seeded synthetic citation graph with planted classes.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "agl/error.hpp"
#include "agl/graph_store.hpp"
#include "agl/graphflat.hpp"
#include "agl/io_util.hpp"

namespace agl {

struct Dataset {
  std::string name;
  Graph graph;
  std::map<NodeId, Label> labels;
  std::size_t classes = 0;
  std::vector<NodeId> train, val, test;
};

struct SplitSpec {
  std::size_t per_class = 20;
  std::size_t val = 500;
  std::size_t test = 1000;
  std::uint64_t seed = 0;
};

/// Seeded shuffle of the labeled nodes; the first `per_class` of each class
/// train, then the next `val` and `test` nodes of the remainder.
inline void assign_split(Dataset& d, const SplitSpec& s) {
  std::vector<NodeId> ids;
  for (const auto& [id, l] : d.labels) {
    if (l.cls >= 0) ids.push_back(id);
  }
  std::mt19937_64 rng(mix_seed(s.seed, 0x59117ULL));
  std::shuffle(ids.begin(), ids.end(), rng);
  std::vector<std::size_t> taken(d.classes, 0);
  std::vector<NodeId> rest;
  d.train.clear();
  d.val.clear();
  d.test.clear();
  for (auto id : ids) {
    auto c = static_cast<std::size_t>(d.labels.at(id).cls);
    if (taken[c] < s.per_class) {
      ++taken[c];
      d.train.push_back(id);
    } else {
      rest.push_back(id);
    }
  }
  for (auto id : rest) {
    if (d.val.size() < s.val) {
      d.val.push_back(id);
    } else if (d.test.size() < s.test) {
      d.test.push_back(id);
    }
  }
  std::sort(d.train.begin(), d.train.end());
  std::sort(d.val.begin(), d.val.end());
  std::sort(d.test.begin(), d.test.end());
}

namespace detail {

/// Undirected simple graph over `nodes`: both directions of every distinct
/// pair, self-loops dropped.
inline Graph undirected(std::vector<NodeRecord> nodes, const std::set<std::pair<NodeId, NodeId>>& pairs) {
  std::vector<EdgeRecord> edges;
  for (const auto& [a, b] : pairs) {
    edges.push_back({a, b, 1.0f, {}});
    edges.push_back({b, a, 1.0f, {}});
  }
  return Graph(std::move(nodes), std::move(edges));
}

inline void row_normalize(std::vector<float>& v) {
  double s = 0;
  for (float x : v) s += x;
  if (s > 0) {
    for (auto& x : v) x = static_cast<float>(x / s);
  }
}

}  // namespace detail

/// LINQS Cora: `cora.content` (<paper> <1433 binary words> <class>) and
/// `cora.cites` (<cited> <citing>). Citations become undirected edges and
/// features are row-normalized.
inline Dataset load_cora(const std::filesystem::path& dir, const SplitSpec& split_spec = {}) {
  Dataset d;
  d.name = "cora";
  auto content = read_file(dir / "cora.content");
  auto cites = read_file(dir / "cora.cites");
  std::vector<NodeRecord> nodes;
  std::map<NodeId, std::string> raw_labels;
  std::set<std::string> class_names;
  std::size_t dim = 0;
  detail::for_each_line(content, [&](std::string_view line, std::size_t line_no) {
    std::vector<std::string_view> f;
    std::size_t pos = 0;
    while (pos < line.size()) {
      auto end = line.find_first_of(" \t", pos);
      if (end == std::string_view::npos) end = line.size();
      if (end > pos) f.push_back(line.substr(pos, end - pos));
      pos = end + 1;
    }
    if (f.size() < 3) raise(ErrorKind::kParse, "cora.content line " + std::to_string(line_no));
    NodeId id = 0;
    if (!parse_u64(f[0], id)) raise(ErrorKind::kParse, "cora.content line " + std::to_string(line_no) + ": id");
    std::vector<float> x;
    for (std::size_t i = 1; i + 1 < f.size(); ++i) {
      float v = 0;
      if (!parse_float(f[i], v)) raise(ErrorKind::kParse, "cora.content line " + std::to_string(line_no) + ": word");
      x.push_back(v);
    }
    if (dim == 0) dim = x.size();
    if (x.size() != dim) raise(ErrorKind::kSchema, "cora.content line " + std::to_string(line_no) + ": width");
    detail::row_normalize(x);
    nodes.push_back({id, FeatureRow(std::move(x))});
    raw_labels[id] = std::string(f.back());
    class_names.insert(std::string(f.back()));
  });
  std::map<std::string, int> class_index;
  for (const auto& c : class_names) class_index.emplace(c, static_cast<int>(class_index.size()));
  d.classes = class_index.size();
  for (const auto& [id, c] : raw_labels) d.labels[id].cls = class_index.at(c);

  std::set<std::pair<NodeId, NodeId>> pairs;
  detail::for_each_line(cites, [&](std::string_view line, std::size_t line_no) {
    auto tab = line.find_first_of(" \t");
    NodeId a = 0, b = 0;
    if (tab == std::string_view::npos || !parse_u64(line.substr(0, tab), a) ||
        !parse_u64(line.substr(line.find_first_not_of(" \t", tab)), b)) {
      raise(ErrorKind::kParse, "cora.cites line " + std::to_string(line_no));
    }
    if (a == b || !raw_labels.count(a) || !raw_labels.count(b)) return;
    pairs.insert(std::minmax(a, b));
  });
  d.graph = detail::undirected(std::move(nodes), pairs);
  assign_split(d, split_spec);
  return d;
}

/// Prepared layout: nodes.tsv, edges.tsv (graph_store tables), labels.tsv
/// (<id>\t<label>) and split.tsv (<id>\t<train|val|test>).
inline Dataset load_prepared(const std::filesystem::path& dir) {
  Dataset d;
  d.name = dir.filename().string();
  d.graph = load_graph(dir / "nodes.tsv", dir / "edges.tsv");
  d.labels = parse_label_table(read_file(dir / "labels.tsv"));
  int max_cls = -1;
  for (const auto& [id, l] : d.labels) {
    if (l.is_multi()) {
      d.classes = std::max(d.classes, l.multi.size());
    } else {
      max_cls = std::max(max_cls, l.cls);
    }
  }
  d.classes = std::max<std::size_t>(d.classes, static_cast<std::size_t>(max_cls + 1));
  auto split_text = read_file(dir / "split.tsv");
  detail::for_each_line(split_text, [&](std::string_view line, std::size_t line_no) {
    auto f = split(line, '\t');
    NodeId id = 0;
    if (f.size() != 2 || !parse_u64(f[0], id)) raise(ErrorKind::kParse, "split.tsv line " + std::to_string(line_no));
    if (f[1] == "train") {
      d.train.push_back(id);
    } else if (f[1] == "val") {
      d.val.push_back(id);
    } else if (f[1] == "test") {
      d.test.push_back(id);
    } else {
      raise(ErrorKind::kParse, "split.tsv line " + std::to_string(line_no) + ": unknown split");
    }
  });
  return d;
}

/// Writes `d` in the prepared layout.
inline void save_prepared(const Dataset& d, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<NodeRecord> nodes(d.graph.nodes().begin(), d.graph.nodes().end());
  std::vector<EdgeRecord> edges(d.graph.edges().begin(), d.graph.edges().end());
  write_file(dir / "nodes.tsv", write_node_table(std::move(nodes)));
  write_file(dir / "edges.tsv", write_edge_table(std::move(edges)));
  std::string labels, split_text;
  for (const auto& [id, l] : d.labels) labels += std::to_string(id) + "\t" + to_string(l) + "\n";
  write_file(dir / "labels.tsv", labels);
  for (const auto& [name, ids] : {std::pair{"train", &d.train}, {"val", &d.val}, {"test", &d.test}}) {
    for (auto id : *ids) split_text += std::to_string(id) + "\t" + name + "\n";
  }
  write_file(dir / "split.tsv", split_text);
}

struct CitationSpec {
  std::size_t n = 1000;
  std::size_t classes = 5;
  std::size_t words = 200;        // vocabulary
  std::size_t words_per_node = 12;
  double topical = 0.35;          // chance a word comes from the class topic
  std::size_t cites_per_node = 2;
  double homophily = 0.8;         // chance a citation stays inside the class
  std::uint64_t seed = 0;
};

/// Planted-partition citation graph with bag-of-words features. Each class
/// owns a slice of the vocabulary; node words are topical with probability
/// `topical`, so features alone are a weak signal and neighbors help.
inline Dataset synthetic_citation(const CitationSpec& s, const SplitSpec& split_spec = {}) {
  if (s.n == 0 || s.classes == 0 || s.words < s.classes) raise(ErrorKind::kEmptySpec, "citation spec is empty");
  Dataset d;
  d.name = "citation";
  d.classes = s.classes;
  std::mt19937_64 rng(mix_seed(s.seed, 0xc17eULL));
  std::vector<int> cls(s.n);
  std::vector<std::vector<NodeId>> members(s.classes);
  for (std::size_t i = 0; i < s.n; ++i) {
    cls[i] = static_cast<int>(i % s.classes);
    members[cls[i]].push_back(i);
  }
  const std::size_t slice = s.words / s.classes;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<NodeRecord> nodes;
  for (std::size_t i = 0; i < s.n; ++i) {
    std::vector<float> x(s.words, 0.0f);
    for (std::size_t k = 0; k < s.words_per_node; ++k) {
      std::size_t w = unit(rng) < s.topical ? cls[i] * slice + rng() % slice : rng() % s.words;
      x[w] = 1.0f;
    }
    detail::row_normalize(x);
    nodes.push_back({i, FeatureRow(std::move(x))});
    d.labels[i].cls = cls[i];
  }
  std::set<std::pair<NodeId, NodeId>> pairs;
  for (std::size_t i = 0; i < s.n; ++i) {
    for (std::size_t k = 0; k < s.cites_per_node; ++k) {
      NodeId j = unit(rng) < s.homophily ? members[cls[i]][rng() % members[cls[i]].size()] : rng() % s.n;
      if (j != i) pairs.insert(std::minmax<NodeId>(i, j));
    }
  }
  d.graph = detail::undirected(std::move(nodes), pairs);
  assign_split(d, split_spec);
  return d;
}

/// GraphFeature triples for `ids` at depth `hops`.
inline std::vector<Triple> make_triples(const Dataset& d, std::span<const NodeId> ids, int hops,
                                        const FlatOptions& opt = {}) {
  auto gfs = build_graphfeatures(d.graph, ids, hops, opt);
  std::vector<Triple> out;
  out.reserve(ids.size());
  for (auto id : ids) {
    auto it = d.labels.find(id);
    out.push_back({id, it == d.labels.end() ? Label{} : it->second, std::move(gfs.at(id))});
  }
  return out;
}

}  // namespace agl
