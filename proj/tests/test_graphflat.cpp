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

#include "agl/graphflat.hpp"

#include <gtest/gtest.h>

#include <map>

#include "test_util.hpp"

namespace agl {
namespace {

using testing::all_ids;
using testing::random_graph;
using testing::toy_graph;

std::vector<NodeId> node_ids(const GraphFeature& gf) {
  std::vector<NodeId> ids;
  for (const auto& n : gf.nodes) ids.push_back(n.id);
  return ids;
}

std::vector<std::pair<NodeId, NodeId>> edge_pairs(const GraphFeature& gf) {
  std::vector<std::pair<NodeId, NodeId>> out;
  for (const auto& e : gf.edges) out.emplace_back(e.src, e.dst);
  return out;
}

/// Map records grouped by key, values sorted as the engine would present them.
std::map<NodeId, std::vector<std::string>> groups_of(std::vector<KeyedRecord> records) {
  std::sort(records.begin(), records.end());
  std::map<NodeId, std::vector<std::string>> out;
  for (auto& r : records) out[r.key.id].push_back(std::move(r.value));
  return out;
}

std::string kinds(const std::vector<std::string>& values) {
  std::string s;
  for (const auto& v : values) s.push_back(v[0]);
  std::sort(s.begin(), s.end());
  return s;
}

Graph star(std::size_t leaves) {
  return generate_synthetic({.n = leaves + 1, .model = SyntheticModel::kStar, .seed = 1});
}

TEST(FlatMap, ToyGroups) {
  auto groups = groups_of(flat_map(toy_graph()));
  EXPECT_EQ(kinds(groups[0]), "IS");
  EXPECT_EQ(kinds(groups[3]), "OS");
  auto in0 = decode_info(groups[0][0]);
  EXPECT_EQ(in0.kind, InfoKind::kInEdge);
  EXPECT_EQ(in0.peer, 1u);
  auto out3 = decode_info(groups[3][0]);
  EXPECT_EQ(out3.kind, InfoKind::kOutEdge);
  EXPECT_EQ(out3.peer, 2u);
}

TEST(FlatMap, IsolatedNode) {
  Graph g({{9, {1.0f}}}, {});
  auto records = flat_map(g);
  ASSERT_EQ(records.size(), 1u);
  EXPECT_EQ(decode_info(records[0].value).kind, InfoKind::kSelf);
}

TEST(FlatMap, StarHubGroupSize) {
  auto groups = groups_of(flat_map(star(100)));
  EXPECT_EQ(groups[0].size(), 101u);
}

TEST(InfoCodec, RoundTrip) {
  auto hood = std::make_shared<const Neighborhood>(
      Neighborhood{{3, {1.0f, -0.0f, 0.0f}, {{1, 0.5f, {2.0f}}, {2, 1.5f, {0.0f}}}}});
  InfoRecord in{InfoKind::kInEdge, 3, 0.25f, {7.0f}, hood};
  auto bytes = encode_info(in);
  auto back = decode_info(bytes);
  EXPECT_EQ(encode_info(back), bytes);
  EXPECT_EQ(back.hood->at(0).in_row[1].weight, 1.5f);
  EXPECT_TRUE(std::signbit(back.hood->at(0).features[1]));
  EXPECT_THROW(decode_info(bytes.substr(0, bytes.size() - 1)), Error);
  EXPECT_THROW(decode_info(bytes + "x"), Error);
}

class ReduceHarness {
 public:
  explicit ReduceHarness(std::vector<KeyedRecord> records) : groups_(groups_of(std::move(records))) {}

  /// Runs one round over every group and regroups the output.
  void round(const FlatReduceOptions& opt) {
    std::vector<KeyedRecord> next;
    ReduceContext ctx(++round_, counters_);
    for (const auto& [id, values] : groups_) {
      auto out = flat_reduce(ctx, {id, 0}, values, opt);
      std::move(out.begin(), out.end(), std::back_inserter(next));
    }
    last_ = next;
    groups_ = groups_of(std::move(next));
  }

  GraphFeature self_of(NodeId id, int hop) const {
    for (const auto& v : groups_.at(id)) {
      if (v[0] == 'S') return to_graphfeature(id, hop, *decode_info(v).hood);
    }
    throw std::runtime_error("no self");
  }

  const std::vector<KeyedRecord>& last() const { return last_; }

 private:
  std::map<NodeId, std::vector<std::string>> groups_;
  std::vector<KeyedRecord> last_;
  Counters counters_;
  int round_ = 0;
};

TEST(FlatReduce, ToyRoundOneKeyOne) {
  ReduceHarness h(flat_map(toy_graph()));
  h.round({});
  auto gf = h.self_of(1, 1);
  EXPECT_EQ(node_ids(gf), (std::vector<NodeId>{1, 2}));
  EXPECT_EQ(edge_pairs(gf), (std::vector<std::pair<NodeId, NodeId>>{{2, 1}}));
  bool sent_to_zero = false;
  for (const auto& r : h.last()) {
    if (r.key.id == 0 && r.value[0] == 'I') sent_to_zero |= decode_info(r.value).peer == 1;
  }
  EXPECT_TRUE(sent_to_zero);
}

TEST(FlatReduce, ToyRoundTwoKeyZero) {
  ReduceHarness h(flat_map(toy_graph()));
  h.round({});
  h.round({});
  auto gf = h.self_of(0, 2);
  EXPECT_EQ(node_ids(gf), (std::vector<NodeId>{0, 1, 2}));
  EXPECT_EQ(edge_pairs(gf), (std::vector<std::pair<NodeId, NodeId>>{{1, 0}, {2, 1}}));
}

TEST(FlatReduce, StarHubFanoutBound) {
  auto g = star(100);
  auto s = parse_sampling("uniform:10", 3);
  ReduceHarness h(flat_map(g, s));
  h.round({s});
  EXPECT_EQ(h.self_of(0, 1).nodes.size(), 11u);
}

TEST(FlatReduce, MalformedGroups) {
  auto groups = groups_of(flat_map(toy_graph()));
  Counters c;
  ReduceContext ctx(1, c);
  std::vector<std::string> no_self;
  for (const auto& v : groups[0]) {
    if (v[0] != 'S') no_self.push_back(v);
  }
  try {
    flat_reduce(ctx, {0, 0}, no_self, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kMalformedGroup);
  }
  auto doubled = groups[0];
  doubled.push_back(groups[0].back());
  try {
    flat_reduce(ctx, {0, 0}, doubled, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kMalformedGroup);
  }
}

TEST(BuildGraphFeatures, ToyExamples) {
  auto g = toy_graph();
  auto k0 = build_graphfeatures(g, {0}, 0);
  EXPECT_EQ(node_ids(k0.at(0)), (std::vector<NodeId>{0}));
  EXPECT_TRUE(k0.at(0).edges.empty());

  auto k2 = build_graphfeatures(g, {0}, 2);
  EXPECT_EQ(node_ids(k2.at(0)), (std::vector<NodeId>{0, 1, 2}));
  EXPECT_EQ(edge_pairs(k2.at(0)), (std::vector<std::pair<NodeId, NodeId>>{{1, 0}, {2, 1}}));

  auto k1 = build_graphfeatures(g, {0, 2}, 1);
  ASSERT_EQ(k1.size(), 2u);
  EXPECT_EQ(node_ids(k1.at(0)), (std::vector<NodeId>{0, 1}));
  EXPECT_EQ(node_ids(k1.at(2)), (std::vector<NodeId>{2, 3}));
}

TEST(BuildGraphFeatures, UnknownTarget) {
  try {
    build_graphfeatures(toy_graph(), {17}, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kUnknownTarget);
  }
}

TEST(KhopOracle, Examples) {
  auto g = toy_graph();
  auto a = khop_oracle(g, 0, 1);
  EXPECT_EQ(node_ids(a), (std::vector<NodeId>{0, 1}));
  EXPECT_EQ(edge_pairs(a), (std::vector<std::pair<NodeId, NodeId>>{{1, 0}}));
  auto b = khop_oracle(g, 3, 3);
  EXPECT_EQ(node_ids(b), (std::vector<NodeId>{3}));
  EXPECT_TRUE(b.edges.empty());
  auto c = khop_oracle(symmetrize(g), 1, 1);
  EXPECT_EQ(node_ids(c), (std::vector<NodeId>{0, 1, 2}));
  EXPECT_EQ(edge_pairs(c), (std::vector<std::pair<NodeId, NodeId>>{{1, 0}, {0, 1}, {2, 1}, {1, 2}}));
}

TEST(BuildGraphFeatures, OracleEquivalenceOnRandomGraphs) {
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    auto g = random_graph(seed, {.nodes = 20 + seed * 3, .edges = 30 + seed * 8, .node_dim = 2,
                                 .edge_dim = seed % 2, .self_loops = seed % 3 == 0});
    auto ids = all_ids(g);
    for (int k = 0; k <= 3; ++k) {
      FlatOptions opt;
      opt.workers = 1 + seed % 3;
      auto out = build_graphfeatures(g, ids, k, opt);
      ASSERT_EQ(out.size(), ids.size());
      for (auto id : ids) {
        ASSERT_EQ(to_text(out.at(id)), to_text(khop_oracle(g, id, k))) << "seed " << seed << " k " << k;
      }
    }
  }
}

TEST(BuildGraphFeatures, ReindexIsTransparentWithoutSampling) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    auto g = random_graph(seed, {.nodes = 30, .edges = 150, .node_dim = 2});
    auto ids = all_ids(g);
    FlatOptions forced;
    forced.reindex = {2, 4, seed};
    auto plain = build_graphfeatures(g, ids, 2);
    auto split = build_graphfeatures(g, ids, 2, forced);
    for (auto id : ids) EXPECT_EQ(to_text(split.at(id)), to_text(plain.at(id)));
  }
}

TEST(BuildGraphFeatures, SamplingBoundAndConsistency) {
  auto g = generate_synthetic({.n = 400, .model = SyntheticModel::kPowerLaw, .seed = 2, .node_dim = 2});
  auto ids = all_ids(g);
  for (auto kind : {"uniform:3", "weighted:3", "uniform:5"}) {
    for (bool reindex : {false, true}) {
      FlatOptions opt;
      opt.sampling = parse_sampling(kind, 11);
      if (reindex) opt.reindex = {8, 4, 5};
      opt.workers = 2;
      auto out = build_graphfeatures(g, ids, 2, opt);
      auto reduced = sampled_graph(g, opt.sampling, opt.reindex);
      for (auto id : ids) {
        const auto& gf = out.at(id);
        std::map<NodeId, std::size_t> indeg;
        for (const auto& e : gf.edges) ++indeg[e.dst];
        for (const auto& [v, d] : indeg) ASSERT_LE(d, opt.sampling.fanout);
        // Sampled output is the exact neighborhood of the sampled graph.
        ASSERT_EQ(to_text(gf), to_text(khop_oracle(reduced, id, 2))) << kind;
      }
    }
  }
}

TEST(Sampling, WeightedPrefersHeavyEdges) {
  // One destination, 40 light sources and 40 heavy sources, keep 10.
  std::vector<Candidate> cands;
  for (NodeId i = 0; i < 80; ++i) cands.push_back({i, i < 40 ? 0.1f : 10.0f});
  std::size_t heavy = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto picked = sample_group({1000 + seed, 0}, cands, 10, parse_sampling("weighted:10", seed));
    ASSERT_EQ(picked.size(), 10u);
    for (auto i : picked) heavy += i >= 40;
  }
  EXPECT_GT(heavy, 450u);
}

TEST(Sampling, ParseRejectsBadSpecs) {
  EXPECT_THROW(parse_sampling("uniform"), Error);
  EXPECT_THROW(parse_sampling("uniform:0"), Error);
  EXPECT_THROW(parse_sampling("topk:3"), Error);
  EXPECT_EQ(to_string(parse_sampling("weighted:7")), "weighted:7");
}

TEST(Reindex, QuotasSumToFanout) {
  ReindexConfig r{10, 8, 0};
  for (std::size_t f : {1, 7, 8, 9, 25}) {
    std::size_t total = 0;
    for (std::uint32_t s = 1; s <= 8; ++s) total += suffix_quota(s, f, r);
    EXPECT_EQ(total, f);
  }
}

TEST(BuildGraphFeatures, HubsAreCounted) {
  auto g = star(50);
  FlatOptions opt;
  opt.reindex = {10, 4, 0};
  TempDir dir;
  opt.work_dir = dir.path();
  build_graphfeatures(g, {0}, 1, opt);
  Engine engine({dir.path()});
  EXPECT_EQ(engine.total_counters(1).at("graphflat.reindexed_keys"), 1u);
}

TEST(BuildGraphFeatures, Monotone) {
  auto g = random_graph(21, {.nodes = 60, .edges = 120});
  auto ids = all_ids(g);
  std::map<NodeId, GraphFeature> prev = build_graphfeatures(g, ids, 0);
  for (int k = 1; k <= 4; ++k) {
    auto cur = build_graphfeatures(g, ids, k);
    for (auto id : ids) {
      auto a = node_ids(prev.at(id)), b = node_ids(cur.at(id));
      EXPECT_TRUE(std::includes(b.begin(), b.end(), a.begin(), a.end()));
    }
    prev = std::move(cur);
  }
}

TEST(Triples, LineRoundTrip) {
  auto g = random_graph(4, {.nodes = 10, .edges = 25, .node_dim = 3, .edge_dim = 2});
  auto gfs = build_graphfeatures(g, all_ids(g), 2);
  std::vector<Triple> triples;
  int i = 0;
  for (auto& [id, gf] : gfs) {
    Label label;
    if (i % 3 == 0) label.cls = i % 5;
    if (i % 3 == 1) label.multi = {1, 0, 1};
    triples.push_back({id, label, gf});
    ++i;
  }
  TempDir dir;
  auto path = dir.path() / "triples.tsv";
  write_triples(path, triples);
  auto back = read_triples(path);
  ASSERT_EQ(back.size(), triples.size());
  for (std::size_t j = 0; j < back.size(); ++j) {
    EXPECT_EQ(back[j].target, triples[j].target);
    EXPECT_EQ(back[j].label, triples[j].label);
    EXPECT_EQ(to_line(back[j]), to_line(triples[j]));
  }
}

TEST(Triples, Labels) {
  EXPECT_EQ(parse_label("-1").cls, -1);
  EXPECT_EQ(parse_label("6").cls, 6);
  EXPECT_EQ(parse_label("0,1,1").multi, (std::vector<std::uint8_t>{0, 1, 1}));
  EXPECT_THROW(parse_label("0,2"), Error);
  EXPECT_THROW(parse_label("-3"), Error);
  auto table = parse_label_table("0\t1\n5\t0,1\n");
  EXPECT_EQ(table.at(0).cls, 1);
  EXPECT_TRUE(table.at(5).is_multi());
  EXPECT_THROW(parse_label_table("0\t1\n0\t2\n"), Error);
}

}  // namespace
}  // namespace agl
