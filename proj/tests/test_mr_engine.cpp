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

#include "agl/mr_engine.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <map>
#include <random>

#include "agl/graphflat.hpp"
#include "test_util.hpp"

namespace agl {
namespace {

namespace fs = std::filesystem;

struct Pair {
  std::uint64_t key;
  std::uint64_t value;
};

std::string u64_bytes(std::uint64_t v) {
  ByteWriter w;
  w.u64(v);
  return std::move(w).str();
}

std::uint64_t bytes_u64(std::string_view s) { return ByteReader(s).u64(); }

std::vector<KeyedRecord> identity_map(const Pair& p) { return {{{p.key, 0}, u64_bytes(p.value)}}; }

std::vector<KeyedRecord> sum_reduce(ReduceContext& ctx, const ShuffleKey& key,
                                    std::span<const std::string> values) {
  std::uint64_t total = 0;
  for (const auto& v : values) total += bytes_u64(v);
  ctx.count("groups", 1);
  return {{key, u64_bytes(total)}};
}

/// File name -> bytes for one checkpoint directory.
std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    files[entry.path().filename().string()] = read_file(entry.path());
  }
  return files;
}

std::vector<Pair> random_pairs(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Pair> out(n);
  for (auto& p : out) p = {rng() % 500, rng() % 1000};
  return out;
}

TEST(RunMap, IdentityMapperSorted) {
  TempDir dir;
  Engine engine({dir.path(), 1});
  std::vector<Pair> input{{4, 1}, {2, 9}, {7, 3}, {2, 1}, {0, 5}};
  auto ckpt = engine.run_map(std::span<const Pair>(input), identity_map);
  EXPECT_EQ(ckpt.record_count, 5u);
  auto all = engine.read_all(ckpt);
  ASSERT_EQ(all.size(), 5u);
  EXPECT_TRUE(std::is_sorted(all.begin(), all.end()));
  EXPECT_EQ(all.front().key.id, 0u);
  EXPECT_EQ(all.back().key.id, 7u);
}

TEST(RunMap, WorkerCountDoesNotChangeBytes) {
  auto input = random_pairs(3000, 3);
  TempDir a, b;
  Engine e1({a.path(), 1, 8, 16});
  Engine e4({b.path(), 4, 8, 16});
  e1.run_map(std::span<const Pair>(input), identity_map);
  e4.run_map(std::span<const Pair>(input), identity_map);
  EXPECT_EQ(snapshot(e1.round_dir(0)), snapshot(e4.round_dir(0)));
}

TEST(RunMap, GraphFlatMapperOnToy) {
  auto g = testing::toy_graph();
  FlatMapper mapper(g, {}, ReindexConfig::disabled());
  std::vector<std::size_t> input{0, 1, 2, 3};
  TempDir dir;
  Engine engine({dir.path(), 2});
  auto ckpt = engine.run_map(std::span<const std::size_t>(input), mapper);
  std::map<char, int> kinds;
  for (const auto& r : engine.read_all(ckpt)) ++kinds[r.value[0]];
  EXPECT_EQ(ckpt.record_count, 10u);
  EXPECT_EQ(kinds['S'], 4);
  EXPECT_EQ(kinds['I'], 3);
  EXPECT_EQ(kinds['O'], 3);
}

TEST(RunMap, MapperFailureNamesRecord) {
  TempDir dir;
  Engine engine({dir.path(), 2, 8, 2});
  std::vector<Pair> input(10, Pair{1, 1});
  input[7].value = 666;
  try {
    engine.run_map(std::span<const Pair>(input), [](const Pair& p) {
      if (p.value == 666) throw std::runtime_error("bad");
      return identity_map(p);
    });
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kMapError);
    EXPECT_NE(std::string(e.what()).find("record 7"), std::string::npos);
  }
}

TEST(RunReduce, SumReducer) {
  TempDir dir;
  Engine engine({dir.path(), 2});
  // a = 1, b = 2
  std::vector<Pair> input{{1, 1}, {1, 2}, {2, 3}};
  auto ckpt = engine.run_reduce_round(engine.run_map(std::span<const Pair>(input), identity_map), sum_reduce);
  auto all = engine.read_all(ckpt);
  ASSERT_EQ(all.size(), 2u);
  EXPECT_EQ(all[0].key.id, 1u);
  EXPECT_EQ(bytes_u64(all[0].value), 3u);
  EXPECT_EQ(all[1].key.id, 2u);
  EXPECT_EQ(bytes_u64(all[1].value), 3u);
  EXPECT_EQ(ckpt.counters.at("groups"), 2u);
}

TEST(RunReduce, ValuesArriveInByteOrderAndGroupsAreWhole) {
  TempDir dir;
  Engine engine({dir.path(), 3, 4, 5});
  auto input = random_pairs(2000, 9);
  std::map<std::uint64_t, std::size_t> expected;
  for (const auto& p : input) ++expected[p.key];
  auto map_ckpt = engine.run_map(std::span<const Pair>(input), identity_map);
  std::mutex mu;
  std::map<std::uint64_t, std::size_t> seen;
  engine.run_reduce_round(map_ckpt, [&](ReduceContext&, const ShuffleKey& key, std::span<const std::string> values) {
    EXPECT_TRUE(std::is_sorted(values.begin(), values.end()));
    std::lock_guard lock(mu);
    EXPECT_FALSE(seen.contains(key.id)) << "group split";
    seen[key.id] = values.size();
    return std::vector<KeyedRecord>{};
  });
  EXPECT_EQ(seen, expected);
}

TEST(RunReduce, WorkerCountInvariance) {
  auto input = random_pairs(10000, 1);
  TempDir a, b;
  Engine e1({a.path(), 1});
  Engine e8({b.path(), 8});
  auto c1 = e1.run_reduce_round(e1.run_map(std::span<const Pair>(input), identity_map), sum_reduce);
  auto c8 = e8.run_reduce_round(e8.run_map(std::span<const Pair>(input), identity_map), sum_reduce);
  EXPECT_EQ(snapshot(c1.path), snapshot(c8.path));
}

TEST(RunReduce, EmptyCheckpoint) {
  TempDir dir;
  Engine engine({dir.path(), 2});
  std::vector<Pair> none;
  auto ckpt = engine.run_reduce_round(engine.run_map(std::span<const Pair>(none), identity_map), sum_reduce);
  EXPECT_EQ(ckpt.record_count, 0u);
  EXPECT_TRUE(engine.read_all(ckpt).empty());
}

TEST(RunReduce, ReducerFailureNamesKey) {
  TempDir dir;
  Engine engine({dir.path(), 1});
  std::vector<Pair> input{{3, 1}, {42, 1}};
  auto map_ckpt = engine.run_map(std::span<const Pair>(input), identity_map);
  try {
    engine.run_reduce_round(map_ckpt, [](ReduceContext& ctx, const ShuffleKey& key, std::span<const std::string> v) {
      if (key.id == 42) throw std::runtime_error("boom");
      return sum_reduce(ctx, key, v);
    });
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kReduceError);
    EXPECT_NE(std::string(e.what()).find("key 42"), std::string::npos);
  }
}

TEST(RunReduce, OutOfOrderCheckpointIsRejected) {
  TempDir dir;
  Engine engine({dir.path(), 1, 1});
  std::vector<Pair> input{{1, 1}, {2, 2}, {3, 3}};
  auto ckpt = engine.run_map(std::span<const Pair>(input), identity_map);
  // Rewrite the single partition in reverse order.
  auto records = engine.read_all(ckpt);
  std::string bytes;
  for (auto it = records.rbegin(); it != records.rend(); ++it) detail::encode_record(bytes, *it);
  write_file(ckpt.path / Engine::part_name(0), bytes);
  try {
    engine.run_reduce_round(ckpt, sum_reduce);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kCorruptCheckpoint);
  }
}

TEST(RunReduce, TruncatedCheckpointIsRejected) {
  TempDir dir;
  Engine engine({dir.path(), 1, 1});
  std::vector<Pair> input{{1, 1}, {2, 2}};
  auto ckpt = engine.run_map(std::span<const Pair>(input), identity_map);
  auto part = ckpt.path / Engine::part_name(0);
  auto bytes = read_file(part);
  write_file(part, bytes.substr(0, bytes.size() - 3));
  try {
    engine.run_reduce_round(ckpt, sum_reduce);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kCorruptCheckpoint);
  }
}

// Chain reducer: each round folds the key into a smaller key space.
std::vector<KeyedRecord> halve_reduce(ReduceContext& ctx, const ShuffleKey& key,
                                      std::span<const std::string> values) {
  auto out = sum_reduce(ctx, key, values);
  out[0].key.id /= 2;
  return out;
}

TEST(RunJob, ZeroRoundsReturnsMapCheckpoint) {
  TempDir dir;
  Engine engine({dir.path(), 2});
  auto input = random_pairs(100, 4);
  auto ckpt = engine.run_job(std::span<const Pair>(input), identity_map, sum_reduce, 0);
  EXPECT_EQ(ckpt.round_index, 0);
  EXPECT_EQ(ckpt.record_count, 100u);
}

TEST(RunJob, EqualsFoldedRounds) {
  auto input = random_pairs(500, 5);
  TempDir a, b;
  Engine job({a.path(), 2});
  Engine manual({b.path(), 2});
  auto j = job.run_job(std::span<const Pair>(input), identity_map, halve_reduce, 3);
  auto m = manual.run_map(std::span<const Pair>(input), identity_map);
  for (int r = 0; r < 3; ++r) m = manual.run_reduce_round(m, halve_reduce);
  EXPECT_EQ(snapshot(j.path), snapshot(m.path));
}

TEST(RunJob, ResumeAfterEveryRoundIsByteIdentical) {
  auto input = random_pairs(800, 6);
  const int rounds = 3;
  TempDir ref_dir;
  Engine ref({ref_dir.path(), 1});
  auto expected = snapshot(ref.run_job(std::span<const Pair>(input), identity_map, halve_reduce, rounds).path);

  for (int kill_after = 0; kill_after < rounds; ++kill_after) {
    TempDir dir;
    Engine first({dir.path(), 2});
    first.run_job(std::span<const Pair>(input), identity_map, halve_reduce, kill_after);
    int calls = 0;
    Engine second({dir.path(), 4});
    auto counted = [&](ReduceContext& ctx, const ShuffleKey& k, std::span<const std::string> v) {
      if (ctx.round() <= kill_after) ++calls;
      return halve_reduce(ctx, k, v);
    };
    auto mapper_calls = 0;
    auto mapper = [&](const Pair& p) {
      ++mapper_calls;
      return identity_map(p);
    };
    auto ckpt = second.run_job(std::span<const Pair>(input), mapper, counted, rounds);
    EXPECT_EQ(snapshot(ckpt.path), expected) << "kill after round " << kill_after;
    EXPECT_EQ(calls, 0) << "completed rounds recomputed";
    EXPECT_EQ(mapper_calls, 0);
  }
}

TEST(RunJob, IncompleteRoundIsRecomputed) {
  auto input = random_pairs(300, 8);
  TempDir ref_dir, dir;
  Engine ref({ref_dir.path(), 1});
  auto expected = snapshot(ref.run_job(std::span<const Pair>(input), identity_map, halve_reduce, 2).path);
  Engine engine({dir.path(), 2});
  auto ckpt = engine.run_job(std::span<const Pair>(input), identity_map, halve_reduce, 2);
  fs::remove(ckpt.path / "_SUCCESS");  // a crash before the marker landed
  write_file(ckpt.path / Engine::part_name(0), "garbage");
  auto again = engine.run_job(std::span<const Pair>(input), identity_map, halve_reduce, 2);
  EXPECT_EQ(snapshot(again.path), expected);
}

TEST(RunJob, CountersPersistWithRound) {
  auto input = random_pairs(200, 2);
  TempDir dir;
  Engine engine({dir.path(), 2});
  auto ckpt = engine.run_job(std::span<const Pair>(input), identity_map, halve_reduce, 2);
  auto reloaded = engine.completed_round(2);
  ASSERT_TRUE(reloaded);
  EXPECT_EQ(reloaded->counters, ckpt.counters);
  EXPECT_EQ(engine.total_counters(2).at("groups"),
            engine.completed_round(1)->counters.at("groups") + ckpt.counters.at("groups"));
}

}  // namespace
}  // namespace agl
