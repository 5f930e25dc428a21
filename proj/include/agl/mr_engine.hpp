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

// Local MapReduce executor.
//
// A job is one Map stage followed by R Reduce rounds. Every stage ends in a
// sort-based shuffle: task outputs are bucketed by key hash into a fixed
// number of partitions, each bucket is sorted into a run, and the runs of one
// partition are merged into `round_<r>/part_<p>.krc`. Records are ordered by
// (key, value bytes), so checkpoint bytes depend only on the input and the
// partition count, never on the number of worker threads.
//
// On-disk layout under the work dir:
//
//   round_0/            map output
//   round_<r>/          output of reduce round r
//     part_<p>.krc      repeated [u64 id][u32 suffix][u32 len][len bytes]
//     _SUCCESS          written last; a round without it is incomplete

#include <algorithm>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "agl/error.hpp"
#include "agl/io_util.hpp"
#include "agl/parallel.hpp"

namespace agl {

/// Node id plus an optional re-index suffix (0 = none).
struct ShuffleKey {
  std::uint64_t id = 0;
  std::uint32_t suffix = 0;

  friend auto operator<=>(const ShuffleKey&, const ShuffleKey&) = default;
};

inline std::string to_string(const ShuffleKey& key) {
  auto s = std::to_string(key.id);
  if (key.suffix != 0) s += "#" + std::to_string(key.suffix);
  return s;
}

struct KeyedRecord {
  ShuffleKey key;
  std::string value;

  friend auto operator<=>(const KeyedRecord&, const KeyedRecord&) = default;
};

using Counters = std::map<std::string, std::uint64_t, std::less<>>;

inline void merge_counters(Counters& into, const Counters& from) {
  for (const auto& [name, value] : from) into[name] += value;
}

struct RoundCheckpoint {
  int round_index = 0;
  std::filesystem::path path;
  std::uint64_t record_count = 0;
  std::size_t partitions = 0;
  Counters counters;
};

/// Handed to reducers: the round being computed and a task-local counter set
/// that the engine sums at the round barrier.
class ReduceContext {
 public:
  ReduceContext(int round, Counters& counters) : round_(round), counters_(&counters) {}

  int round() const { return round_; }
  void count(std::string_view name, std::uint64_t delta) {
    auto it = counters_->find(name);
    if (it == counters_->end()) it = counters_->emplace(std::string(name), 0).first;
    it->second += delta;
  }

 private:
  int round_;
  Counters* counters_;
};

struct EngineOptions {
  std::filesystem::path work_dir;
  std::size_t workers = 1;
  std::size_t partitions = 8;
  std::size_t map_chunk = 256;  // input records per map task
};

namespace detail {

inline void encode_record(std::string& out, const KeyedRecord& r) {
  ByteWriter w;
  w.u64(r.key.id);
  w.u32(r.key.suffix);
  w.bytes(r.value);
  out += std::move(w).str();
}

inline std::vector<KeyedRecord> decode_part(std::string_view bytes, const std::string& where) {
  std::vector<KeyedRecord> records;
  ByteReader in(bytes);
  try {
    while (!in.done()) {
      KeyedRecord r;
      r.key.id = in.u64();
      r.key.suffix = in.u32();
      r.value = std::string(in.bytes());
      records.push_back(std::move(r));
    }
  } catch (const Error& e) {
    raise(ErrorKind::kCorruptCheckpoint, where + ": " + e.what());
  }
  return records;
}

/// K-way merge of sorted runs.
inline std::vector<KeyedRecord> merge_runs(std::vector<std::vector<KeyedRecord>> runs) {
  std::size_t total = 0;
  for (const auto& r : runs) total += r.size();
  std::vector<KeyedRecord> out;
  out.reserve(total);
  using Cursor = std::pair<std::size_t, std::size_t>;  // (run, position)
  auto greater = [&](const Cursor& a, const Cursor& b) {
    const auto& x = runs[a.first][a.second];
    const auto& y = runs[b.first][b.second];
    if (x != y) return x > y;
    return a.first > b.first;
  };
  std::priority_queue<Cursor, std::vector<Cursor>, decltype(greater)> heap(greater);
  for (std::size_t i = 0; i < runs.size(); ++i) {
    if (!runs[i].empty()) heap.emplace(i, 0);
  }
  while (!heap.empty()) {
    auto [run, pos] = heap.top();
    heap.pop();
    out.push_back(std::move(runs[run][pos]));
    if (pos + 1 < runs[run].size()) heap.emplace(run, pos + 1);
  }
  return out;
}

}  // namespace detail

class Engine {
 public:
  explicit Engine(EngineOptions options) : options_(std::move(options)) {
    if (options_.workers == 0) options_.workers = 1;
    if (options_.partitions == 0) options_.partitions = 1;
    if (options_.map_chunk == 0) options_.map_chunk = 1;
    std::filesystem::create_directories(options_.work_dir);
  }

  const EngineOptions& options() const { return options_; }

  std::size_t partition_of(const ShuffleKey& key) const {
    return mix_seed(key.id, key.suffix) % options_.partitions;
  }

  std::filesystem::path round_dir(int round) const {
    return options_.work_dir / ("round_" + std::to_string(round));
  }

  /// Map stage: every input record goes through `mapper`, which returns the
  /// KeyedRecords it emits. Output is checkpointed as round 0.
  template <typename T, typename Mapper>
  RoundCheckpoint run_map(std::span<const T> input, Mapper&& mapper) {
    const std::size_t chunk = options_.map_chunk;
    const std::size_t tasks = (input.size() + chunk - 1) / chunk;
    std::vector<std::vector<std::vector<KeyedRecord>>> runs(tasks);
    parallel_for(tasks, options_.workers, [&](std::size_t task) {
      auto& buckets = runs[task];
      buckets.resize(options_.partitions);
      std::size_t end = std::min(input.size(), (task + 1) * chunk);
      for (std::size_t i = task * chunk; i < end; ++i) {
        std::vector<KeyedRecord> emitted;
        try {
          emitted = mapper(input[i]);
        } catch (const std::exception& e) {
          raise(ErrorKind::kMapError, "record " + std::to_string(i) + ": " + e.what());
        }
        for (auto& r : emitted) buckets[partition_of(r.key)].push_back(std::move(r));
      }
      for (auto& b : buckets) std::sort(b.begin(), b.end());
    });
    return write_round(0, std::move(runs), {});
  }

  /// One reduce round over a completed checkpoint. The reducer is called once
  /// per key group with its values in ascending byte order.
  template <typename Reducer>
  RoundCheckpoint run_reduce_round(const RoundCheckpoint& input, Reducer&& reducer) {
    const int round = input.round_index + 1;
    const std::size_t tasks = input.partitions;
    std::vector<std::vector<std::vector<KeyedRecord>>> runs(tasks);
    std::vector<Counters> task_counters(tasks);
    parallel_for(tasks, options_.workers, [&](std::size_t task) {
      auto part_path = input.path / part_name(task);
      auto records = detail::decode_part(read_file(part_path), part_path.string());
      for (std::size_t i = 1; i < records.size(); ++i) {
        if (records[i] < records[i - 1]) {
          raise(ErrorKind::kCorruptCheckpoint,
                part_path.string() + ": records out of order at " + std::to_string(i));
        }
      }
      for (const auto& r : records) {
        if (partition_of(r.key) != task) {
          raise(ErrorKind::kCorruptCheckpoint,
                part_path.string() + ": key " + to_string(r.key) + " in wrong partition");
        }
      }
      auto& buckets = runs[task];
      buckets.resize(options_.partitions);
      ReduceContext ctx(round, task_counters[task]);
      std::size_t i = 0;
      std::vector<std::string> values;
      while (i < records.size()) {
        const ShuffleKey key = records[i].key;
        values.clear();
        while (i < records.size() && records[i].key == key) values.push_back(std::move(records[i++].value));
        std::vector<KeyedRecord> emitted;
        try {
          emitted = reducer(ctx, key, std::span<const std::string>(values));
        } catch (const std::exception& e) {
          raise(ErrorKind::kReduceError, "key " + to_string(key) + " in round " +
                                             std::to_string(round) + ": " + e.what());
        }
        for (auto& r : emitted) buckets[partition_of(r.key)].push_back(std::move(r));
      }
      for (auto& b : buckets) std::sort(b.begin(), b.end());
    });
    Counters counters;
    for (const auto& c : task_counters) merge_counters(counters, c);
    return write_round(round, std::move(runs), counters);
  }

  /// Map then `rounds` reduce rounds. Completed rounds found on disk are not
  /// recomputed: execution resumes after the latest finished round.
  template <typename T, typename Mapper, typename Reducer>
  RoundCheckpoint run_job(std::span<const T> input, Mapper&& mapper, Reducer&& reducer, int rounds) {
    int start = -1;
    for (int r = rounds; r >= 0; --r) {
      if (completed_round(r)) {
        start = r;
        break;
      }
    }
    RoundCheckpoint current = start >= 0 ? *completed_round(start) : run_map(input, mapper);
    for (int r = current.round_index + 1; r <= rounds; ++r) current = run_reduce_round(current, reducer);
    return current;
  }

  /// A round on disk with its `_SUCCESS` marker, if any.
  std::optional<RoundCheckpoint> completed_round(int round) const {
    auto dir = round_dir(round);
    auto marker = dir / "_SUCCESS";
    if (!std::filesystem::exists(marker)) return std::nullopt;
    RoundCheckpoint ckpt;
    ckpt.round_index = round;
    ckpt.path = dir;
    detail_for_each_marker_line(read_file(marker), [&](std::string_view key, std::string_view value) {
      std::uint64_t v = 0;
      if (!parse_u64(value, v)) raise(ErrorKind::kCorruptCheckpoint, marker.string() + ": bad value");
      if (key == "records") {
        ckpt.record_count = v;
      } else if (key == "partitions") {
        ckpt.partitions = v;
      } else if (key.starts_with("counter.")) {
        ckpt.counters[std::string(key.substr(8))] = v;
      }
    });
    if (ckpt.partitions != options_.partitions) {
      raise(ErrorKind::kCorruptCheckpoint, dir.string() + ": partition count mismatch");
    }
    return ckpt;
  }

  /// Sum of reduce-round counters for rounds 1..rounds.
  Counters total_counters(int rounds) const {
    Counters total;
    for (int r = 1; r <= rounds; ++r) {
      if (auto c = completed_round(r)) merge_counters(total, c->counters);
    }
    return total;
  }

  /// Visits every record of a checkpoint, partition by partition.
  template <typename Fn>
  void scan(const RoundCheckpoint& ckpt, Fn&& fn) const {
    for (std::size_t p = 0; p < ckpt.partitions; ++p) {
      auto part_path = ckpt.path / part_name(p);
      for (const auto& r : detail::decode_part(read_file(part_path), part_path.string())) fn(r);
    }
  }

  /// All records of a checkpoint in global (key, value) order.
  std::vector<KeyedRecord> read_all(const RoundCheckpoint& ckpt) const {
    std::vector<std::vector<KeyedRecord>> runs;
    for (std::size_t p = 0; p < ckpt.partitions; ++p) {
      auto part_path = ckpt.path / part_name(p);
      runs.push_back(detail::decode_part(read_file(part_path), part_path.string()));
    }
    return detail::merge_runs(std::move(runs));
  }

  static std::string part_name(std::size_t p) { return "part_" + std::to_string(p) + ".krc"; }

 private:
  template <typename Fn>
  static void detail_for_each_marker_line(const std::string& text, Fn&& fn) {
    for (auto line : split(text, '\n')) {
      if (line.empty()) continue;
      auto eq = line.find('=');
      if (eq == std::string_view::npos) continue;
      fn(line.substr(0, eq), line.substr(eq + 1));
    }
  }

  RoundCheckpoint write_round(int round, std::vector<std::vector<std::vector<KeyedRecord>>> runs,
                              const Counters& counters) {
    namespace fs = std::filesystem;
    auto final_dir = round_dir(round);
    auto tmp_dir = options_.work_dir / ("round_" + std::to_string(round) + ".tmp");
    fs::remove_all(tmp_dir);
    fs::remove_all(final_dir);
    fs::create_directories(tmp_dir);

    std::vector<std::uint64_t> counts(options_.partitions, 0);
    parallel_for(options_.partitions, options_.workers, [&](std::size_t p) {
      std::vector<std::vector<KeyedRecord>> part_runs;
      part_runs.reserve(runs.size());
      for (auto& task_runs : runs) {
        if (p < task_runs.size()) part_runs.push_back(std::move(task_runs[p]));
      }
      auto merged = detail::merge_runs(std::move(part_runs));
      std::string bytes;
      for (const auto& r : merged) detail::encode_record(bytes, r);
      write_file(tmp_dir / part_name(p), bytes);
      counts[p] = merged.size();
    });

    RoundCheckpoint ckpt;
    ckpt.round_index = round;
    ckpt.path = final_dir;
    ckpt.partitions = options_.partitions;
    ckpt.counters = counters;
    for (auto c : counts) ckpt.record_count += c;

    std::string marker = "round=" + std::to_string(round) + "\nrecords=" +
                         std::to_string(ckpt.record_count) + "\npartitions=" +
                         std::to_string(ckpt.partitions) + "\n";
    for (const auto& [name, value] : counters) {
      marker += "counter." + name + "=" + std::to_string(value) + "\n";
    }
    write_file(tmp_dir / "_SUCCESS", marker);
    fs::rename(tmp_dir, final_dir);
    return ckpt;
  }

  EngineOptions options_;
};

}  // namespace agl
