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

#include "agl/trainer.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <limits>
#include <thread>

#include "agl/datasets.hpp"

namespace agl {
namespace {

using namespace std::chrono_literals;

Matrix<float> scores(std::vector<std::vector<float>> rows) {
  Matrix<float> m(rows.size(), rows.at(0).size());
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy(rows[i].begin(), rows[i].end(), m.row(i).begin());
  return m;
}

std::vector<Label> classes(std::vector<int> c) {
  std::vector<Label> out;
  for (int x : c) out.push_back({x, {}});
  return out;
}

std::vector<Label> multi(std::vector<std::vector<std::uint8_t>> rows) {
  std::vector<Label> out;
  for (auto& r : rows) out.push_back({-1, r});
  return out;
}

template <typename Fn>
ErrorKind kind_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::kUsage;  // sentinel: nothing thrown
}

TEST(Metrics, PerfectPredictions) {
  auto s = scores({{0.9f, 0.1f}, {0.2f, 0.8f}, {0.7f, 0.3f}});
  auto l = classes({0, 1, 0});
  EXPECT_EQ(accuracy(s, l), 1.0);
  EXPECT_EQ(micro_f1(s, l), 1.0);
  EXPECT_EQ(auc(s, l), 1.0);
}

TEST(Metrics, AllWrongBinary) {
  auto s = scores({{0.1f, 0.9f}, {0.8f, 0.2f}, {0.3f, 0.7f}});
  auto l = classes({0, 1, 0});
  EXPECT_EQ(accuracy(s, l), 0.0);
  EXPECT_EQ(auc(s, l), 0.0);
}

TEST(Metrics, MultiLabelMicroF1ByHand) {
  auto s = scores({{0.9f, 0.2f, 0.4f}, {0.6f, 0.7f, 0.1f}, {0.8f, 0.9f, 0.3f}, {0.1f, 0.2f, 0.7f}});
  auto l = multi({{1, 0, 1}, {0, 1, 0}, {1, 1, 0}, {0, 0, 1}});
  // TP: 1 + 1 + 2 + 1, FP: 1 (row 2 class 0), FN: 1 (row 1 class 2).
  EXPECT_DOUBLE_EQ(micro_f1(s, l), 2.0 * 5 / (2 * 5 + 1 + 1));
  EXPECT_DOUBLE_EQ(accuracy(s, l), 10.0 / 12);
}

TEST(Metrics, AucRankStatistic) {
  // Positives 0.8, 0.4 against negatives 0.6, 0.2: three of four pairs ordered.
  auto s = scores({{0.2f, 0.8f}, {0.6f, 0.4f}, {0.4f, 0.6f}, {0.8f, 0.2f}});
  EXPECT_DOUBLE_EQ(auc(s, classes({1, 1, 0, 0})), 0.75);
  auto tied = scores({{0.5f, 0.5f}, {0.5f, 0.5f}});
  EXPECT_DOUBLE_EQ(auc(tied, classes({0, 1})), 0.5);
}

TEST(Metrics, SingleClassAucIsUndefined) {
  auto s = scores({{0.2f, 0.8f}, {0.6f, 0.4f}});
  EXPECT_EQ(kind_of([&] { auc(s, classes({1, 1})); }), ErrorKind::kUndefinedMetric);
  EXPECT_EQ(kind_of([&] { accuracy(s, classes({1, -1})); }), ErrorKind::kUndefinedMetric);
}

TEST(Pipeline, MatchesSequential) {
  auto prep = [](std::size_t i) { return static_cast<int>(i * i); };
  auto compute = [](std::size_t i, int& x) { return x + static_cast<int>(i); };
  auto a = prefetch_pipeline(10, prep, compute);
  auto b = sequential_pipeline(10, prep, compute);
  EXPECT_EQ(a, b);
  EXPECT_EQ(prefetch_pipeline(1, prep, compute), sequential_pipeline(1, prep, compute));
  EXPECT_TRUE(prefetch_pipeline(0, prep, compute).empty());
}

TEST(Pipeline, PropagatesErrors) {
  auto bad_prep = [](std::size_t i) {
    if (i == 3) raise(ErrorKind::kParse, "prep");
    return 0;
  };
  auto compute = [](std::size_t, int& x) { return x; };
  EXPECT_EQ(kind_of([&] { prefetch_pipeline(10, bad_prep, compute); }), ErrorKind::kParse);
  auto bad_compute = [](std::size_t i, int& x) {
    if (i == 2) raise(ErrorKind::kNumerics, "compute");
    return x;
  };
  EXPECT_EQ(kind_of([&] { prefetch_pipeline(10, [](std::size_t) { return 0; }, bad_compute); }), ErrorKind::kNumerics);
}

TEST(Pipeline, OverlapsStages) {
  // Preparation twice as slow as compute: the wall time tracks the slower
  // stage alone, not the sum.
  const auto prep_cost = 30ms, compute_cost = 15ms;
  const std::size_t n = 10;
  auto start = std::chrono::steady_clock::now();
  prefetch_pipeline(
      n, [&](std::size_t i) { std::this_thread::sleep_for(prep_cost); return i; },
      [&](std::size_t, std::size_t& x) { std::this_thread::sleep_for(compute_cost); return x; });
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const double slower = std::chrono::duration<double>(prep_cost * n).count();
  EXPECT_LE(wall, 1.2 * slower);
}

ModelConfig gcn_config(std::size_t in, std::size_t classes) {
  ModelConfig c;
  c.kind = LayerKind::kGCN;
  c.dims = {in, 16, 16};
  c.classes = classes;
  return c;
}

struct Task {
  Dataset data;
  std::vector<Triple> train, val, test;
};

const Task& small_task() {
  static const Task task = [] {
    Task t;
    t.data = synthetic_citation({.n = 300, .classes = 2, .words = 60, .seed = 3}, {.per_class = 40, .val = 80, .test = 100});
    t.train = make_triples(t.data, t.data.train, 2);
    t.val = make_triples(t.data, t.data.val, 2);
    t.test = make_triples(t.data, t.data.test, 2);
    return t;
  }();
  return task;
}

TEST(Train, LossDecreasesOnSyntheticTask) {
  const auto& t = small_task();
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.batch_size = 16;
  cfg.seed = 7;
  auto r = train(t.train, t.val, init_model<float>(gcn_config(60, 2), 7), cfg);
  ASSERT_EQ(r.epoch_losses.size(), 50u);
  for (std::size_t e = 1; e < 10; ++e) EXPECT_LT(r.epoch_losses[e], r.epoch_losses[e - 1]) << "epoch " << e + 1;
  EXPECT_GT(evaluate(r.model, t.test, Metric::kAccuracy), 0.8);
}

TEST(Train, DeterministicForFixedSeed) {
  const auto& t = small_task();
  TrainConfig cfg;
  cfg.epochs = 8;
  cfg.batch_size = 16;
  cfg.seed = 7;
  cfg.dropout = 0.5;
  auto init = init_model<float>(gcn_config(60, 2), 7);
  auto a = train(t.train, t.val, init, cfg);
  auto b = train(t.train, t.val, init, cfg);
  EXPECT_EQ(a.history, b.history);
  EXPECT_EQ(save_model(a.model), save_model(b.model));
  EXPECT_EQ(history_csv(a.history).substr(0, 24), "epoch,split,metric,value");
}

TEST(Train, SyncModeDeterministicWithWorkers) {
  const auto& t = small_task();
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 8;
  cfg.workers = 3;
  auto init = init_model<float>(gcn_config(60, 2), 1);
  auto a = train(t.train, t.val, init, cfg);
  auto b = train(t.train, t.val, init, cfg);
  EXPECT_EQ(a.step_losses, b.step_losses);
  EXPECT_EQ(save_model(a.last), save_model(b.last));
  // 80 samples over 3 workers: shards of 27, 27, 26 take 4 steps of 8 each.
  EXPECT_EQ(a.step_losses.size(), 4u * 4);
  EXPECT_EQ(a.last.version, 16u);
}

TEST(Train, PipelineMatchesSequentialSteps) {
  const auto& t = small_task();
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  cfg.workers = 2;
  cfg.dropout = 0.3;
  auto init = init_model<float>(gcn_config(60, 2), 2);
  auto piped = train(t.train, t.val, init, cfg);
  cfg.pipeline = false;
  auto seq = train(t.train, t.val, init, cfg);
  EXPECT_EQ(piped.step_losses, seq.step_losses);
}

TEST(Train, AsyncModeTrains) {
  const auto& t = small_task();
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.batch_size = 8;
  cfg.workers = 2;
  cfg.mode = UpdateMode::kAsync;
  auto r = train(t.train, t.val, init_model<float>(gcn_config(60, 2), 2), cfg);
  EXPECT_EQ(r.last.version, r.step_losses.size());
  EXPECT_LT(r.epoch_losses.back(), r.epoch_losses.front());
}

TEST(Train, EmptyShard) {
  const auto& t = small_task();
  TrainConfig cfg;
  cfg.workers = 4;
  std::span<const Triple> three(t.train.data(), 3);
  EXPECT_EQ(kind_of([&] { train(three, {}, init_model<float>(gcn_config(60, 2), 2), cfg); }), ErrorKind::kShard);
}

TEST(Train, DivergenceRaisesNumerics) {
  const auto& t = small_task();
  auto bad = init_model<float>(gcn_config(60, 2), 2);
  bad.head.weight(0, 0) = std::numeric_limits<float>::quiet_NaN();
  for (std::size_t w : {1u, 3u}) {
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.workers = w;
    EXPECT_EQ(kind_of([&] { train(t.train, t.val, bad, cfg); }), ErrorKind::kNumerics);
  }
}

TEST(Train, BestValidationModelIsReturned) {
  const auto& t = small_task();
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.batch_size = 16;
  auto r = train(t.train, t.val, init_model<float>(gcn_config(60, 2), 5), cfg);
  double best = 0;
  for (const auto& row : r.history) {
    if (row.split == "val") best = std::max(best, row.value);
  }
  EXPECT_EQ(r.best_score, best);
  EXPECT_DOUBLE_EQ(evaluate(r.model, t.val, Metric::kAccuracy), best);
}

TEST(ParameterStore, SyncAppliesAverageOnce) {
  auto init = init_model<float>(gcn_config(3, 2), 1);
  ParameterStore store(init, AdamConfig{.lr = 0.1}, UpdateMode::kSync, 2);
  auto g1 = zeros_like(init), g2 = zeros_like(init);
  g1.head.bias(0, 0) = 1.0f;
  g2.head.bias(0, 0) = 3.0f;
  std::thread other([&] { store.push(1, g2, 0.5); });
  store.push(0, g1, 1.5);
  other.join();
  auto m = store.pull();
  EXPECT_EQ(m.version, 1u);
  // A first Adam step moves every parameter with a non-zero gradient by lr.
  EXPECT_NEAR(m.head.bias(0, 0), init.head.bias(0, 0) - 0.1f, 1e-6);
  EXPECT_EQ(m.head.bias(0, 1), init.head.bias(0, 1));
  EXPECT_EQ(store.step_losses(), std::vector<double>{1.0});
}

TEST(ParameterStore, AsyncAppliesEachPush) {
  auto init = init_model<float>(gcn_config(3, 2), 1);
  ParameterStore store(init, AdamConfig{}, UpdateMode::kAsync, 2);
  auto g = zeros_like(init);
  g.head.bias(0, 0) = 1.0f;
  store.push(0, g);
  store.push(1, g);
  store.push(1, std::nullopt);
  EXPECT_EQ(store.version(), 2u);
}

TEST(Config, Validation) {
  TrainConfig cfg;
  cfg.batch_size = 0;
  EXPECT_EQ(kind_of([&] { cfg.validate(); }), ErrorKind::kParse);
  cfg = {};
  cfg.epochs = 201;
  EXPECT_EQ(kind_of([&] { cfg.validate(); }), ErrorKind::kParse);
  EXPECT_EQ(parse_update_mode("async"), UpdateMode::kAsync);
  EXPECT_EQ(parse_metric("micro_f1"), Metric::kMicroF1);
  auto kv = parse_kv_list("epochs=5,lr=0.1");
  ASSERT_EQ(kv.size(), 2u);
  EXPECT_EQ(kv[1].second, "0.1");
}

}  // namespace
}  // namespace agl
