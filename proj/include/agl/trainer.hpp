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

// Data-parallel mini-batch training over GraphFeature triples.
//
// Workers are threads. Each owns a fixed shard of the samples and talks to a
// shared ParameterStore through pull/push. In sync mode a global step
// completes when every worker has pushed; the last arrival averages the
// gradients in worker-id order and applies one Adam step. In async mode each
// push is applied on arrival.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "agl/error.hpp"
#include "agl/gnn_core.hpp"
#include "agl/graphflat.hpp"
#include "agl/io_util.hpp"
#include "agl/parallel.hpp"

namespace agl {

enum class UpdateMode { kSync, kAsync };

inline std::string to_string(UpdateMode m) { return m == UpdateMode::kSync ? "sync" : "async"; }

inline UpdateMode parse_update_mode(std::string_view s) {
  if (s == "sync") return UpdateMode::kSync;
  if (s == "async") return UpdateMode::kAsync;
  raise(ErrorKind::kParse, "unknown update mode '" + std::string(s) + "' (want sync or async)");
}

enum class Metric { kAccuracy, kMicroF1, kAuc };

inline std::string to_string(Metric m) {
  switch (m) {
    case Metric::kAccuracy: return "accuracy";
    case Metric::kMicroF1: return "micro_f1";
    case Metric::kAuc: return "auc";
  }
  return "?";
}

inline Metric parse_metric(std::string_view s) {
  if (s == "accuracy" || s == "acc") return Metric::kAccuracy;
  if (s == "micro_f1" || s == "f1") return Metric::kMicroF1;
  if (s == "auc") return Metric::kAuc;
  raise(ErrorKind::kParse, "unknown metric '" + std::string(s) + "'");
}

// Metrics -------------------------------------------------------------------------

namespace detail {

inline void check_scored(const Matrix<float>& scores, std::span<const Label> labels) {
  check_shape(scores.rows() == labels.size(), "metric: one label per score row");
  if (labels.empty()) raise(ErrorKind::kUndefinedMetric, "metric over zero samples");
}

/// Flattened (truth, score) decisions: one per class for multi-hot labels,
/// one per class of a one-hot encoding for single labels.
inline void decisions(const Matrix<float>& scores, std::span<const Label> labels, std::vector<std::uint8_t>& truth,
                      std::vector<float>& score) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto& l = labels[i];
    if (!l.is_multi() && l.cls < 0) raise(ErrorKind::kUndefinedMetric, "sample " + std::to_string(i) + " has no label");
    if (l.is_multi()) check_shape(l.multi.size() == scores.cols(), "multi-label width differs from scores");
    for (std::size_t c = 0; c < scores.cols(); ++c) {
      truth.push_back(l.is_multi() ? l.multi[c] : static_cast<std::uint8_t>(static_cast<std::size_t>(l.cls) == c));
      score.push_back(scores(i, c));
    }
  }
}

inline std::size_t argmax(std::span<const float> row) {
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

}  // namespace detail

/// Single label: fraction of rows whose argmax is the class. Multi-hot:
/// fraction of (sample, class) decisions right at threshold 0.5.
inline double accuracy(const Matrix<float>& scores, std::span<const Label> labels) {
  detail::check_scored(scores, labels);
  std::size_t right = 0, total = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto& l = labels[i];
    if (l.is_multi()) {
      check_shape(l.multi.size() == scores.cols(), "multi-label width differs from scores");
      for (std::size_t c = 0; c < scores.cols(); ++c) right += (scores(i, c) >= 0.5f) == (l.multi[c] != 0);
      total += scores.cols();
    } else {
      if (l.cls < 0) raise(ErrorKind::kUndefinedMetric, "sample " + std::to_string(i) + " has no label");
      right += detail::argmax(scores.row(i)) == static_cast<std::size_t>(l.cls);
      ++total;
    }
  }
  return static_cast<double>(right) / total;
}

/// 2TP / (2TP + FP + FN) over every (sample, class) decision. Single-label
/// rows predict their argmax; multi-hot rows predict scores >= 0.5. With no
/// positives and no predictions there is nothing to get wrong: 1.
inline double micro_f1(const Matrix<float>& scores, std::span<const Label> labels) {
  detail::check_scored(scores, labels);
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto& l = labels[i];
    std::size_t pick = l.is_multi() ? 0 : detail::argmax(scores.row(i));
    if (!l.is_multi() && l.cls < 0) raise(ErrorKind::kUndefinedMetric, "sample " + std::to_string(i) + " has no label");
    if (l.is_multi()) check_shape(l.multi.size() == scores.cols(), "multi-label width differs from scores");
    for (std::size_t c = 0; c < scores.cols(); ++c) {
      const bool truth = l.is_multi() ? l.multi[c] != 0 : static_cast<std::size_t>(l.cls) == c;
      const bool pred = l.is_multi() ? scores(i, c) >= 0.5f : c == pick;
      tp += truth && pred;
      fp += !truth && pred;
      fn += truth && !pred;
    }
  }
  const std::size_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 1.0 : 2.0 * tp / denom;
}

/// Area under the ROC curve as the Mann-Whitney rank statistic, ties given
/// their average rank. Binary softmax scores the positive column; otherwise
/// every (sample, class) decision is pooled.
inline double auc(const Matrix<float>& scores, std::span<const Label> labels) {
  detail::check_scored(scores, labels);
  std::vector<std::uint8_t> truth;
  std::vector<float> score;
  const bool binary = scores.cols() == 2 && std::none_of(labels.begin(), labels.end(), [](const Label& l) { return l.is_multi(); });
  if (binary) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i].cls < 0) raise(ErrorKind::kUndefinedMetric, "sample " + std::to_string(i) + " has no label");
      truth.push_back(labels[i].cls == 1);
      score.push_back(scores(i, 1));
    }
  } else {
    detail::decisions(scores, labels, truth, score);
  }
  std::vector<std::size_t> order(score.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] < score[b]; });
  double pos_rank_sum = 0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && score[order[j]] == score[order[i]]) ++j;
    const double rank = (i + 1 + j) / 2.0;  // average of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (truth[order[k]]) {
        pos_rank_sum += rank;
        ++pos;
      }
    }
    i = j;
  }
  const std::size_t neg = truth.size() - pos;
  if (pos == 0 || neg == 0) raise(ErrorKind::kUndefinedMetric, "AUC needs both positive and negative samples");
  return (pos_rank_sum - pos * (pos + 1) / 2.0) / (static_cast<double>(pos) * neg);
}

inline double score_metric(Metric m, const Matrix<float>& scores, std::span<const Label> labels) {
  switch (m) {
    case Metric::kAccuracy: return accuracy(scores, labels);
    case Metric::kMicroF1: return micro_f1(scores, labels);
    case Metric::kAuc: return auc(scores, labels);
  }
  return 0;
}

// Prediction ------------------------------------------------------------------------

/// Class probabilities for every target of a batch.
inline Matrix<float> predict(const Model<float>& model, const VectorizedBatch& batch, std::size_t threads = 1) {
  ForwardOptions opt;
  opt.threads = threads;
  auto logits = forward(model, batch, opt);
  Matrix<float> out(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto p = probabilities<float>(logits.row(i), model.config.loss);
    std::copy(p.begin(), p.end(), out.row(i).begin());
  }
  return out;
}

inline double evaluate(const Model<float>& model, const VectorizedBatch& batch, Metric metric, std::size_t threads = 1) {
  return score_metric(metric, predict(model, batch, threads), batch.labels);
}

inline double evaluate(const Model<float>& model, std::span<const Triple> triples, Metric metric, std::size_t threads = 1) {
  return evaluate(model, vectorize(triples), metric, threads);
}

// Prefetch pipeline -----------------------------------------------------------------

/// Runs prepare(0..n-1) on a producer thread while compute(i, prepared) runs
/// on the caller, at most `depth` prepared items ahead. Results come back in
/// order; the first exception from either stage is rethrown.
template <typename Prepare, typename Compute>
auto prefetch_pipeline(std::size_t n, Prepare prepare, Compute compute, std::size_t depth = 2) {
  using Item = std::invoke_result_t<Prepare&, std::size_t>;
  using Result = std::invoke_result_t<Compute&, std::size_t, Item&>;
  std::vector<Result> results;
  results.reserve(n);
  if (n <= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      auto item = prepare(i);
      results.push_back(compute(i, item));
    }
    return results;
  }
  BoundedQueue<Item> queue(depth);
  std::exception_ptr producer_error;
  std::thread producer([&] {
    try {
      for (std::size_t i = 0; i < n; ++i) queue.push(prepare(i));
    } catch (...) {
      producer_error = std::current_exception();
    }
    queue.close();
  });
  std::exception_ptr consumer_error;
  try {
    for (std::size_t i = 0; i < n; ++i) {
      auto item = queue.pop();
      if (!item) break;
      results.push_back(compute(i, *item));
    }
  } catch (...) {
    consumer_error = std::current_exception();
  }
  queue.close();
  producer.join();
  if (consumer_error) std::rethrow_exception(consumer_error);
  if (producer_error) std::rethrow_exception(producer_error);
  return results;
}

/// Same contract as prefetch_pipeline with no overlap.
template <typename Prepare, typename Compute>
auto sequential_pipeline(std::size_t n, Prepare prepare, Compute compute) {
  using Item = std::invoke_result_t<Prepare&, std::size_t>;
  std::vector<std::invoke_result_t<Compute&, std::size_t, Item&>> results;
  results.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto item = prepare(i);
    results.push_back(compute(i, item));
  }
  return results;
}

// Parameter store -------------------------------------------------------------------

class ParameterStore {
 public:
  ParameterStore(Model<float> init, AdamConfig adam, UpdateMode mode, std::size_t workers, double weight_decay = 0)
      : model_(std::move(init)), mode_(mode), workers_(workers), weight_decay_(weight_decay), slots_(workers) {
    if (workers_ == 0) raise(ErrorKind::kShard, "parameter store needs at least one worker");
    adam_.config = adam;
  }

  /// Consistent copy of the current parameters.
  Model<float> pull() const {
    std::lock_guard lock(mu_);
    return model_;
  }

  std::uint64_t version() const {
    std::lock_guard lock(mu_);
    return model_.version;
  }

  /// Contributes one step. `grad` is empty when the worker has no batch for
  /// this step; in sync mode it still takes part in the barrier. Returns
  /// false when the store was aborted.
  bool push(std::size_t worker, std::optional<Model<float>> grad, double loss = 0) {
    std::unique_lock lock(mu_);
    if (aborted_) return false;
    if (mode_ == UpdateMode::kAsync) {
      if (grad) {
        apply(*grad);
        step_losses_.push_back(loss);
      }
      return true;
    }
    slots_[worker] = Slot{std::move(grad), loss, true};
    const std::uint64_t generation = generation_;
    if (++arrived_ == workers_) {
      finish_step();
      return true;
    }
    cv_.wait(lock, [&] { return generation_ != generation || aborted_; });
    return !aborted_ || generation_ != generation;
  }

  /// Wakes every waiter; later pushes are refused.
  void abort() {
    std::lock_guard lock(mu_);
    aborted_ = true;
    cv_.notify_all();
  }

  bool aborted() const {
    std::lock_guard lock(mu_);
    return aborted_;
  }

  /// Mean loss of each completed step (sync) or of each applied push (async).
  std::vector<double> step_losses() const {
    std::lock_guard lock(mu_);
    return step_losses_;
  }

 private:
  struct Slot {
    std::optional<Model<float>> grad;
    double loss = 0;
    bool arrived = false;
  };

  void apply(Model<float>& grad) {
    add_weight_decay(model_, grad, weight_decay_);
    try {
      adam_step(model_, grad, adam_);
    } catch (...) {
      aborted_ = true;
      cv_.notify_all();
      throw;
    }
  }

  // Called with the lock held by the last worker to arrive.
  void finish_step() {
    std::optional<Model<float>> sum;
    std::size_t contributors = 0;
    double loss = 0;
    for (auto& s : slots_) {
      if (s.grad) {
        if (!sum) {
          sum = std::move(*s.grad);
        } else {
          std::vector<std::span<float>> acc;
          sum->for_each_tensor([&](Matrix<float>& m) { acc.push_back(m.flat()); });
          std::size_t t = 0;
          s.grad->for_each_tensor([&](const Matrix<float>& m) {
            auto src = m.flat();
            for (std::size_t i = 0; i < src.size(); ++i) acc[t][i] += src[i];
            ++t;
          });
        }
        loss += s.loss;
        ++contributors;
      }
      s = Slot{};
    }
    arrived_ = 0;
    std::exception_ptr error;
    if (sum) {
      const float scale = 1.0f / static_cast<float>(contributors);
      sum->for_each_tensor([&](Matrix<float>& m) {
        for (auto& x : m.flat()) x *= scale;
      });
      step_losses_.push_back(loss / contributors);
      try {
        apply(*sum);
      } catch (...) {
        error = std::current_exception();
      }
    }
    ++generation_;
    cv_.notify_all();
    if (error) std::rethrow_exception(error);
  }

  mutable std::mutex mu_;
  std::condition_variable cv_;
  Model<float> model_;
  AdamState adam_;
  UpdateMode mode_;
  std::size_t workers_;
  double weight_decay_;
  std::vector<Slot> slots_;
  std::size_t arrived_ = 0;
  std::uint64_t generation_ = 0;
  bool aborted_ = false;
  std::vector<double> step_losses_;
};

// Training ------------------------------------------------------------------------

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t epochs = 200;
  std::size_t workers = 1;
  double lr = 0.01;
  double weight_decay = 0;
  double dropout = 0;
  std::uint64_t seed = 1;
  UpdateMode mode = UpdateMode::kSync;
  std::size_t eval_every = 1;
  Metric metric = Metric::kAccuracy;
  std::size_t threads = 1;   // aggregation threads inside one worker
  bool pipeline = true;      // overlap vectorization with compute
  std::size_t prefetch = 2;

  void validate() const {
    if (workers == 0) raise(ErrorKind::kParse, "workers must be >= 1");
    if (batch_size == 0) raise(ErrorKind::kParse, "batch_size must be >= 1");
    if (epochs == 0 || epochs > 200) raise(ErrorKind::kParse, "epochs must be in [1, 200]");
    if (eval_every == 0) raise(ErrorKind::kParse, "eval_every must be >= 1");
    if (!(dropout >= 0 && dropout < 1)) raise(ErrorKind::kParse, "dropout must be in [0, 1)");
    if (!(lr > 0)) raise(ErrorKind::kParse, "lr must be > 0");
  }
};

struct HistoryRow {
  std::size_t epoch = 0;
  std::string split;
  std::string metric;
  double value = 0;

  friend bool operator==(const HistoryRow&, const HistoryRow&) = default;
};

inline std::string history_csv(std::span<const HistoryRow> rows) {
  std::ostringstream out;
  out << "epoch,split,metric,value\n";
  out.precision(9);
  for (const auto& r : rows) out << r.epoch << ',' << r.split << ',' << r.metric << ',' << r.value << '\n';
  return out.str();
}

struct TrainResult {
  Model<float> model;       // best validation score, or the last model without validation data
  Model<float> last;
  std::vector<HistoryRow> history;
  std::vector<double> step_losses;
  std::vector<double> epoch_losses;
  std::size_t best_epoch = 0;
  double best_score = 0;
  std::size_t samples_processed = 0;
  double seconds = 0;
};

/// Sample indices of worker w: every index congruent to w mod `workers`.
inline std::vector<std::size_t> shard_indices(std::size_t samples, std::size_t workers, std::size_t w) {
  std::vector<std::size_t> out;
  for (std::size_t i = w; i < samples; i += workers) out.push_back(i);
  return out;
}

/// Trains `init` on `train`, scoring `val` (may be empty) every eval_every
/// epochs and after the last.
inline TrainResult train(std::span<const Triple> train_set, std::span<const Triple> val_set, const Model<float>& init,
                         const TrainConfig& cfg) {
  cfg.validate();
  const std::size_t W = cfg.workers;
  std::vector<std::vector<std::size_t>> shards(W);
  for (std::size_t w = 0; w < W; ++w) {
    shards[w] = shard_indices(train_set.size(), W, w);
    if (shards[w].empty()) {
      raise(ErrorKind::kShard, "worker " + std::to_string(w) + " has an empty shard (" +
                                   std::to_string(train_set.size()) + " samples for " + std::to_string(W) + " workers)");
    }
  }
  std::optional<VectorizedBatch> val_batch;
  if (!val_set.empty()) val_batch = vectorize(val_set);

  ParameterStore store(init, AdamConfig{.lr = cfg.lr}, cfg.mode, W, cfg.weight_decay);
  TrainResult result;
  std::optional<double> best;
  const auto started = std::chrono::steady_clock::now();
  std::size_t steps_per_epoch = 0;
  for (const auto& s : shards) steps_per_epoch = std::max(steps_per_epoch, (s.size() + cfg.batch_size - 1) / cfg.batch_size);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const std::size_t losses_before = store.step_losses().size();
    std::vector<std::exception_ptr> errors(W);
    auto worker = [&](std::size_t w) {
      try {
        auto order = shards[w];
        std::mt19937_64 rng(mix_seed(cfg.seed, epoch, w));
        std::shuffle(order.begin(), order.end(), rng);
        const std::size_t mine = (order.size() + cfg.batch_size - 1) / cfg.batch_size;
        auto prepare = [&](std::size_t step) -> std::optional<VectorizedBatch> {
          if (step >= mine) return std::nullopt;
          std::vector<Triple> batch;
          for (std::size_t i = step * cfg.batch_size; i < std::min(order.size(), (step + 1) * cfg.batch_size); ++i) {
            batch.push_back(train_set[order[i]]);
          }
          return vectorize(batch);
        };
        auto compute = [&](std::size_t step, std::optional<VectorizedBatch>& batch) -> int {
          if (!batch) {
            if (!store.push(w, std::nullopt)) throw std::runtime_error("aborted");
            return 0;
          }
          auto model = store.pull();
          ForwardOptions opt;
          opt.training = cfg.dropout > 0;
          opt.dropout = cfg.dropout;
          opt.seed = mix_seed(cfg.seed, epoch, w, step);
          opt.threads = cfg.threads;
          ForwardCache<float> cache;
          auto logits = forward(model, *batch, opt, &cache);
          Matrix<float> dlogits;
          const double loss = loss_and_grad(logits, std::span<const Label>(batch->labels), model.config.loss, &dlogits);
          if (!std::isfinite(loss)) {
            raise(ErrorKind::kNumerics, "non-finite training loss at epoch " + std::to_string(epoch) + ", worker " +
                                            std::to_string(w) + ", step " + std::to_string(step));
          }
          if (!store.push(w, backward(model, cache, dlogits), loss)) throw std::runtime_error("aborted");
          return 0;
        };
        if (cfg.pipeline) {
          prefetch_pipeline(steps_per_epoch, prepare, compute, cfg.prefetch);
        } else {
          sequential_pipeline(steps_per_epoch, prepare, compute);
        }
      } catch (...) {
        errors[w] = std::current_exception();
        store.abort();
      }
    };
    if (W == 1) {
      worker(0);
    } else {
      std::vector<std::thread> threads;
      for (std::size_t w = 0; w < W; ++w) threads.emplace_back(worker, w);
      for (auto& t : threads) t.join();
    }
    // Prefer a real error over the "aborted" echo of the other workers.
    for (auto& e : errors) {
      if (!e) continue;
      try {
        std::rethrow_exception(e);
      } catch (const Error&) {
        throw;
      } catch (...) {
      }
    }
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
    result.samples_processed += train_set.size();

    auto losses = store.step_losses();
    double sum = 0;
    for (std::size_t i = losses_before; i < losses.size(); ++i) sum += losses[i];
    const double epoch_loss = sum / std::max<std::size_t>(1, losses.size() - losses_before);
    result.epoch_losses.push_back(epoch_loss);
    result.history.push_back({epoch, "train", "loss", epoch_loss});

    if (val_batch && (epoch % cfg.eval_every == 0 || epoch == cfg.epochs)) {
      auto snapshot = store.pull();
      const double score = evaluate(snapshot, *val_batch, cfg.metric, cfg.threads);
      result.history.push_back({epoch, "val", to_string(cfg.metric), score});
      if (!best || score > *best) {
        best = score;
        result.model = snapshot;
        result.best_epoch = epoch;
      }
    }
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  result.step_losses = store.step_losses();
  result.last = store.pull();
  if (best) {
    result.best_score = *best;
  } else {
    result.model = result.last;
    result.best_epoch = cfg.epochs;
  }
  return result;
}

/// `key=value` pairs separated by commas, e.g. "epochs=50,lr=0.01".
inline std::vector<std::pair<std::string, std::string>> parse_kv_list(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> out;
  if (text.empty()) return out;
  for (auto item : split(text, ',')) {
    if (item.empty()) continue;
    auto eq = item.find('=');
    if (eq == std::string_view::npos || eq == 0) raise(ErrorKind::kParse, "expected key=value, got '" + std::string(item) + "'");
    out.emplace_back(std::string(item.substr(0, eq)), std::string(item.substr(eq + 1)));
  }
  return out;
}

}  // namespace agl
