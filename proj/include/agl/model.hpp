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

// A K-layer GNN followed by a linear prediction head: forward and backward
// passes over a VectorizedBatch, losses, Adam, and the checkpoint format.
//
// Checkpoint text:
//
//   MODEL v1 kind=gcn K=2 dims=1433,16,16 classes=7 heads=1 act=relu loss=softmax
//   LAYER 0 kind=gcn in=1433 out=16 heads=1
//   weight 1433 16
//   <one line of tab-separated values per row>
//   bias 1 16
//   ...
//   END LAYER
//   ...
//   HEAD in=16 out=7
//   weight 16 7
//   ...
//   END HEAD
//
// GAT layers add att_src and att_dst tensors (heads x out/heads).

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "agl/batch.hpp"
#include "agl/error.hpp"
#include "agl/io_util.hpp"
#include "agl/layers.hpp"
#include "agl/tensor.hpp"

namespace agl {

enum class Activation { kRelu, kNone };
enum class LossKind { kSoftmax, kSigmoid };

struct ModelConfig {
  LayerKind kind = LayerKind::kGCN;
  std::vector<std::size_t> dims;  // input width, then one width per layer
  std::size_t classes = 2;
  std::size_t heads = 1;
  Activation activation = Activation::kRelu;
  LossKind loss = LossKind::kSoftmax;

  int hops() const { return static_cast<int>(dims.size()) - 1; }
};

template <typename T>
struct HeadParams {
  Matrix<T> weight;  // dims.back() x classes
  Matrix<T> bias;    // 1 x classes
};

template <typename T>
struct Model {
  ModelConfig config;
  std::vector<LayerParams<T>> layers;
  HeadParams<T> head;
  /// Bumped by every optimizer step; a forward cache records the version it
  /// was computed against.
  std::uint64_t version = 0;

  template <typename Fn>
  void for_each_tensor(Fn&& fn) {
    for (auto& l : layers) l.for_each_tensor(fn);
    fn(head.weight);
    fn(head.bias);
  }
  template <typename Fn>
  void for_each_tensor(Fn&& fn) const {
    for (const auto& l : layers) l.for_each_tensor(fn);
    fn(head.weight);
    fn(head.bias);
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each_tensor([&](const Matrix<T>& m) { n += m.size(); });
    return n;
  }

  template <typename U>
  Model<U> cast() const {
    Model<U> out;
    out.config = config;
    for (const auto& l : layers) {
      LayerParams<U> c;
      c.kind = l.kind;
      c.in_dim = l.in_dim;
      c.out_dim = l.out_dim;
      c.heads = l.heads;
      c.weight = l.weight.template cast<U>();
      c.bias = l.bias.template cast<U>();
      c.att_src = l.att_src.template cast<U>();
      c.att_dst = l.att_dst.template cast<U>();
      out.layers.push_back(std::move(c));
    }
    out.head.weight = head.weight.template cast<U>();
    out.head.bias = head.bias.template cast<U>();
    return out;
  }
};

/// Zero-filled parameters of the configured shapes.
template <typename T>
Model<T> zero_model(const ModelConfig& cfg) {
  if (cfg.dims.size() < 2) raise(ErrorKind::kShape, "model needs an input width and at least one layer");
  Model<T> m;
  m.config = cfg;
  for (std::size_t k = 0; k + 1 < cfg.dims.size(); ++k) {
    m.layers.push_back(make_layer<T>(cfg.kind, cfg.dims[k], cfg.dims[k + 1], cfg.heads));
  }
  m.head.weight = Matrix<T>(cfg.dims.back(), cfg.classes);
  m.head.bias = Matrix<T>(1, cfg.classes);
  return m;
}

/// Glorot weights and attention vectors, zero biases.
template <typename T>
Model<T> init_model(const ModelConfig& cfg, std::uint64_t seed) {
  auto m = zero_model<T>(cfg);
  std::mt19937_64 rng(seed);
  for (auto& l : m.layers) {
    glorot(l.weight, rng);
    if (l.kind == LayerKind::kGAT) {
      glorot(l.att_src, rng);
      glorot(l.att_dst, rng);
    }
  }
  glorot(m.head.weight, rng);
  return m;
}

/// Same shapes as `m`, all zeros; used for gradients.
template <typename T>
Model<T> zeros_like(const Model<T>& m) {
  Model<T> g = m;
  g.for_each_tensor([](Matrix<T>& t) { t.fill(T(0)); });
  g.version = 0;
  return g;
}

// Forward / backward --------------------------------------------------------------

struct ForwardOptions {
  bool prune = true;
  bool training = false;
  double dropout = 0.0;
  std::uint64_t seed = 0;  // dropout masks
  std::size_t threads = 1;
  WorkCounter* work = nullptr;
};

template <typename T>
struct ForwardCache {
  bool valid = false;
  std::uint64_t version = 0;
  std::vector<const Adjacency*> adj;
  std::vector<LayerCache<T>> layers;
  std::vector<Matrix<T>> pre;   // per layer, before activation
  Matrix<T> head_in;            // targets x width, after dropout
  std::vector<std::uint32_t> targets;
  std::vector<std::vector<std::uint8_t>> masks;  // K+1 dropout masks, empty when off
  double keep = 1.0;
};

namespace detail {

template <typename T>
std::vector<std::uint8_t> apply_dropout(Matrix<T>& m, double p, std::uint64_t seed) {
  std::vector<std::uint8_t> mask(m.size(), 1);
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution drop(p);
  const T scale = static_cast<T>(1.0 / (1.0 - p));
  auto flat = m.flat();
  for (std::size_t i = 0; i < flat.size(); ++i) {
    if (drop(rng)) {
      mask[i] = 0;
      flat[i] = T(0);
    } else {
      flat[i] *= scale;
    }
  }
  return mask;
}

template <typename T>
void apply_mask(Matrix<T>& m, const std::vector<std::uint8_t>& mask, double keep) {
  if (mask.empty()) return;
  const T scale = static_cast<T>(1.0 / keep);
  auto flat = m.flat();
  for (std::size_t i = 0; i < flat.size(); ++i) flat[i] = mask[i] ? flat[i] * scale : T(0);
}

}  // namespace detail

/// Logits for the batch's targets (targets x classes).
template <typename T>
Matrix<T> forward(const Model<T>& model, const VectorizedBatch& batch, const ForwardOptions& opt = {},
                  ForwardCache<T>* cache = nullptr) {
  const int hops = model.config.hops();
  if (batch.hops != hops) {
    raise(ErrorKind::kShape, "model has " + std::to_string(hops) + " layers, batch was built for " +
                                 std::to_string(batch.hops) + " hops");
  }
  const bool drop = opt.training && opt.dropout > 0.0;
  if (cache) {
    *cache = ForwardCache<T>{};
    cache->version = model.version;
    cache->keep = 1.0 - opt.dropout;
    cache->targets = batch.targets;
  }

  Matrix<T> h;
  if constexpr (std::is_same_v<T, float>) {
    h = batch.x;
  } else {
    h = batch.x.template cast<T>();
  }
  for (int k = 0; k < hops; ++k) {
    const Adjacency& a = opt.prune ? batch.pruned[k] : batch.a;
    std::vector<std::uint8_t> mask;
    if (drop) mask = detail::apply_dropout(h, opt.dropout, mix_seed(opt.seed, static_cast<std::uint64_t>(k)));
    LayerCache<T>* lc = nullptr;
    if (cache) {
      cache->layers.emplace_back();
      lc = &cache->layers.back();
      cache->adj.push_back(&a);
      cache->masks.push_back(std::move(mask));
    }
    Matrix<T> pre = layer_forward(model.layers[k], h, a, opt.threads, lc, opt.work);
    h = pre;
    if (model.config.activation == Activation::kRelu) {
      for (auto& v : h.flat()) v = v > T(0) ? v : T(0);
    }
    if (cache) cache->pre.push_back(std::move(pre));
  }

  const std::size_t width = model.head.weight.rows();
  check_shape(h.cols() == width, "head expects width " + std::to_string(width));
  Matrix<T> head_in(batch.targets.size(), width);
  for (std::size_t i = 0; i < batch.targets.size(); ++i) {
    auto src = h.row(batch.targets[i]);
    std::copy(src.begin(), src.end(), head_in.row(i).begin());
  }
  std::vector<std::uint8_t> mask;
  if (drop) mask = detail::apply_dropout(head_in, opt.dropout, mix_seed(opt.seed, static_cast<std::uint64_t>(hops)));
  Matrix<T> logits(head_in.rows(), model.config.classes);
  std::vector<std::uint32_t> all(head_in.rows());
  for (std::uint32_t i = 0; i < all.size(); ++i) all[i] = i;
  matmul_rows(head_in, model.head.weight, std::span<const std::uint32_t>(all), logits);
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    for (std::size_t j = 0; j < logits.cols(); ++j) logits(i, j) += model.head.bias(0, j);
  }
  if (opt.work) opt.work->embedding_evals += batch.targets.size();
  if (cache) {
    cache->head_in = std::move(head_in);
    cache->masks.push_back(std::move(mask));
    cache->valid = true;
  }
  return logits;
}

/// Gradients of every parameter given d(loss)/d(logits).
template <typename T>
Model<T> backward(const Model<T>& model, const ForwardCache<T>& cache, const Matrix<T>& dlogits) {
  if (!cache.valid) raise(ErrorKind::kCache, "backward without a forward cache");
  if (cache.version != model.version) {
    raise(ErrorKind::kCache, "forward cache is for model version " + std::to_string(cache.version) +
                                 ", parameters are at version " + std::to_string(model.version));
  }
  check_shape(dlogits.rows() == cache.head_in.rows() && dlogits.cols() == model.config.classes,
              "backward: logit gradient shape");
  Model<T> grad = zeros_like(model);
  const int hops = model.config.hops();

  std::vector<std::uint32_t> all(dlogits.rows());
  for (std::uint32_t i = 0; i < all.size(); ++i) all[i] = i;
  accumulate_outer(cache.head_in, dlogits, std::span<const std::uint32_t>(all), grad.head.weight);
  for (std::size_t i = 0; i < dlogits.rows(); ++i) {
    for (std::size_t j = 0; j < dlogits.cols(); ++j) grad.head.bias(0, j) += dlogits(i, j);
  }
  Matrix<T> dhead(dlogits.rows(), model.head.weight.rows());
  matmul_transposed_rows(dlogits, model.head.weight, std::span<const std::uint32_t>(all), dhead);
  detail::apply_mask(dhead, cache.masks.back(), cache.keep);

  if (hops == 0) return grad;
  const std::size_t n = cache.pre.back().rows();
  Matrix<T> dh(n, model.head.weight.rows());
  for (std::size_t i = 0; i < cache.targets.size(); ++i) {
    for (std::size_t j = 0; j < dh.cols(); ++j) dh(cache.targets[i], j) += dhead(i, j);
  }
  for (int k = hops - 1; k >= 0; --k) {
    const auto& pre = cache.pre[k];
    if (model.config.activation == Activation::kRelu) {
      auto d = dh.flat();
      auto p = pre.flat();
      for (std::size_t i = 0; i < d.size(); ++i) {
        if (!(p[i] > T(0))) d[i] = T(0);
      }
    }
    dh = layer_backward(model.layers[k], *cache.adj[k], cache.layers[k], dh, grad.layers[k], k > 0);
    if (k > 0) detail::apply_mask(dh, cache.masks[k], cache.keep);
  }
  return grad;
}

// Losses ------------------------------------------------------------------------

/// Mean loss over labeled targets; writes d(loss)/d(logits) when `grad` is
/// given. Softmax cross-entropy skips targets with class -1; sigmoid
/// cross-entropy averages over every (target, class) pair of multi-hot rows.
template <typename T>
double loss_and_grad(const Matrix<T>& logits, std::span<const Label> labels, LossKind kind,
                     Matrix<T>* grad = nullptr) {
  check_shape(labels.size() == logits.rows(), "loss: one label per logit row");
  if (grad) *grad = Matrix<T>(logits.rows(), logits.cols());
  double total = 0;
  std::size_t count = 0;
  if (kind == LossKind::kSoftmax) {
    for (std::size_t i = 0; i < logits.rows(); ++i) count += labels[i].cls >= 0;
    for (std::size_t i = 0; i < logits.rows(); ++i) {
      const int y = labels[i].cls;
      if (y < 0) continue;
      check_shape(static_cast<std::size_t>(y) < logits.cols(), "label " + std::to_string(y) + " >= classes");
      auto row = logits.row(i);
      double mx = row[0];
      for (auto v : row) mx = std::max<double>(mx, v);
      double sum = 0;
      for (auto v : row) sum += std::exp(static_cast<double>(v) - mx);
      const double lse = mx + std::log(sum);
      total += lse - static_cast<double>(row[y]);
      if (grad) {
        for (std::size_t j = 0; j < row.size(); ++j) {
          double p = std::exp(static_cast<double>(row[j]) - lse);
          (*grad)(i, j) = static_cast<T>((p - (static_cast<int>(j) == y ? 1.0 : 0.0)) / count);
        }
      }
    }
  } else {
    for (std::size_t i = 0; i < logits.rows(); ++i) count += labels[i].is_multi() ? logits.cols() : 0;
    for (std::size_t i = 0; i < logits.rows(); ++i) {
      if (!labels[i].is_multi()) continue;
      check_shape(labels[i].multi.size() == logits.cols(), "multi-label width differs from classes");
      for (std::size_t j = 0; j < logits.cols(); ++j) {
        const double x = logits(i, j), y = labels[i].multi[j];
        // log(1 + e^x) - x*y, stable for both signs.
        total += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
        if (grad) (*grad)(i, j) = static_cast<T>((1.0 / (1.0 + std::exp(-x)) - y) / count);
      }
    }
  }
  if (count == 0) return 0.0;
  return total / count;
}

/// Class probabilities from one logit row: softmax, or per-class sigmoid for
/// multi-label models.
template <typename T>
std::vector<float> probabilities(std::span<const T> logits, LossKind loss) {
  std::vector<float> out(logits.size());
  if (loss == LossKind::kSigmoid) {
    for (std::size_t j = 0; j < logits.size(); ++j) out[j] = static_cast<float>(1.0 / (1.0 + std::exp(-double(logits[j]))));
    return out;
  }
  double mx = logits.empty() ? 0.0 : double(logits[0]);
  for (auto v : logits) mx = std::max(mx, double(v));
  double sum = 0;
  for (auto v : logits) sum += std::exp(double(v) - mx);
  for (std::size_t j = 0; j < logits.size(); ++j) out[j] = static_cast<float>(std::exp(double(logits[j]) - mx) / sum);
  return out;
}

/// Adds 0.5 * lambda * |W|^2 to the loss gradient for every GNN layer weight.
template <typename T>
double add_weight_decay(const Model<T>& model, Model<T>& grad, double lambda) {
  double penalty = 0;
  if (lambda == 0) return 0;
  for (std::size_t k = 0; k < model.layers.size(); ++k) {
    auto w = model.layers[k].weight.flat();
    auto g = grad.layers[k].weight.flat();
    for (std::size_t i = 0; i < w.size(); ++i) {
      penalty += 0.5 * lambda * static_cast<double>(w[i]) * w[i];
      g[i] += static_cast<T>(lambda * w[i]);
    }
  }
  return penalty;
}

// Adam --------------------------------------------------------------------------

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m, v;  // one per parameter tensor
};

/// One Adam step over parallel lists of parameter and gradient buffers.
template <typename T>
void adam_update(std::span<const std::span<T>> params, std::span<const std::span<const T>> grads,
                 AdamState& state) {
  check_shape(params.size() == grads.size(), "adam: parameter and gradient lists differ");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    check_shape(params[i].size() == grads[i].size(), "adam: tensor " + std::to_string(i) + " shape");
    for (auto g : grads[i]) {
      if (!std::isfinite(static_cast<double>(g))) {
        raise(ErrorKind::kNumerics, "non-finite gradient in tensor " + std::to_string(i));
      }
    }
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.size(), 0.0);
      state.v.emplace_back(p.size(), 0.0);
    }
  }
  check_shape(state.m.size() == params.size(), "adam: state does not match parameters");
  ++state.step;
  const auto& c = state.config;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < params[i].size(); ++j) {
      const double g = grads[i][j];
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g;
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g * g;
      const double mhat = m[j] / bc1, vhat = v[j] / bc2;
      params[i][j] = static_cast<T>(params[i][j] - c.lr * mhat / (std::sqrt(vhat) + c.eps));
    }
  }
}

template <typename T>
void adam_step(Model<T>& model, const Model<T>& grad, AdamState& state) {
  std::vector<std::span<T>> params;
  std::vector<std::span<const T>> grads;
  model.for_each_tensor([&](Matrix<T>& m) { params.push_back(m.flat()); });
  grad.for_each_tensor([&](const Matrix<T>& m) { grads.push_back(m.flat()); });
  adam_update<T>(params, grads, state);
  ++model.version;
}

// Checkpoint format ---------------------------------------------------------------

namespace detail {

inline void append_tensor(std::string& out, std::string_view name, const Matrix<float>& m) {
  out += std::string(name) + " " + std::to_string(m.rows()) + " " + std::to_string(m.cols()) + "\n";
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (c) out.push_back('\t');
      append_float(out, m(r, c));
    }
    out.push_back('\n');
  }
}

inline std::string join_dims(const std::vector<std::size_t>& dims) {
  std::string s;
  for (std::size_t i = 0; i < dims.size(); ++i) s += (i ? "," : "") + std::to_string(dims[i]);
  return s;
}

/// Line cursor over checkpoint text; every failure is a CheckpointError.
class CheckpointReader {
 public:
  explicit CheckpointReader(std::string_view text) : text_(text) {}

  bool done() const { return pos_ >= text_.size(); }

  std::string_view line() {
    if (done()) fail("unexpected end of checkpoint");
    auto end = text_.find('\n', pos_);
    if (end == std::string_view::npos) fail("checkpoint must end with a newline");
    auto l = text_.substr(pos_, end - pos_);
    pos_ = end + 1;
    ++line_no_;
    return l;
  }

  [[noreturn]] void fail(const std::string& what) const {
    raise(ErrorKind::kCheckpoint, "line " + std::to_string(line_no_) + ": " + what);
  }

  std::size_t number(std::string_view s) const {
    std::uint64_t v = 0;
    if (!parse_u64(s, v)) fail("bad number '" + std::string(s) + "'");
    return v;
  }

  /// "key=value" token.
  std::string_view field(std::string_view token, std::string_view key) const {
    if (!token.starts_with(key) || token.size() <= key.size() || token[key.size()] != '=') {
      fail("expected " + std::string(key) + "=");
    }
    return token.substr(key.size() + 1);
  }

  Matrix<float> tensor(std::string_view name, std::size_t rows, std::size_t cols) {
    auto head = split(line(), ' ');
    if (head.size() != 3 || head[0] != name) fail("expected tensor " + std::string(name));
    if (number(head[1]) != rows || number(head[2]) != cols) fail("tensor " + std::string(name) + " shape");
    Matrix<float> m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
      auto vals = split(line(), '\t');
      if (vals.size() != cols) fail("tensor " + std::string(name) + " row width");
      for (std::size_t c = 0; c < cols; ++c) {
        if (!parse_float(vals[c], m(r, c))) fail("bad value '" + std::string(vals[c]) + "'");
      }
    }
    return m;
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_no_ = 0;
};

}  // namespace detail

inline std::string model_header(const ModelConfig& c) {
  return "MODEL v1 kind=" + to_string(c.kind) + " K=" + std::to_string(c.hops()) +
         " dims=" + detail::join_dims(c.dims) + " classes=" + std::to_string(c.classes) +
         " heads=" + std::to_string(c.kind == LayerKind::kGAT ? c.heads : 1) +
         " act=" + (c.activation == Activation::kRelu ? "relu" : "none") +
         " loss=" + (c.loss == LossKind::kSoftmax ? "softmax" : "sigmoid") + "\n";
}

inline std::string layer_block(std::size_t k, const LayerParams<float>& l) {
  std::string out = "LAYER " + std::to_string(k) + " kind=" + to_string(l.kind) + " in=" +
                    std::to_string(l.in_dim) + " out=" + std::to_string(l.out_dim) +
                    " heads=" + std::to_string(l.heads) + "\n";
  detail::append_tensor(out, "weight", l.weight);
  detail::append_tensor(out, "bias", l.bias);
  if (l.kind == LayerKind::kGAT) {
    detail::append_tensor(out, "att_src", l.att_src);
    detail::append_tensor(out, "att_dst", l.att_dst);
  }
  out += "END LAYER\n";
  return out;
}

inline std::string head_block(const HeadParams<float>& h) {
  std::string out = "HEAD in=" + std::to_string(h.weight.rows()) + " out=" + std::to_string(h.weight.cols()) + "\n";
  detail::append_tensor(out, "weight", h.weight);
  detail::append_tensor(out, "bias", h.bias);
  out += "END HEAD\n";
  return out;
}

inline std::string save_model(const Model<float>& m) {
  std::string out = model_header(m.config);
  for (std::size_t k = 0; k < m.layers.size(); ++k) out += layer_block(k, m.layers[k]);
  out += head_block(m.head);
  return out;
}

inline ModelConfig parse_model_header(std::string_view line) {
  detail::CheckpointReader r(line);
  auto tok = split(line, ' ');
  if (tok.size() != 9 || tok[0] != "MODEL") r.fail("not a model checkpoint header");
  if (tok[1] != "v1") r.fail("unsupported checkpoint version '" + std::string(tok[1]) + "'");
  ModelConfig c;
  try {
    c.kind = parse_layer_kind(r.field(tok[2], "kind"));
  } catch (const Error&) {
    r.fail("unknown layer kind");
  }
  const std::size_t hops = r.number(r.field(tok[3], "K"));
  for (auto d : split(r.field(tok[4], "dims"), ',')) c.dims.push_back(r.number(d));
  if (c.dims.size() != hops + 1 || hops == 0) r.fail("dims do not match K");
  c.classes = r.number(r.field(tok[5], "classes"));
  c.heads = r.number(r.field(tok[6], "heads"));
  auto act = r.field(tok[7], "act");
  if (act == "relu") {
    c.activation = Activation::kRelu;
  } else if (act == "none") {
    c.activation = Activation::kNone;
  } else {
    r.fail("unknown activation");
  }
  auto loss = r.field(tok[8], "loss");
  if (loss == "softmax") {
    c.loss = LossKind::kSoftmax;
  } else if (loss == "sigmoid") {
    c.loss = LossKind::kSigmoid;
  } else {
    r.fail("unknown loss");
  }
  if (c.classes == 0 || c.heads == 0) r.fail("classes and heads must be positive");
  for (std::size_t k = 1; k < c.dims.size(); ++k) {
    if (c.dims[k] % (c.kind == LayerKind::kGAT ? c.heads : 1) != 0) r.fail("layer width not divisible by heads");
  }
  return c;
}

/// Parses one LAYER block (including its END line).
inline LayerParams<float> parse_layer_block(std::string_view text, std::size_t expect_index) {
  detail::CheckpointReader r(text);
  auto tok = split(r.line(), ' ');
  if (tok.size() != 6 || tok[0] != "LAYER") r.fail("expected LAYER block");
  if (r.number(tok[1]) != expect_index) r.fail("layer index out of sequence");
  LayerParams<float> l;
  try {
    l.kind = parse_layer_kind(r.field(tok[2], "kind"));
  } catch (const Error&) {
    r.fail("unknown layer kind");
  }
  l.in_dim = r.number(r.field(tok[3], "in"));
  l.out_dim = r.number(r.field(tok[4], "out"));
  l.heads = r.number(r.field(tok[5], "heads"));
  if (l.heads == 0 || l.out_dim % l.heads != 0) r.fail("bad head count");
  l.weight = r.tensor("weight", l.in_dim, l.out_dim);
  l.bias = r.tensor("bias", 1, l.out_dim);
  if (l.kind == LayerKind::kGAT) {
    l.att_src = r.tensor("att_src", l.heads, l.out_dim / l.heads);
    l.att_dst = r.tensor("att_dst", l.heads, l.out_dim / l.heads);
  }
  if (r.line() != "END LAYER") r.fail("expected END LAYER");
  if (!r.done()) r.fail("trailing data after layer block");
  return l;
}

inline HeadParams<float> parse_head_block(std::string_view text) {
  detail::CheckpointReader r(text);
  auto tok = split(r.line(), ' ');
  if (tok.size() != 3 || tok[0] != "HEAD") r.fail("expected HEAD block");
  const std::size_t in = r.number(r.field(tok[1], "in"));
  const std::size_t out = r.number(r.field(tok[2], "out"));
  HeadParams<float> h;
  h.weight = r.tensor("weight", in, out);
  h.bias = r.tensor("bias", 1, out);
  if (r.line() != "END HEAD") r.fail("expected END HEAD");
  if (!r.done()) r.fail("trailing data after head block");
  return h;
}

/// Splits checkpoint text into the header line and the K+1 block texts,
/// verbatim.
inline std::vector<std::string_view> split_checkpoint_blocks(std::string_view text, std::string_view& header) {
  auto fail = [](const std::string& what) { raise(ErrorKind::kCheckpoint, what); };
  auto nl = text.find('\n');
  if (nl == std::string_view::npos) fail("missing checkpoint header");
  header = text.substr(0, nl + 1);
  std::vector<std::string_view> blocks;
  std::size_t pos = nl + 1;
  while (pos < text.size()) {
    const bool is_head = text.substr(pos).starts_with("HEAD ");
    if (!is_head && !text.substr(pos).starts_with("LAYER ")) fail("expected LAYER or HEAD block");
    const std::string_view end_marker = is_head ? "\nEND HEAD\n" : "\nEND LAYER\n";
    auto end = text.find(end_marker, pos);
    if (end == std::string_view::npos) fail("unterminated block");
    end += end_marker.size();
    blocks.push_back(text.substr(pos, end - pos));
    pos = end;
    if (is_head) break;
  }
  if (pos != text.size()) fail("trailing data after HEAD block");
  if (blocks.empty() || !blocks.back().starts_with("HEAD ")) fail("checkpoint has no HEAD block");
  return blocks;
}

inline Model<float> load_model_text(std::string_view text) {
  std::string_view header;
  auto blocks = split_checkpoint_blocks(text, header);
  Model<float> m;
  m.config = parse_model_header(header.substr(0, header.size() - 1));
  const auto hops = static_cast<std::size_t>(m.config.hops());
  if (blocks.size() != hops + 1) raise(ErrorKind::kCheckpoint, "header says K=" + std::to_string(hops) +
                                                                   " but found " + std::to_string(blocks.size() - 1) + " layers");
  for (std::size_t k = 0; k < hops; ++k) {
    auto l = parse_layer_block(blocks[k], k);
    if (l.kind != m.config.kind || l.in_dim != m.config.dims[k] || l.out_dim != m.config.dims[k + 1]) {
      raise(ErrorKind::kCheckpoint, "layer " + std::to_string(k) + " disagrees with the header");
    }
    m.layers.push_back(std::move(l));
  }
  m.head = parse_head_block(blocks.back());
  if (m.head.weight.rows() != m.config.dims.back() || m.head.weight.cols() != m.config.classes) {
    raise(ErrorKind::kCheckpoint, "head disagrees with the header");
  }
  return m;
}

inline Model<float> load_model(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    raise(ErrorKind::kIo, e.what());
  }
  return load_model_text(text);
}

}  // namespace agl
