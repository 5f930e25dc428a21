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

// GNN layers of the form h_v' = AGG({z_v} + {z_u : u -> v}) with z = hW,
// plus their reverse-mode gradients.
//
//   GCN   h_v' = (z_v + sum_u w_vu z_u) / (1 + sum_u w_vu) + b
//   SAGE  h_v' = z_v + sum_u w_vu z_u / sum_u w_vu + b
//   GAT   h_v' = concat_h sum_{j in {v} + N(v)} alpha_vj^h z_j^h + b,
//         alpha^h = softmax_j LeakyReLU(a_dst^h . z_v^h + a_src^h . z_j^h)
//
// Reductions over a destination row run in double, in ascending source
// order, on one thread, so a row's value never depends on how rows are split
// across threads.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "agl/batch.hpp"
#include "agl/error.hpp"
#include "agl/parallel.hpp"
#include "agl/tensor.hpp"

namespace agl {

enum class LayerKind { kGCN, kSAGE, kGAT };

inline std::string to_string(LayerKind k) {
  switch (k) {
    case LayerKind::kGCN: return "gcn";
    case LayerKind::kSAGE: return "sage";
    case LayerKind::kGAT: return "gat";
  }
  return "?";
}

inline LayerKind parse_layer_kind(std::string_view s) {
  if (s == "gcn") return LayerKind::kGCN;
  if (s == "sage" || s == "graphsage") return LayerKind::kSAGE;
  if (s == "gat") return LayerKind::kGAT;
  raise(ErrorKind::kUsage, "unknown model kind '" + std::string(s) + "' (gcn, sage, gat)");
}

/// Work done by a forward pass: multiply-accumulates spent aggregating, and
/// per-node embedding computations (one per node per layer, one per target
/// for the head).
struct WorkCounter {
  std::uint64_t aggregation_ops = 0;
  std::uint64_t embedding_evals = 0;

  WorkCounter& operator+=(const WorkCounter& o) {
    aggregation_ops += o.aggregation_ops;
    embedding_evals += o.embedding_evals;
    return *this;
  }
};

template <typename T>
struct LayerParams {
  LayerKind kind = LayerKind::kGCN;
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::size_t heads = 1;
  Matrix<T> weight;   // in_dim x out_dim
  Matrix<T> bias;     // 1 x out_dim
  Matrix<T> att_src;  // heads x out_dim/heads, GAT only
  Matrix<T> att_dst;

  std::size_t head_dim() const { return out_dim / heads; }

  template <typename Fn>
  void for_each_tensor(Fn&& fn) {
    fn(weight);
    fn(bias);
    if (kind == LayerKind::kGAT) {
      fn(att_src);
      fn(att_dst);
    }
  }
  template <typename Fn>
  void for_each_tensor(Fn&& fn) const {
    fn(weight);
    fn(bias);
    if (kind == LayerKind::kGAT) {
      fn(att_src);
      fn(att_dst);
    }
  }
};

template <typename T>
LayerParams<T> make_layer(LayerKind kind, std::size_t in, std::size_t out, std::size_t heads) {
  if (kind != LayerKind::kGAT) heads = 1;
  check_shape(heads >= 1 && out % heads == 0, "layer width " + std::to_string(out) +
                                                  " not divisible by " + std::to_string(heads) + " heads");
  LayerParams<T> p;
  p.kind = kind;
  p.in_dim = in;
  p.out_dim = out;
  p.heads = heads;
  p.weight = Matrix<T>(in, out);
  p.bias = Matrix<T>(1, out);
  if (kind == LayerKind::kGAT) {
    p.att_src = Matrix<T>(heads, out / heads);
    p.att_dst = Matrix<T>(heads, out / heads);
  }
  return p;
}

/// Everything a layer's backward pass needs from its forward pass.
template <typename T>
struct LayerCache {
  Matrix<T> input;  // h, after dropout
  Matrix<T> z;      // hW on the adjacency's input rows
  std::vector<double> s, t;      // GAT: per row x head destination / source scores
  std::vector<double> alpha;     // GAT: per (row slot) x head, see slot_of
};

/// GAT softmax slot of row v: slot 0 is v itself, slot i+1 the i-th entry.
inline std::size_t gat_slot(const Adjacency& a, std::uint32_t v, std::size_t i) {
  return a.row_begin(v) + v + i;
}

namespace detail {

/// Self and per-entry coefficients of the linear aggregators.
inline void linear_coefficients(LayerKind kind, std::span<const AdjEntry> row, double& self,
                                std::vector<double>& coef) {
  coef.resize(row.size());
  double wsum = 0;
  for (const auto& e : row) wsum += e.weight;
  if (kind == LayerKind::kGCN) {
    const double d = 1.0 + wsum;
    self = 1.0 / d;
    for (std::size_t i = 0; i < row.size(); ++i) coef[i] = row[i].weight / d;
  } else {
    self = 1.0;
    for (std::size_t i = 0; i < row.size(); ++i) coef[i] = wsum > 0 ? row[i].weight / wsum : 0.0;
  }
}

inline double leaky(double x) { return x > 0 ? x : 0.2 * x; }

}  // namespace detail

/// GCN / SAGE aggregation of `z` into the active rows of `out`.
template <typename T>
void aggregate(const Adjacency& a, LayerKind kind, const Matrix<T>& z, const EdgePartition& part,
               Matrix<T>& out) {
  check_shape(kind != LayerKind::kGAT, "aggregate: GAT needs attention parameters");
  check_shape(z.rows() == a.num_rows(), "aggregate: embedding rows " + std::to_string(z.rows()) +
                                            " vs adjacency rows " + std::to_string(a.num_rows()));
  check_shape(out.rows() == z.rows() && out.cols() == z.cols(), "aggregate: output shape");
  const std::size_t d = z.cols();
  parallel_for(part.parts(), part.parts(), [&](std::size_t p) {
    std::vector<double> acc(d), coef;
    double self = 0;
    for (std::size_t v = part.bounds[p]; v < part.bounds[p + 1]; ++v) {
      if (!a.active(v)) continue;
      auto row = a.row(v);
      detail::linear_coefficients(kind, row, self, coef);
      auto zv = z.row(v);
      for (std::size_t j = 0; j < d; ++j) acc[j] = self * static_cast<double>(zv[j]);
      for (std::size_t i = 0; i < row.size(); ++i) {
        auto zu = z.row(row[i].src);
        for (std::size_t j = 0; j < d; ++j) acc[j] += coef[i] * static_cast<double>(zu[j]);
      }
      auto o = out.row(v);
      for (std::size_t j = 0; j < d; ++j) o[j] = static_cast<T>(acc[j]);
    }
  });
}

/// Convenience form with a fresh output matrix.
template <typename T>
Matrix<T> aggregate(const Adjacency& a, LayerKind kind, const Matrix<T>& z, std::size_t threads = 1) {
  Matrix<T> out(z.rows(), z.cols());
  aggregate(a, kind, z, partition_edges(a, threads), out);
  return out;
}

/// GAT aggregation. Fills s/t (scores) and alpha (attention) when given.
template <typename T>
void aggregate_attention(const Adjacency& a, const Matrix<T>& z, const Matrix<T>& att_src,
                         const Matrix<T>& att_dst, const EdgePartition& part, Matrix<T>& out,
                         std::vector<double>& s, std::vector<double>& t, std::vector<double>& alpha) {
  const std::size_t heads = att_src.rows();
  const std::size_t hd = att_src.cols();
  check_shape(z.rows() == a.num_rows() && z.cols() == heads * hd, "attention: embedding shape");
  check_shape(att_dst.rows() == heads && att_dst.cols() == hd, "attention: parameter shape");
  const std::size_t n = a.num_rows();
  s.assign(n * heads, 0.0);
  t.assign(n * heads, 0.0);
  for (auto r : a.input_rows()) {
    for (std::size_t h = 0; h < heads; ++h) {
      double ss = 0, tt = 0;
      for (std::size_t j = 0; j < hd; ++j) {
        const double zj = z(r, h * hd + j);
        ss += static_cast<double>(att_dst(h, j)) * zj;
        tt += static_cast<double>(att_src(h, j)) * zj;
      }
      s[r * heads + h] = ss;
      t[r * heads + h] = tt;
    }
  }
  alpha.assign((a.num_entries() + n) * heads, 0.0);
  parallel_for(part.parts(), part.parts(), [&](std::size_t p) {
    std::vector<double> logits, acc(hd);
    for (std::size_t v = part.bounds[p]; v < part.bounds[p + 1]; ++v) {
      if (!a.active(v)) continue;
      auto row = a.row(v);
      const auto vv = static_cast<std::uint32_t>(v);
      for (std::size_t h = 0; h < heads; ++h) {
        const double sv = s[v * heads + h];
        logits.resize(row.size() + 1);
        logits[0] = detail::leaky(sv + t[v * heads + h]);
        for (std::size_t i = 0; i < row.size(); ++i) logits[i + 1] = detail::leaky(sv + t[row[i].src * heads + h]);
        double mx = logits[0];
        for (double l : logits) mx = std::max(mx, l);
        double sum = 0;
        for (auto& l : logits) sum += (l = std::exp(l - mx));
        for (std::size_t i = 0; i < logits.size(); ++i) {
          alpha[gat_slot(a, vv, i) * heads + h] = logits[i] / sum;
        }
        for (std::size_t j = 0; j < hd; ++j) acc[j] = alpha[gat_slot(a, vv, 0) * heads + h] * z(v, h * hd + j);
        for (std::size_t i = 0; i < row.size(); ++i) {
          const double w = alpha[gat_slot(a, vv, i + 1) * heads + h];
          for (std::size_t j = 0; j < hd; ++j) acc[j] += w * z(row[i].src, h * hd + j);
        }
        for (std::size_t j = 0; j < hd; ++j) out(v, h * hd + j) = static_cast<T>(acc[j]);
      }
    }
  });
}

/// Layer output before activation: the active rows hold values, all other
/// rows are zero.
template <typename T>
Matrix<T> layer_forward(const LayerParams<T>& p, const Matrix<T>& h, const Adjacency& a,
                        std::size_t threads, LayerCache<T>* cache = nullptr, WorkCounter* work = nullptr) {
  check_shape(h.cols() == p.in_dim, "layer expects input width " + std::to_string(p.in_dim) + ", got " +
                                        std::to_string(h.cols()));
  check_shape(h.rows() == a.num_rows(), "layer input rows differ from adjacency rows");
  Matrix<T> z(h.rows(), p.out_dim);
  matmul_rows(h, p.weight, std::span<const std::uint32_t>(a.input_rows()), z);

  Matrix<T> out(h.rows(), p.out_dim);
  auto part = partition_edges(a, threads);
  std::vector<double> s, t, alpha;
  if (p.kind == LayerKind::kGAT) {
    aggregate_attention(a, z, p.att_src, p.att_dst, part, out, s, t, alpha);
  } else {
    aggregate(a, p.kind, z, part, out);
  }
  for (auto v : a.active_rows()) {
    auto o = out.row(v);
    for (std::size_t j = 0; j < p.out_dim; ++j) o[j] += p.bias(0, j);
  }
  if (work) {
    work->embedding_evals += a.active_rows().size();
    for (auto v : a.active_rows()) work->aggregation_ops += (a.row(v).size() + 1) * p.out_dim;
  }
  if (cache) {
    cache->input = h;
    cache->z = std::move(z);
    cache->s = std::move(s);
    cache->t = std::move(t);
    cache->alpha = std::move(alpha);
  }
  return out;
}

/// Accumulates parameter gradients into `grad` given d(loss)/d(pre-activation
/// output). Returns d(loss)/d(input) on the input rows when asked.
template <typename T>
Matrix<T> layer_backward(const LayerParams<T>& p, const Adjacency& a, const LayerCache<T>& c,
                         const Matrix<T>& dout, LayerParams<T>& grad, bool want_input_grad) {
  const std::size_t n = a.num_rows();
  Matrix<T> dz(n, p.out_dim);
  for (auto v : a.active_rows()) {
    for (std::size_t j = 0; j < p.out_dim; ++j) grad.bias(0, j) += dout(v, j);
  }
  if (p.kind != LayerKind::kGAT) {
    std::vector<double> coef;
    double self = 0;
    for (auto v : a.active_rows()) {
      auto row = a.row(v);
      detail::linear_coefficients(p.kind, row, self, coef);
      auto g = dout.row(v);
      for (std::size_t j = 0; j < p.out_dim; ++j) dz(v, j) += static_cast<T>(self * g[j]);
      for (std::size_t i = 0; i < row.size(); ++i) {
        for (std::size_t j = 0; j < p.out_dim; ++j) dz(row[i].src, j) += static_cast<T>(coef[i] * g[j]);
      }
    }
  } else {
    const std::size_t heads = p.heads, hd = p.head_dim();
    std::vector<double> ds(n * heads, 0.0), dt(n * heads, 0.0), dalpha;
    for (auto v : a.active_rows()) {
      auto row = a.row(v);
      for (std::size_t h = 0; h < heads; ++h) {
        auto src_of = [&](std::size_t i) { return i == 0 ? v : row[i - 1].src; };
        const std::size_t m = row.size() + 1;
        dalpha.assign(m, 0.0);
        double dot = 0;
        for (std::size_t i = 0; i < m; ++i) {
          const std::uint32_t u = src_of(i);
          const double al = c.alpha[gat_slot(a, v, i) * heads + h];
          double da = 0;
          for (std::size_t j = 0; j < hd; ++j) {
            const double g = dout(v, h * hd + j);
            da += g * c.z(u, h * hd + j);
            dz(u, h * hd + j) += static_cast<T>(al * g);
          }
          dalpha[i] = da;
          dot += al * da;
        }
        const double sv = c.s[v * heads + h];
        for (std::size_t i = 0; i < m; ++i) {
          const std::uint32_t u = src_of(i);
          const double al = c.alpha[gat_slot(a, v, i) * heads + h];
          const double e = sv + c.t[u * heads + h];
          const double de = al * (dalpha[i] - dot) * (e > 0 ? 1.0 : 0.2);
          ds[v * heads + h] += de;
          dt[u * heads + h] += de;
        }
      }
    }
    for (auto r : a.input_rows()) {
      for (std::size_t h = 0; h < heads; ++h) {
        const double dsr = ds[r * heads + h], dtr = dt[r * heads + h];
        if (dsr == 0 && dtr == 0) continue;
        for (std::size_t j = 0; j < hd; ++j) {
          const double zj = c.z(r, h * hd + j);
          grad.att_dst(h, j) += static_cast<T>(dsr * zj);
          grad.att_src(h, j) += static_cast<T>(dtr * zj);
          dz(r, h * hd + j) += static_cast<T>(dsr * p.att_dst(h, j) + dtr * p.att_src(h, j));
        }
      }
    }
  }
  std::span<const std::uint32_t> rows(a.input_rows());
  accumulate_outer(c.input, dz, rows, grad.weight);
  Matrix<T> dh;
  if (want_input_grad) {
    dh = Matrix<T>(n, p.in_dim);
    matmul_transposed_rows(dz, p.weight, rows, dh);
  }
  return dh;
}

}  // namespace agl
