#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "t2t/rng.hpp"
#include "t2t/tensor.hpp"

// Differentiable operations on Tensor<Scalar>. Every op computes its forward
// value eagerly and, when a parent requires a gradient, records a closure that
// maps the result gradient back onto its parents.

namespace t2t {

using TokenId = std::int32_t;

namespace detail {

template <typename Scalar>
Scalar* parent_grad(Node<Scalar>& self, std::size_t i) {
  auto& p = *self.parents[i];
  return p.requires_grad ? p.grad_data() : nullptr;
}

inline bool is_suffix(const Shape& full, const Shape& suffix) {
  if (suffix.size() > full.size()) return false;
  return std::equal(suffix.rbegin(), suffix.rend(), full.rbegin());
}

struct MatmulDims {
  Index batch = 1;
  Index m = 0, k = 0, n = 0;
  bool b_batched = false;
  Shape out;
};

// a: [m,k] or [B,m,k]; b: [k,n] / [n,k] (transposed) or batched with matching B.
inline MatmulDims matmul_dims(const Shape& a, const Shape& b, bool transpose_b) {
  auto fail = [&]() {
    return DimensionError("matmul: cannot multiply " + shape_string(a) + " by " +
                          shape_string(b) + (transpose_b ? " (transposed)" : ""));
  };
  if (a.size() < 2 || a.size() > 3 || b.size() < 2 || b.size() > 3) throw fail();
  if (b.size() == 3 && a.size() != 3) throw fail();
  MatmulDims d;
  d.batch = a.size() == 3 ? a[0] : 1;
  d.b_batched = b.size() == 3;
  if (d.b_batched && b[0] != d.batch) throw fail();
  d.m = a[a.size() - 2];
  d.k = a[a.size() - 1];
  const Index bk = transpose_b ? b[b.size() - 1] : b[b.size() - 2];
  d.n = transpose_b ? b[b.size() - 2] : b[b.size() - 1];
  if (bk != d.k) throw fail();
  d.out = a.size() == 3 ? Shape{d.batch, d.m, d.n} : Shape{d.m, d.n};
  return d;
}

template <typename Scalar>
Tensor<Scalar> matmul_impl(const Tensor<Scalar>& a, const Tensor<Scalar>& b, bool transpose_b) {
  const MatmulDims d = matmul_dims(a.shape(), b.shape(), transpose_b);
  const Index b_rows = transpose_b ? d.n : d.k;
  const Index b_cols = transpose_b ? d.k : d.n;
  VectorX<Scalar> out(d.batch * d.m * d.n);
  for (Index t = 0; t < d.batch; ++t) {
    ConstMatrixMap<Scalar> am(a.values().data() + t * d.m * d.k, d.m, d.k);
    ConstMatrixMap<Scalar> bm(b.values().data() + (d.b_batched ? t * d.k * d.n : 0), b_rows, b_cols);
    MatrixMap<Scalar> cm(out.data() + t * d.m * d.n, d.m, d.n);
    if (transpose_b) {
      cm.noalias() = am * bm.transpose();
    } else {
      cm.noalias() = am * bm;
    }
  }
  return Tensor<Scalar>::make_result(d.out, std::move(out), {a, b}, [d, transpose_b, b_rows, b_cols](Node<Scalar>& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    Scalar* ga = parent_grad(self, 0);
    Scalar* gb = parent_grad(self, 1);
    for (Index t = 0; t < d.batch; ++t) {
      ConstMatrixMap<Scalar> dc(self.grad.data() + t * d.m * d.n, d.m, d.n);
      ConstMatrixMap<Scalar> am(av.data() + t * d.m * d.k, d.m, d.k);
      const Index boff = d.b_batched ? t * d.k * d.n : 0;
      ConstMatrixMap<Scalar> bm(bv.data() + boff, b_rows, b_cols);
      if (ga) {
        MatrixMap<Scalar> gam(ga + t * d.m * d.k, d.m, d.k);
        if (transpose_b) {
          gam.noalias() += dc * bm;
        } else {
          gam.noalias() += dc * bm.transpose();
        }
      }
      if (gb) {
        MatrixMap<Scalar> gbm(gb + boff, b_rows, b_cols);
        if (transpose_b) {
          gbm.noalias() += dc.transpose() * am;
        } else {
          gbm.noalias() += am.transpose() * dc;
        }
      }
    }
  });
}

}  // namespace detail

/// Matrix product. Supports [m,k]x[k,n], [B,m,k]x[B,k,n] and [B,m,k]x[k,n].
template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return detail::matmul_impl(a, b, false);
}

/// a x b^T over the last two dimensions of b.
template <typename Scalar>
Tensor<Scalar> matmul_nt(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return detail::matmul_impl(a, b, true);
}

/// Elementwise sum. b may have the shape of a trailing suffix of a (broadcast
/// over the leading dimensions).
template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (!detail::is_suffix(a.shape(), b.shape())) {
    throw DimensionError("add: cannot broadcast " + shape_string(b.shape()) + " onto " +
                         shape_string(a.shape()));
  }
  const Index inner = b.numel();
  const Index reps = inner == 0 ? 0 : a.numel() / inner;
  VectorX<Scalar> out = a.values();
  for (Index r = 0; r < reps; ++r) out.segment(r * inner, inner) += b.values();
  return Tensor<Scalar>::make_result(a.shape(), std::move(out), {a, b}, [inner, reps](detail::Node<Scalar>& self) {
    self.parents[0]->accumulate(self.grad);
    if (self.parents[1]->requires_grad) {
      VectorX<Scalar> g = VectorX<Scalar>::Zero(inner);
      for (Index r = 0; r < reps; ++r) g += self.grad.segment(r * inner, inner);
      self.parents[1]->accumulate(g);
    }
  });
}

template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("sub: shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ");
  }
  return Tensor<Scalar>::make_result(a.shape(), a.values() - b.values(), {a, b}, [](detail::Node<Scalar>& self) {
    self.parents[0]->accumulate(self.grad);
    self.parents[1]->accumulate(-self.grad);
  });
}

/// Elementwise (Hadamard) product of equal shapes.
template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("mul: shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ");
  }
  return Tensor<Scalar>::make_result(a.shape(), a.values().cwiseProduct(b.values()), {a, b},
                                     [](detail::Node<Scalar>& self) {
                                       const auto& av = self.parents[0]->value;
                                       const auto& bv = self.parents[1]->value;
                                       self.parents[0]->accumulate(self.grad.cwiseProduct(bv));
                                       self.parents[1]->accumulate(self.grad.cwiseProduct(av));
                                     });
}

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar factor) {
  return Tensor<Scalar>::make_result(a.shape(), a.values() * factor, {a}, [factor](detail::Node<Scalar>& self) {
    self.parents[0]->accumulate(self.grad * factor);
  });
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x) {
  return Tensor<Scalar>::make_result(x.shape(), x.values().cwiseMax(Scalar(0)), {x}, [](detail::Node<Scalar>& self) {
    const auto& xv = self.parents[0]->value;
    self.parents[0]->accumulate((xv.array() > Scalar(0)).select(self.grad.array(), Scalar(0)).matrix());
  });
}

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& x) {
  VectorX<Scalar> out(1);
  out[0] = x.values().sum();
  return Tensor<Scalar>::make_result(Shape{}, std::move(out), {x}, [](detail::Node<Scalar>& self) {
    self.parents[0]->accumulate(VectorX<Scalar>::Constant(self.parents[0]->value.size(), self.grad[0]));
  });
}

template <typename Scalar>
Tensor<Scalar> mean(const Tensor<Scalar>& x) {
  return scale(sum(x), Scalar(1) / static_cast<Scalar>(std::max<Index>(1, x.numel())));
}

/// Copy with a new shape of equal element count.
template <typename Scalar>
Tensor<Scalar> reshape(const Tensor<Scalar>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
  }
  return Tensor<Scalar>::make_result(std::move(shape), x.values(), {x}, [](detail::Node<Scalar>& self) {
    self.parents[0]->accumulate(self.grad);
  });
}

/// Numerically stable softmax along `axis`. Lanes whose entries are all -inf
/// return the uniform distribution and propagate no gradient.
template <typename Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& x, Index axis = -1) {
  const Index rank = x.dim();
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) {
    throw ParameterError("softmax: axis out of range for " + shape_string(x.shape()));
  }
  Index outer = 1, inner = 1;
  for (Index i = 0; i < axis; ++i) outer *= x.shape()[static_cast<std::size_t>(i)];
  for (Index i = axis + 1; i < rank; ++i) inner *= x.shape()[static_cast<std::size_t>(i)];
  const Index n = x.shape()[static_cast<std::size_t>(axis)];
  const auto& xv = x.values();
  VectorX<Scalar> out(xv.size());
  std::vector<char> degenerate(static_cast<std::size_t>(outer * inner), 0);
  const Scalar neg_inf = -std::numeric_limits<Scalar>::infinity();
  for (Index o = 0; o < outer; ++o) {
    for (Index i = 0; i < inner; ++i) {
      const Index base = o * n * inner + i;
      Scalar mx = neg_inf;
      for (Index j = 0; j < n; ++j) mx = std::max(mx, xv[base + j * inner]);
      if (mx == neg_inf) {
        degenerate[static_cast<std::size_t>(o * inner + i)] = 1;
        for (Index j = 0; j < n; ++j) out[base + j * inner] = Scalar(1) / static_cast<Scalar>(n);
        continue;
      }
      Scalar total = 0;
      for (Index j = 0; j < n; ++j) {
        const Scalar e = std::exp(xv[base + j * inner] - mx);
        out[base + j * inner] = e;
        total += e;
      }
      for (Index j = 0; j < n; ++j) out[base + j * inner] /= total;
    }
  }
  return Tensor<Scalar>::make_result(x.shape(), std::move(out), {x},
      [outer, inner, n, degenerate = std::move(degenerate)](detail::Node<Scalar>& self) {
        Scalar* gx = detail::parent_grad(self, 0);
        if (!gx) return;
        const auto& y = self.value;
        const auto& g = self.grad;
        for (Index o = 0; o < outer; ++o) {
          for (Index i = 0; i < inner; ++i) {
            if (degenerate[static_cast<std::size_t>(o * inner + i)]) continue;
            const Index base = o * n * inner + i;
            Scalar dot = 0;
            for (Index j = 0; j < n; ++j) dot += g[base + j * inner] * y[base + j * inner];
            for (Index j = 0; j < n; ++j) {
              const Index at = base + j * inner;
              gx[at] += y[at] * (g[at] - dot);
            }
          }
        }
      });
}

/// y = gain * x / sqrt(mean(x^2) + epsilon) over the last dimension. No mean
/// subtraction and no additive bias.
template <typename Scalar>
Tensor<Scalar> rms_layer_norm(const Tensor<Scalar>& x, const Tensor<Scalar>& gain, Scalar epsilon = Scalar(1e-6)) {
  const Index d = x.dim() == 0 ? 1 : x.shape().back();
  if (gain.numel() != d) {
    throw DimensionError("rms_layer_norm: gain " + shape_string(gain.shape()) +
                         " does not match last dimension of " + shape_string(x.shape()));
  }
  const Index rows = d == 0 ? 0 : x.numel() / d;
  VectorX<Scalar> inv(rows);
  VectorX<Scalar> out(x.numel());
  ConstMatrixMap<Scalar> xm(x.values().data(), rows, d);
  MatrixMap<Scalar> om(out.data(), rows, d);
  for (Index r = 0; r < rows; ++r) {
    const Scalar ms = xm.row(r).squaredNorm() / static_cast<Scalar>(d);
    inv[r] = Scalar(1) / std::sqrt(ms + epsilon);
    om.row(r) = xm.row(r).cwiseProduct(gain.values().transpose()) * inv[r];
  }
  return Tensor<Scalar>::make_result(x.shape(), std::move(out), {x, gain},
      [rows, d, inv = std::move(inv)](detail::Node<Scalar>& self) {
        const auto& xv = self.parents[0]->value;
        const auto& gv = self.parents[1]->value;
        Scalar* gx = detail::parent_grad(self, 0);
        Scalar* gg = detail::parent_grad(self, 1);
        ConstMatrixMap<Scalar> xm(xv.data(), rows, d);
        ConstMatrixMap<Scalar> dy(self.grad.data(), rows, d);
        for (Index r = 0; r < rows; ++r) {
          const auto xhat = (xm.row(r) * inv[r]).eval();
          if (gg) {
            Eigen::Map<VectorX<Scalar>> ggv(gg, d);
            ggv += dy.row(r).cwiseProduct(xhat).transpose();
          }
          if (gx) {
            const auto dxhat = dy.row(r).cwiseProduct(gv.transpose()).eval();
            const Scalar m = dxhat.cwiseProduct(xhat).sum() / static_cast<Scalar>(d);
            Eigen::Map<Eigen::Matrix<Scalar, 1, Eigen::Dynamic>> gxr(gx + r * d, d);
            gxr += inv[r] * (dxhat - xhat * m);
          }
        }
      });
}

/// Inverted dropout. Evaluation mode and rate 0 return x unchanged.
template <typename Scalar>
Tensor<Scalar> dropout(const Tensor<Scalar>& x, double rate, Rng& rng, bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ParameterError("dropout: rate must be in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) return x;
  const Scalar keep_scale = static_cast<Scalar>(1.0 / (1.0 - rate));
  VectorX<Scalar> mask(x.numel());
  for (Index i = 0; i < x.numel(); ++i) mask[i] = rng.uniform() < rate ? Scalar(0) : keep_scale;
  VectorX<Scalar> out = x.values().cwiseProduct(mask);
  return Tensor<Scalar>::make_result(x.shape(), std::move(out), {x}, [mask = std::move(mask)](detail::Node<Scalar>& self) {
    self.parents[0]->accumulate(self.grad.cwiseProduct(mask));
  });
}

/// Row gather from an embedding table [vocab, d] -> [ids.size(), d].
template <typename Scalar>
Tensor<Scalar> embedding(const Tensor<Scalar>& table, std::span<const TokenId> ids) {
  if (table.dim() != 2) throw DimensionError("embedding: table must be 2-D, got " + shape_string(table.shape()));
  const Index vocab = table.size(0);
  const Index d = table.size(1);
  std::vector<TokenId> rows(ids.begin(), ids.end());
  VectorX<Scalar> out(static_cast<Index>(rows.size()) * d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= vocab) {
      throw IndexError("embedding: token id " + std::to_string(rows[i]) + " outside vocabulary of " +
                       std::to_string(vocab));
    }
    out.segment(static_cast<Index>(i) * d, d) = table.values().segment(rows[i] * d, d);
  }
  const auto n = static_cast<Index>(rows.size());
  return Tensor<Scalar>::make_result(Shape{n, d}, std::move(out), {table},
      [rows = std::move(rows), d](detail::Node<Scalar>& self) {
        Scalar* gt = detail::parent_grad(self, 0);
        if (!gt) return;
        for (std::size_t i = 0; i < rows.size(); ++i) {
          Eigen::Map<VectorX<Scalar>>(gt + rows[i] * d, d) += self.grad.segment(static_cast<Index>(i) * d, d);
        }
      });
}

/// Mean negative log-likelihood of `targets` under row-wise softmax(logits),
/// skipping positions equal to ignore_id. Returns 0 when every position is ignored.
template <typename Scalar>
Tensor<Scalar> cross_entropy(const Tensor<Scalar>& logits, std::span<const TokenId> targets, TokenId ignore_id) {
  if (logits.dim() != 2 || logits.size(0) != static_cast<Index>(targets.size())) {
    throw DimensionError("cross_entropy: logits " + shape_string(logits.shape()) + " do not match " +
                         std::to_string(targets.size()) + " targets");
  }
  const Index n = logits.size(0);
  const Index vocab = logits.size(1);
  std::vector<TokenId> tgt(targets.begin(), targets.end());
  Index counted = 0;
  for (TokenId t : tgt) {
    if (t == ignore_id) continue;
    if (t < 0 || t >= vocab) {
      throw IndexError("cross_entropy: target id " + std::to_string(t) + " outside vocabulary of " +
                       std::to_string(vocab));
    }
    ++counted;
  }
  ConstMatrixMap<Scalar> lm(logits.values().data(), n, vocab);
  RowMatrix<Scalar> probs(n, vocab);
  Scalar total = 0;
  for (Index r = 0; r < n; ++r) {
    const Scalar mx = lm.row(r).maxCoeff();
    probs.row(r) = (lm.row(r).array() - mx).exp().matrix();
    const Scalar z = probs.row(r).sum();
    probs.row(r) /= z;
    const TokenId t = tgt[static_cast<std::size_t>(r)];
    if (t != ignore_id) total += -(lm(r, t) - mx - std::log(z));
  }
  const Scalar denom = static_cast<Scalar>(std::max<Index>(1, counted));
  VectorX<Scalar> out(1);
  out[0] = counted == 0 ? Scalar(0) : total / denom;
  return Tensor<Scalar>::make_result(Shape{}, std::move(out), {logits},
      [probs = std::move(probs), tgt = std::move(tgt), ignore_id, denom, n, vocab](detail::Node<Scalar>& self) {
        Scalar* gl = detail::parent_grad(self, 0);
        if (!gl) return;
        const Scalar g = self.grad[0] / denom;
        MatrixMap<Scalar> gm(gl, n, vocab);
        for (Index r = 0; r < n; ++r) {
          const TokenId t = tgt[static_cast<std::size_t>(r)];
          if (t == ignore_id) continue;
          gm.row(r) += g * probs.row(r);
          gm(r, t) -= g;
        }
      });
}

/// [len, heads * d] -> [heads, len, d]
template <typename Scalar>
Tensor<Scalar> split_heads(const Tensor<Scalar>& x, Index heads) {
  if (x.dim() != 2 || heads <= 0 || x.size(1) % heads != 0) {
    throw DimensionError("split_heads: cannot split " + shape_string(x.shape()) + " into " +
                         std::to_string(heads) + " heads");
  }
  const Index len = x.size(0);
  const Index d = x.size(1) / heads;
  VectorX<Scalar> out(x.numel());
  for (Index h = 0; h < heads; ++h)
    for (Index t = 0; t < len; ++t)
      out.segment((h * len + t) * d, d) = x.values().segment(t * heads * d + h * d, d);
  return Tensor<Scalar>::make_result(Shape{heads, len, d}, std::move(out), {x}, [heads, len, d](detail::Node<Scalar>& self) {
    Scalar* gx = detail::parent_grad(self, 0);
    if (!gx) return;
    for (Index h = 0; h < heads; ++h)
      for (Index t = 0; t < len; ++t)
        Eigen::Map<VectorX<Scalar>>(gx + t * heads * d + h * d, d) += self.grad.segment((h * len + t) * d, d);
  });
}

/// [heads, len, d] -> [len, heads * d]
template <typename Scalar>
Tensor<Scalar> merge_heads(const Tensor<Scalar>& x) {
  if (x.dim() != 3) throw DimensionError("merge_heads: expected 3-D input, got " + shape_string(x.shape()));
  const Index heads = x.size(0), len = x.size(1), d = x.size(2);
  VectorX<Scalar> out(x.numel());
  for (Index h = 0; h < heads; ++h)
    for (Index t = 0; t < len; ++t)
      out.segment(t * heads * d + h * d, d) = x.values().segment((h * len + t) * d, d);
  return Tensor<Scalar>::make_result(Shape{len, heads * d}, std::move(out), {x}, [heads, len, d](detail::Node<Scalar>& self) {
    Scalar* gx = detail::parent_grad(self, 0);
    if (!gx) return;
    for (Index h = 0; h < heads; ++h)
      for (Index t = 0; t < len; ++t)
        Eigen::Map<VectorX<Scalar>>(gx + (h * len + t) * d, d) += self.grad.segment(t * heads * d + h * d, d);
  });
}

/// Expands a per-head bias table [heads, buckets] into [heads, rows, cols]
/// using a row-major bucket index matrix of size rows * cols.
template <typename Scalar>
Tensor<Scalar> gather_bias(const Tensor<Scalar>& table, std::span<const int> buckets, Index rows, Index cols) {
  if (table.dim() != 2 || static_cast<Index>(buckets.size()) != rows * cols) {
    throw DimensionError("gather_bias: table " + shape_string(table.shape()) + " with " +
                         std::to_string(buckets.size()) + " indices for a " + std::to_string(rows) + "x" +
                         std::to_string(cols) + " grid");
  }
  const Index heads = table.size(0), nb = table.size(1);
  std::vector<int> idx(buckets.begin(), buckets.end());
  for (int b : idx) {
    if (b < 0 || b >= nb) throw IndexError("gather_bias: bucket " + std::to_string(b) + " out of range");
  }
  const Index cells = rows * cols;
  VectorX<Scalar> out(heads * cells);
  for (Index h = 0; h < heads; ++h)
    for (Index c = 0; c < cells; ++c) out[h * cells + c] = table.values()[h * nb + idx[static_cast<std::size_t>(c)]];
  return Tensor<Scalar>::make_result(Shape{heads, rows, cols}, std::move(out), {table},
      [idx = std::move(idx), heads, nb, cells](detail::Node<Scalar>& self) {
        Scalar* gt = detail::parent_grad(self, 0);
        if (!gt) return;
        for (Index h = 0; h < heads; ++h)
          for (Index c = 0; c < cells; ++c) gt[h * nb + idx[static_cast<std::size_t>(c)]] += self.grad[h * cells + c];
      });
}

/// Stacks 2-D tensors with equal column counts along rows.
template <typename Scalar>
Tensor<Scalar> concat_rows(const std::vector<Tensor<Scalar>>& parts) {
  if (parts.empty()) throw ParameterError("concat_rows: no inputs");
  const Index cols = parts.front().size(1);
  Index rows = 0;
  std::vector<Index> offsets;
  for (const auto& p : parts) {
    if (p.dim() != 2 || p.size(1) != cols) {
      throw DimensionError("concat_rows: " + shape_string(p.shape()) + " does not have " + std::to_string(cols) +
                           " columns");
    }
    offsets.push_back(rows * cols);
    rows += p.size(0);
  }
  VectorX<Scalar> out(rows * cols);
  for (std::size_t i = 0; i < parts.size(); ++i) out.segment(offsets[i], parts[i].numel()) = parts[i].values();
  return Tensor<Scalar>::make_result(Shape{rows, cols}, std::move(out), parts, [offsets = std::move(offsets)](detail::Node<Scalar>& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      auto& p = *self.parents[i];
      p.accumulate(self.grad.segment(offsets[i], p.value.size()));
    }
  });
}

}  // namespace t2t
