#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <span>
#include <vector>

#include "slw/errors.hpp"
#include "slw/tensor/graph.hpp"
#include "slw/tensor/kernels.hpp"

// Differentiable operations over Graph nodes. Every op returns a new Var and
// registers the rule that maps the output gradient back onto its inputs.

namespace slw {

namespace detail {

template <typename Scalar>
void require_same_shape(const char* op, const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shapes differ, " + shape_string(a.value()) + " vs " +
                         shape_string(b.value()));
  }
}

}  // namespace detail

/// a [m x k] * b [k x n].
template <typename Scalar>
Var<Scalar> matmul(Var<Scalar> a, Var<Scalar> b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_string(a.value()) + " x " +
                         shape_string(b.value()));
  }
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return a.graph().record(kernels::product(a.value(), b.value()), {a, b},
                          [ia, ib](Graph<Scalar>& g, std::size_t self) {
                            const auto& dc = g.grad(self);
                            if (g.wants_grad(ia)) {
                              g.accumulate(ia, kernels::fast_product(dc, g.value(ib).transpose()));
                            }
                            if (g.wants_grad(ib)) {
                              g.accumulate(ib, kernels::fast_product(g.value(ia).transpose(), dc));
                            }
                          });
}

template <typename Scalar>
Var<Scalar> add(Var<Scalar> a, Var<Scalar> b) {
  detail::require_same_shape("add", a, b);
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return a.graph().record(a.value() + b.value(), {a, b}, [ia, ib](Graph<Scalar>& g, std::size_t self) {
    g.accumulate(ia, g.grad(self));
    g.accumulate(ib, g.grad(self));
  });
}

/// x [m x n] + bias [1 x n] broadcast over rows.
template <typename Scalar>
Var<Scalar> add_bias(Var<Scalar> x, Var<Scalar> bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols()) {
    throw DimensionError("add_bias: bias " + shape_string(bias.value()) + " does not match " +
                         shape_string(x.value()));
  }
  MatrixX<Scalar> out = x.value();
  out.rowwise() += bias.value().row(0);
  const std::size_t ix = x.id();
  const std::size_t ib = bias.id();
  return x.graph().record(std::move(out), {x, bias}, [ix, ib](Graph<Scalar>& g, std::size_t self) {
    g.accumulate(ix, g.grad(self));
    if (g.wants_grad(ib)) g.accumulate(ib, kernels::column_sums(g.grad(self)));
  });
}

template <typename Scalar>
Var<Scalar> scale(Var<Scalar> x, Scalar factor) {
  const std::size_t ix = x.id();
  return x.graph().record(x.value() * factor, {x}, [ix, factor](Graph<Scalar>& g, std::size_t self) {
    g.accumulate(ix, g.grad(self) * factor);
  });
}

/// Elementwise product.
template <typename Scalar>
Var<Scalar> mul(Var<Scalar> a, Var<Scalar> b) {
  detail::require_same_shape("mul", a, b);
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return a.graph().record(a.value().cwiseProduct(b.value()), {a, b},
                          [ia, ib](Graph<Scalar>& g, std::size_t self) {
                            const auto& d = g.grad(self);
                            if (g.wants_grad(ia)) g.accumulate(ia, d.cwiseProduct(g.value(ib)));
                            if (g.wants_grad(ib)) g.accumulate(ib, d.cwiseProduct(g.value(ia)));
                          });
}

/// Sum of all elements as a 1x1 node.
template <typename Scalar>
Var<Scalar> sum(Var<Scalar> x) {
  MatrixX<Scalar> out(1, 1);
  out(0, 0) = kernels::serial_sum(x.value());
  const std::size_t ix = x.id();
  return x.graph().record(std::move(out), {x}, [ix](Graph<Scalar>& g, std::size_t self) {
    const Scalar d = g.grad(self)(0, 0);
    const auto& v = g.value(ix);
    g.accumulate(ix, MatrixX<Scalar>::Constant(v.rows(), v.cols(), d));
  });
}

template <typename Scalar>
Var<Scalar> transpose(Var<Scalar> x) {
  const std::size_t ix = x.id();
  return x.graph().record(x.value().transpose(), {x}, [ix](Graph<Scalar>& g, std::size_t self) {
    g.accumulate(ix, g.grad(self).transpose());
  });
}

/// Row-major reinterpretation with the same element count.
template <typename Scalar>
Var<Scalar> reshape(Var<Scalar> x, Index rows, Index cols) {
  if (rows * cols != x.rows() * x.cols()) {
    throw DimensionError("reshape: cannot view " + shape_string(x.value()) + " as " +
                         shape_string(rows, cols));
  }
  MatrixX<Scalar> out = Eigen::Map<const MatrixX<Scalar>>(x.value().data(), rows, cols);
  const std::size_t ix = x.id();
  const Index r0 = x.rows();
  const Index c0 = x.cols();
  return x.graph().record(std::move(out), {x}, [ix, r0, c0](Graph<Scalar>& g, std::size_t self) {
    g.accumulate(ix, Eigen::Map<const MatrixX<Scalar>>(g.grad(self).data(), r0, c0));
  });
}

/// Softmax along `axis` (1: across each row, 0: down each column).
template <typename Scalar>
Var<Scalar> softmax(Var<Scalar> x, int axis = 1) {
  if (axis != 0 && axis != 1) throw IndexError("softmax: axis must be 0 or 1, got " + std::to_string(axis));
  MatrixX<Scalar> out = axis == 1 ? MatrixX<Scalar>(x.value()) : MatrixX<Scalar>(x.value().transpose());
  for (Index r = 0; r < out.rows(); ++r) kernels::softmax_prefix(out.data() + r * out.cols(), out.cols());
  if (axis == 0) out.transposeInPlace();
  const std::size_t ix = x.id();
  return x.graph().record(std::move(out), {x}, [ix, axis](Graph<Scalar>& g, std::size_t self) {
    MatrixX<Scalar> y = axis == 1 ? g.value(self) : MatrixX<Scalar>(g.value(self).transpose());
    MatrixX<Scalar> dy = axis == 1 ? g.grad(self) : MatrixX<Scalar>(g.grad(self).transpose());
    MatrixX<Scalar> dx(y.rows(), y.cols());
    for (Index r = 0; r < y.rows(); ++r) {
      Scalar dot = 0;
      for (Index c = 0; c < y.cols(); ++c) dot += dy(r, c) * y(r, c);
      for (Index c = 0; c < y.cols(); ++c) dx(r, c) = y(r, c) * (dy(r, c) - dot);
    }
    if (axis == 0) dx.transposeInPlace();
    g.accumulate(ix, dx);
  });
}

/// Normalises each row to zero mean and unit (biased) variance, then applies gain and bias.
template <typename Scalar>
Var<Scalar> layer_norm(Var<Scalar> x, Var<Scalar> gain, Var<Scalar> bias, Scalar eps = Scalar(1e-5)) {
  const Index n = x.cols();
  if (gain.rows() != 1 || gain.cols() != n || bias.rows() != 1 || bias.cols() != n) {
    throw DimensionError("layer_norm: gain " + shape_string(gain.value()) + " / bias " +
                         shape_string(bias.value()) + " must be [1x" + std::to_string(n) + "]");
  }
  const auto& xv = x.value();
  auto xhat = std::make_shared<MatrixX<Scalar>>(xv.rows(), n);
  auto inv_std = std::make_shared<VectorX<Scalar>>(xv.rows());
  MatrixX<Scalar> out(xv.rows(), n);
  const auto& gv = gain.value();
  const auto& bv = bias.value();
  for (Index r = 0; r < xv.rows(); ++r) {
    Scalar mean = 0;
    for (Index c = 0; c < n; ++c) mean += xv(r, c);
    mean /= Scalar(n);
    Scalar var = 0;
    for (Index c = 0; c < n; ++c) {
      const Scalar d = xv(r, c) - mean;
      var += d * d;
    }
    var /= Scalar(n);
    const Scalar is = Scalar(1) / std::sqrt(var + eps);
    (*inv_std)(r) = is;
    for (Index c = 0; c < n; ++c) {
      const Scalar h = (xv(r, c) - mean) * is;
      (*xhat)(r, c) = h;
      out(r, c) = h * gv(0, c) + bv(0, c);
    }
  }
  const std::size_t ix = x.id();
  const std::size_t ig = gain.id();
  const std::size_t ib = bias.id();
  return x.graph().record(std::move(out), {x, gain, bias},
                          [ix, ig, ib, xhat, inv_std, n](Graph<Scalar>& g, std::size_t self) {
                            const auto& dy = g.grad(self);
                            const auto& gv = g.value(ig);
                            if (g.wants_grad(ix)) {
                              MatrixX<Scalar> dx(dy.rows(), n);
                              for (Index r = 0; r < dy.rows(); ++r) {
                                Scalar mean_d = 0;
                                Scalar mean_dh = 0;
                                for (Index c = 0; c < n; ++c) {
                                  const Scalar d = dy(r, c) * gv(0, c);
                                  mean_d += d;
                                  mean_dh += d * (*xhat)(r, c);
                                }
                                mean_d /= Scalar(n);
                                mean_dh /= Scalar(n);
                                for (Index c = 0; c < n; ++c) {
                                  const Scalar d = dy(r, c) * gv(0, c);
                                  dx(r, c) = (*inv_std)(r) * (d - mean_d - (*xhat)(r, c) * mean_dh);
                                }
                              }
                              g.accumulate(ix, dx);
                            }
                            if (g.wants_grad(ig)) {
                              MatrixX<Scalar> prod = dy.cwiseProduct(*xhat);
                              g.accumulate(ig, kernels::column_sums(prod));
                            }
                            if (g.wants_grad(ib)) g.accumulate(ib, kernels::column_sums(dy));
                          });
}

/// GELU, tanh approximation.
template <typename Scalar>
Var<Scalar> gelu(Var<Scalar> x) {
  const Scalar c = std::sqrt(Scalar(2) / std::numbers::pi_v<Scalar>);
  const Scalar k = Scalar(0.044715);
  const auto& xv = x.value();
  MatrixX<Scalar> out(xv.rows(), xv.cols());
  auto th = std::make_shared<MatrixX<Scalar>>(xv.rows(), xv.cols());
  for (Index i = 0; i < xv.size(); ++i) {
    const Scalar v = xv.data()[i];
    const Scalar t = std::tanh(c * (v + k * v * v * v));
    th->data()[i] = t;
    out.data()[i] = Scalar(0.5) * v * (Scalar(1) + t);
  }
  const std::size_t ix = x.id();
  return x.graph().record(std::move(out), {x}, [ix, th, c, k](Graph<Scalar>& g, std::size_t self) {
    const auto& xv = g.value(ix);
    const auto& dy = g.grad(self);
    MatrixX<Scalar> dx(xv.rows(), xv.cols());
    for (Index i = 0; i < xv.size(); ++i) {
      const Scalar v = xv.data()[i];
      const Scalar t = th->data()[i];
      const Scalar du = c * (Scalar(1) + Scalar(3) * k * v * v);
      dx.data()[i] = dy.data()[i] * (Scalar(0.5) * (Scalar(1) + t) + Scalar(0.5) * v * (Scalar(1) - t * t) * du);
    }
    g.accumulate(ix, dx);
  });
}

/// Gathers rows of `table` by index; the embedding lookup.
template <typename Scalar>
Var<Scalar> gather_rows(Var<Scalar> table, std::span<const std::int32_t> rows) {
  const auto& tv = table.value();
  MatrixX<Scalar> out(static_cast<Index>(rows.size()), tv.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= tv.rows()) {
      throw IndexError("gather_rows: index " + std::to_string(rows[i]) + " outside [0, " +
                       std::to_string(tv.rows()) + ")");
    }
    out.row(static_cast<Index>(i)) = tv.row(rows[i]);
  }
  const std::size_t it = table.id();
  auto idx = std::make_shared<std::vector<std::int32_t>>(rows.begin(), rows.end());
  return table.graph().record(std::move(out), {table}, [it, idx](Graph<Scalar>& g, std::size_t self) {
    const auto& d = g.grad(self);
    auto& dt = g.grad_buffer(it);
    for (std::size_t i = 0; i < idx->size(); ++i) dt.row((*idx)[i]) += d.row(static_cast<Index>(i));
  });
}

template <typename Scalar>
Var<Scalar> embedding(Var<Scalar> table, std::span<const std::int32_t> ids) {
  return gather_rows(table, ids);
}

/// Mean over rows of -log softmax(logits)[target]; a 1x1 node.
template <typename Scalar>
Var<Scalar> cross_entropy(Var<Scalar> logits, std::span<const std::int32_t> targets) {
  const auto& lv = logits.value();
  const Index n = lv.rows();
  const Index v = lv.cols();
  if (static_cast<Index>(targets.size()) != n) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(n) + " rows");
  }
  auto lse = std::make_shared<VectorX<Scalar>>(n);
  Scalar total = 0;
  for (Index r = 0; r < n; ++r) {
    const auto t = targets[static_cast<std::size_t>(r)];
    if (t < 0 || t >= v) {
      throw IndexError("cross_entropy: target " + std::to_string(t) + " outside [0, " + std::to_string(v) + ")");
    }
    (*lse)(r) = kernels::log_sum_exp(lv.data() + r * v, v);
    total += (*lse)(r) - lv(r, t);
  }
  MatrixX<Scalar> out(1, 1);
  out(0, 0) = total / Scalar(n);
  const std::size_t il = logits.id();
  auto tg = std::make_shared<std::vector<std::int32_t>>(targets.begin(), targets.end());
  return logits.graph().record(std::move(out), {logits}, [il, lse, tg](Graph<Scalar>& g, std::size_t self) {
    const auto& lv = g.value(il);
    const Scalar d = g.grad(self)(0, 0) / Scalar(lv.rows());
    MatrixX<Scalar> dl(lv.rows(), lv.cols());
    for (Index r = 0; r < lv.rows(); ++r) {
      for (Index c = 0; c < lv.cols(); ++c) dl(r, c) = std::exp(lv(r, c) - (*lse)(r)) * d;
      dl(r, (*tg)[static_cast<std::size_t>(r)]) -= d;
    }
    g.accumulate(il, dl);
  });
}

inline constexpr Index kAttentionRowBlock = 32;

/// Multi-head causal self-attention over packed projections.
///
/// `qkv` is [(batch*length) x 3H] with query, key and value blocks side by side;
/// row b*length + i holds position i of sequence b. Head h reads columns
/// [h*d, (h+1)*d) of each block, d = H / heads. Scores are scaled by 1/sqrt(d)
/// and position i attends to positions 0..i only. Output is [(batch*length) x H].
template <typename Scalar>
Var<Scalar> causal_self_attention(Var<Scalar> qkv, Index batch, Index length, Index heads) {
  const auto& in = qkv.value();
  if (in.rows() != batch * length || in.cols() % 3 != 0) {
    throw DimensionError("causal_self_attention: qkv " + shape_string(in) + " does not match batch " +
                         std::to_string(batch) + " x length " + std::to_string(length));
  }
  const Index hidden = in.cols() / 3;
  if (heads <= 0 || hidden % heads != 0) {
    throw DimensionError("causal_self_attention: hidden " + std::to_string(hidden) +
                         " not divisible by heads " + std::to_string(heads));
  }
  const Index d = hidden / heads;
  const Scalar inv_sqrt_d = Scalar(1) / std::sqrt(Scalar(d));
  auto probs = std::make_shared<std::vector<MatrixX<Scalar>>>();
  probs->reserve(static_cast<std::size_t>(batch * heads));
  MatrixX<Scalar> out(batch * length, hidden);
  for (Index b = 0; b < batch; ++b) {
    for (Index h = 0; h < heads; ++h) {
      const auto q = in.block(b * length, h * d, length, d);
      const auto k = in.block(b * length, hidden + h * d, length, d);
      const auto v = in.block(b * length, 2 * hidden + h * d, length, d);
      const MatrixX<Scalar> kt = k.transpose();
      MatrixX<Scalar> p = MatrixX<Scalar>::Zero(length, length);
      // Row block [i0, i1) only needs keys [0, i1); the skipped entries are masked anyway.
      for (Index i0 = 0; i0 < length; i0 += kAttentionRowBlock) {
        const Index i1 = std::min(length, i0 + kAttentionRowBlock);
        kernels::gemm(q.data() + i0 * in.cols(), in.cols(), kt.data(), kt.cols(), p.data() + i0 * length, length,
                      i1 - i0, d, i1);
      }
      for (Index i = 0; i < length; ++i) {
        Scalar* row = p.data() + i * length;
        for (Index j = 0; j <= i; ++j) row[j] *= inv_sqrt_d;
        kernels::softmax_prefix(row, i + 1);
        for (Index j = i + 1; j < length; ++j) row[j] = Scalar(0);
      }
      // Masked probabilities are exact zeros, so stopping the sum at i1 leaves every row unchanged.
      Scalar* o = out.data() + b * length * hidden + h * d;
      for (Index i0 = 0; i0 < length; i0 += kAttentionRowBlock) {
        const Index i1 = std::min(length, i0 + kAttentionRowBlock);
        kernels::gemm(p.data() + i0 * length, length, v.data(), in.cols(), o + i0 * hidden, hidden, i1 - i0, i1, d);
      }
      probs->push_back(std::move(p));
    }
  }
  const std::size_t iq = qkv.id();
  return qkv.graph().record(
      std::move(out), {qkv},
      [iq, probs, batch, length, heads, hidden, d, inv_sqrt_d](Graph<Scalar>& g, std::size_t self) {
        const auto& in = g.value(iq);
        const auto& dout = g.grad(self);
        auto& dqkv = g.grad_buffer(iq);
        for (Index b = 0; b < batch; ++b) {
          for (Index h = 0; h < heads; ++h) {
            const auto& p = (*probs)[static_cast<std::size_t>(b * heads + h)];
            const auto q = in.block(b * length, h * d, length, d);
            const auto k = in.block(b * length, hidden + h * d, length, d);
            const auto v = in.block(b * length, 2 * hidden + h * d, length, d);
            const auto dO = dout.block(b * length, h * d, length, d);
            MatrixX<Scalar> dp = kernels::fast_product(dO, v.transpose());
            const MatrixX<Scalar> dv = kernels::fast_product(p.transpose(), dO);
            for (Index i = 0; i < length; ++i) {
              Scalar dot = 0;
              for (Index j = 0; j <= i; ++j) dot += p(i, j) * dp(i, j);
              for (Index j = 0; j <= i; ++j) dp(i, j) = p(i, j) * (dp(i, j) - dot) * inv_sqrt_d;
              for (Index j = i + 1; j < length; ++j) dp(i, j) = Scalar(0);
            }
            dqkv.block(b * length, h * d, length, d) += kernels::fast_product(dp, k);
            dqkv.block(b * length, hidden + h * d, length, d) += kernels::fast_product(dp.transpose(), q);
            dqkv.block(b * length, 2 * hidden + h * d, length, d) += dv;
          }
        }
      });
}

}  // namespace slw
