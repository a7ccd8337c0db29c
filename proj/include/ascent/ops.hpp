#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "ascent/tensor.hpp"

namespace ascent {
namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

inline void accum_grad(const std::shared_ptr<TensorNode>& parent, std::size_t idx, double v) {
  if (parent->requires_grad) {
    parent->ensure_grad();
    parent->grad[idx] += v;
  }
}

// Broadcasting over leading axes: the smaller operand's shape (after stripping
// leading 1-sized dims) must be a suffix of the larger one's.
inline bool suffix_broadcastable(const Shape& big, const Shape& small) {
  std::size_t skip = 0;
  while (skip < small.size() && small[skip] == 1) ++skip;
  std::size_t eff = small.size() - skip;
  if (eff > big.size()) return false;
  for (std::size_t i = 0; i < eff; ++i) {
    if (small[skip + i] != big[big.size() - eff + i]) return false;
  }
  return true;
}

template <typename Fwd, typename Bwd>
Tensor broadcast_binary(const Tensor& a, const Tensor& b, Fwd fwd, Bwd bwd, const char* name) {
  const bool a_big = a.size() >= b.size();
  const Tensor& big = a_big ? a : b;
  const Tensor& small = a_big ? b : a;
  if (!suffix_broadcastable(big.shape(), small.shape())) {
    throw DimensionError(std::string(name) + ": incompatible shapes " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
  }
  const std::size_t n = big.size();
  const std::size_t m = small.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double av = a_big ? a[i] : a[i % m];
    double bv = a_big ? b[i % m] : b[i];
    out[i] = fwd(av, bv);
  }
  return make_op(big.shape(), std::move(out), {a, b}, [a_big, m, bwd](TensorNode& node) {
    auto& pa = node.parents[0];
    auto& pb = node.parents[1];
    const std::size_t n = node.data.size();
    for (std::size_t i = 0; i < n; ++i) {
      double g = node.grad[i];
      std::size_t ia = a_big ? i : i % m;
      std::size_t ib = a_big ? i % m : i;
      double av = pa->data[ia];
      double bv = pb->data[ib];
      auto [da, db] = bwd(av, bv, g);
      accum_grad(pa, ia, da);
      accum_grad(pb, ib, db);
    }
  });
}

template <typename Fwd, typename Bwd>
Tensor unary(const Tensor& x, Fwd fwd, Bwd bwd) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i]);
  return make_op(x.shape(), std::move(out), {x}, [fwd, bwd](TensorNode& node) {
    auto& p = node.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t i = 0; i < node.data.size(); ++i) {
      p->grad[i] += bwd(p->data[i], node.data[i]) * node.grad[i];
    }
  });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise suite
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::broadcast_binary(
      a, b, [](double x, double y) { return x + y; },
      [](double, double, double g) { return std::pair<double, double>{g, g}; }, "add");
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::broadcast_binary(
      a, b, [](double x, double y) { return x - y; },
      [](double, double, double g) { return std::pair<double, double>{g, -g}; }, "sub");
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::broadcast_binary(
      a, b, [](double x, double y) { return x * y; },
      [](double x, double y, double g) { return std::pair<double, double>{g * y, g * x}; }, "mul");
}

inline Tensor div(const Tensor& a, const Tensor& b) {
  return detail::broadcast_binary(
      a, b, [](double x, double y) { return x / y; },
      [](double x, double y, double g) {
        return std::pair<double, double>{g / y, -g * x / (y * y)};
      },
      "div");
}

inline Tensor scale(const Tensor& x, double c) {
  return detail::unary(
      x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

inline Tensor add_scalar(const Tensor& x, double c) {
  return detail::unary(
      x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

inline Tensor relu(const Tensor& x) {
  return detail::unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

inline Tensor sin_op(const Tensor& x) {
  return detail::unary(
      x, [](double v) { return std::sin(v); }, [](double v, double) { return std::cos(v); });
}

inline Tensor cos_op(const Tensor& x) {
  return detail::unary(
      x, [](double v) { return std::cos(v); }, [](double v, double) { return -std::sin(v); });
}

inline Tensor sqrt_op(const Tensor& x) {
  return detail::unary(
      x, [](double v) { return std::sqrt(v); },
      [](double, double y) { return 0.5 / y; });
}

// log(1 + exp(x)), overflow-safe; used for the non-negative speed head.
inline Tensor softplus(const Tensor& x) {
  return detail::unary(
      x,
      [](double v) { return v > 30.0 ? v : std::log1p(std::exp(v)); },
      [](double v, double) { return 1.0 / (1.0 + std::exp(-v)); });
}

// ---------------------------------------------------------------------------
// Matrix / shape ops
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), n = a.dim(1), p = b.dim(1);
  std::vector<double> out(m * p);
  {
    detail::ConstMatMap ma(a.data().data(), m, n);
    detail::ConstMatMap mb(b.data().data(), n, p);
    detail::MatMap mo(out.data(), m, p);
    mo.noalias() = ma * mb;
  }
  return detail::make_op({m, p}, std::move(out), {a, b}, [m, n, p](TensorNode& node) {
    auto& pa = node.parents[0];
    auto& pb = node.parents[1];
    detail::ConstMatMap g(node.grad.data(), m, p);
    detail::ConstMatMap ma(pa->data.data(), m, n);
    detail::ConstMatMap mb(pb->data.data(), n, p);
    if (pa->requires_grad) {
      pa->ensure_grad();
      detail::MatMap ga(pa->grad.data(), m, n);
      ga.noalias() += g * mb.transpose();
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      detail::MatMap gb(pb->grad.data(), n, p);
      gb.noalias() += ma.transpose() * g;
    }
  });
}

inline Tensor transpose(const Tensor& x) {
  if (x.ndim() != 2) throw DimensionError("transpose: expected 2-D tensor, got " + shape_str(x.shape()));
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x[i * n + j];
  return detail::make_op({n, m}, std::move(out), {x}, [m, n](TensorNode& node) {
    auto& p = node.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) p->grad[i * n + j] += node.grad[j * m + i];
  });
}

inline Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out = x.data();
  return detail::make_op(std::move(shape), std::move(out), {x}, [](TensorNode& node) {
    auto& p = node.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t i = 0; i < node.data.size(); ++i) p->grad[i] += node.grad[i];
  });
}

inline Tensor slice_cols(const Tensor& x, std::size_t c0, std::size_t width) {
  if (x.ndim() != 2 || c0 + width > x.dim(1)) {
    throw DimensionError("slice_cols: invalid slice [" + std::to_string(c0) + ", " +
                         std::to_string(c0 + width) + ") of " + shape_str(x.shape()));
  }
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<double> out(m * width);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < width; ++j) out[i * width + j] = x[i * n + c0 + j];
  return detail::make_op({m, width}, std::move(out), {x}, [m, n, c0, width](TensorNode& node) {
    auto& p = node.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < width; ++j)
        p->grad[i * n + c0 + j] += node.grad[i * width + j];
  });
}

inline Tensor slice_rows(const Tensor& x, std::size_t r0, std::size_t height) {
  if (x.ndim() != 2 || r0 + height > x.dim(0)) {
    throw DimensionError("slice_rows: invalid slice [" + std::to_string(r0) + ", " +
                         std::to_string(r0 + height) + ") of " + shape_str(x.shape()));
  }
  const std::size_t n = x.dim(1);
  std::vector<double> out(x.data().begin() + r0 * n, x.data().begin() + (r0 + height) * n);
  return detail::make_op({height, n}, std::move(out), {x}, [r0, n](TensorNode& node) {
    auto& p = node.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t i = 0; i < node.data.size(); ++i) p->grad[r0 * n + i] += node.grad[i];
  });
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: empty input");
  const std::size_t m = parts[0].dim(0);
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.ndim() != 2 || p.dim(0) != m) {
      throw DimensionError("concat_cols: row mismatch, " + shape_str(parts[0].shape()) + " vs " +
                           shape_str(p.shape()));
    }
    total += p.dim(1);
  }
  std::vector<double> out(m * total);
  std::size_t col = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    const std::size_t w = p.dim(1);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) out[i * total + col + j] = p[i * w + j];
    widths.push_back(w);
    col += w;
  }
  return detail::make_op({m, total}, std::move(out), parts, [m, total, widths](TensorNode& node) {
    std::size_t col = 0;
    for (std::size_t k = 0; k < node.parents.size(); ++k) {
      auto& p = node.parents[k];
      const std::size_t w = widths[k];
      if (p->requires_grad) {
        p->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < w; ++j)
            p->grad[i * w + j] += node.grad[i * total + col + j];
      }
      col += w;
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions and normalizations
// ---------------------------------------------------------------------------

inline Tensor reduce_sum(const Tensor& x) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i];
  return detail::make_op({1}, {s}, {x}, [](TensorNode& node) {
    auto& p = node.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (auto& g : p->grad) g += node.grad[0];
  });
}

inline Tensor reduce_mean(const Tensor& x) { return scale(reduce_sum(x), 1.0 / double(x.size())); }

// Softmax along `axis` of a 1-D or 2-D tensor, stabilized by max subtraction.
inline Tensor softmax(const Tensor& x, std::size_t axis = 0) {
  if (axis >= std::max<std::size_t>(x.ndim(), 1)) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for " +
                         shape_str(x.shape()));
  }
  if (x.ndim() > 2) throw DimensionError("softmax: only 1-D/2-D tensors supported");
  // View as [rows x n] with softmax over n (transpose logic for axis 0 of 2-D).
  const bool along_cols = (x.ndim() == 2 && axis == 0);
  const bool is_2d = x.ndim() == 2;
  const std::size_t rows = is_2d ? (along_cols ? x.dim(1) : x.dim(0)) : 1;
  const std::size_t n = is_2d ? (along_cols ? x.dim(0) : x.dim(1)) : x.size();
  auto at = [along_cols, is_2d, rows, n](std::size_t r, std::size_t i) -> std::size_t {
    if (!is_2d) return i;
    return along_cols ? i * rows + r : r * n + i;
  };
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = x[at(r, 0)];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, x[at(r, i)]);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double e = std::exp(x[at(r, i)] - mx);
      out[at(r, i)] = e;
      sum += e;
    }
    for (std::size_t i = 0; i < n; ++i) out[at(r, i)] /= sum;
  }
  return detail::make_op(x.shape(), std::move(out), {x}, [rows, n, at](TensorNode& node) {
    auto& p = node.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += node.grad[at(r, i)] * node.data[at(r, i)];
      for (std::size_t i = 0; i < n; ++i) {
        p->grad[at(r, i)] += node.data[at(r, i)] * (node.grad[at(r, i)] - dot);
      }
    }
  });
}

// Per-row normalization over the last axis followed by the affine transform
// gain * x_hat + bias. Variance is the biased estimate; epsilon = 1e-5.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                         double eps = 1e-5) {
  const std::size_t n = x.shape().back();
  if (gain.size() != n || bias.size() != n) {
    throw DimensionError("layer_norm: gain/bias length must match last axis of " +
                         shape_str(x.shape()));
  }
  const std::size_t rows = x.size() / n;
  std::vector<double> out(x.size());
  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data().data() + r * n;
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += xr[i];
    mean /= double(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (xr[i] - mean) * (xr[i] - mean);
    var /= double(n);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t i = 0; i < n; ++i) {
      xhat[r * n + i] = (xr[i] - mean) * is;
      out[r * n + i] = gain[i] * xhat[r * n + i] + bias[i];
    }
  }
  return detail::make_op(
      x.shape(), std::move(out), {x, gain, bias},
      [n, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](TensorNode& node) {
        auto& px = node.parents[0];
        auto& pg = node.parents[1];
        auto& pb = node.parents[2];
        for (std::size_t r = 0; r < rows; ++r) {
          const double* g = node.grad.data() + r * n;
          const double* xh = xhat.data() + r * n;
          if (pg->requires_grad) {
            pg->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) pg->grad[i] += g[i] * xh[i];
          }
          if (pb->requires_grad) {
            pb->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) pb->grad[i] += g[i];
          }
          if (px->requires_grad) {
            px->ensure_grad();
            double mean_gy = 0.0, mean_gyx = 0.0;
            std::vector<double> gy(n);
            for (std::size_t i = 0; i < n; ++i) {
              gy[i] = g[i] * pg->data[i];
              mean_gy += gy[i];
              mean_gyx += gy[i] * xh[i];
            }
            mean_gy /= double(n);
            mean_gyx /= double(n);
            for (std::size_t i = 0; i < n; ++i) {
              px->grad[r * n + i] += (gy[i] - mean_gy - xh[i] * mean_gyx) * inv_std[r];
            }
          }
        }
      });
}

// Multi-head scaled dot-product attention over already-projected q/k/v of
// shape [T x D]. Heads are column slices; outputs are concatenated back to
// [T x D]. The output projection is a separate linear layer in the model.
inline Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t n_heads) {
  if (q.ndim() != 2 || k.shape() != q.shape() || v.shape() != q.shape()) {
    throw DimensionError("attention: q/k/v must share shape [TxD], got " + shape_str(q.shape()) +
                         ", " + shape_str(k.shape()) + ", " + shape_str(v.shape()));
  }
  const std::size_t d = q.dim(1);
  if (n_heads == 0 || d % n_heads != 0) {
    throw ConfigError("attention: feature dim " + std::to_string(d) +
                      " not divisible by n_heads = " + std::to_string(n_heads));
  }
  const std::size_t dh = d / n_heads;
  std::vector<Tensor> heads;
  heads.reserve(n_heads);
  for (std::size_t h = 0; h < n_heads; ++h) {
    Tensor qh = slice_cols(q, h * dh, dh);
    Tensor kh = slice_cols(k, h * dh, dh);
    Tensor vh = slice_cols(v, h * dh, dh);
    Tensor scores = scale(matmul(qh, transpose(kh)), 1.0 / std::sqrt(double(dh)));
    heads.push_back(matmul(softmax(scores, 1), vh));
  }
  return n_heads == 1 ? heads[0] : concat_cols(heads);
}

// Per-feature max over the time axis of a [T x D] tensor. Backward routes
// each feature's gradient to the argmax row only (first occurrence on ties).
inline Tensor max_pool_time(const Tensor& x) {
  if (x.ndim() != 2) throw DimensionError("max_pool_time: expected [TxD], got " + shape_str(x.shape()));
  const std::size_t t = x.dim(0), d = x.dim(1);
  if (t == 0) throw DimensionError("max_pool_time: empty time axis");
  std::vector<double> out(d);
  std::vector<std::size_t> arg(d, 0);
  for (std::size_t j = 0; j < d; ++j) {
    out[j] = x[j];
    for (std::size_t i = 1; i < t; ++i) {
      if (x[i * d + j] > out[j]) {
        out[j] = x[i * d + j];
        arg[j] = i;
      }
    }
  }
  return detail::make_op({d}, std::move(out), {x}, [d, arg = std::move(arg)](TensorNode& node) {
    auto& p = node.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t j = 0; j < d; ++j) p->grad[arg[j] * d + j] += node.grad[j];
  });
}

// Cumulative sum along axis 0 of a 1-D or 2-D tensor.
inline Tensor cumsum0(const Tensor& x) {
  if (x.ndim() == 0 || x.ndim() > 2) {
    throw DimensionError("cumsum0: expected 1-D or 2-D tensor, got " + shape_str(x.shape()));
  }
  const std::size_t t = x.dim(0);
  const std::size_t w = x.ndim() == 2 ? x.dim(1) : 1;
  std::vector<double> out(x.size());
  for (std::size_t j = 0; j < w; ++j) {
    double run = 0.0;
    for (std::size_t i = 0; i < t; ++i) {
      run += x[i * w + j];
      out[i * w + j] = run;
    }
  }
  return detail::make_op(x.shape(), std::move(out), {x}, [t, w](TensorNode& node) {
    auto& p = node.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t j = 0; j < w; ++j) {
      double run = 0.0;
      for (std::size_t i = t; i-- > 0;) {
        run += node.grad[i * w + j];
        p->grad[i * w + j] += run;
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

// Mean over elements of the Huber-style smooth L1 on r = pred - target.
inline Tensor smooth_l1(const Tensor& pred, const Tensor& target, double beta) {
  if (pred.shape() != target.shape()) {
    throw DimensionError("smooth_l1: shape mismatch " + shape_str(pred.shape()) + " vs " +
                         shape_str(target.shape()));
  }
  if (beta <= 0.0) throw ConfigError("smooth_l1: beta must be positive");
  const std::size_t n = pred.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double r = pred[i] - target[i];
    double a = std::abs(r);
    total += a < beta ? 0.5 * r * r / beta : a - 0.5 * beta;
  }
  return detail::make_op({1}, {total / double(n)}, {pred, target}, [beta, n](TensorNode& node) {
    auto& pp = node.parents[0];
    auto& pt = node.parents[1];
    const double g = node.grad[0] / double(n);
    for (std::size_t i = 0; i < n; ++i) {
      double r = pp->data[i] - pt->data[i];
      double d = std::abs(r) < beta ? r / beta : (r > 0.0 ? 1.0 : -1.0);
      detail::accum_grad(pp, i, g * d);
      detail::accum_grad(pt, i, -g * d);
    }
  });
}

// -log softmax(logits)[target], computed via log-sum-exp.
inline Tensor cross_entropy(const Tensor& logits, std::size_t target_index) {
  const std::size_t k = logits.size();
  if (target_index >= k) {
    throw DimensionError("cross_entropy: target index " + std::to_string(target_index) +
                         " out of range for k = " + std::to_string(k));
  }
  double mx = logits[0];
  for (std::size_t i = 1; i < k; ++i) mx = std::max(mx, logits[i]);
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) sum += std::exp(logits[i] - mx);
  const double lse = mx + std::log(sum);
  return detail::make_op({1}, {lse - logits[target_index]}, {logits},
                         [k, target_index, mx, sum](TensorNode& node) {
                           auto& p = node.parents[0];
                           if (!p->requires_grad) return;
                           p->ensure_grad();
                           const double g = node.grad[0];
                           for (std::size_t i = 0; i < k; ++i) {
                             double sm = std::exp(p->data[i] - mx) / sum;
                             p->grad[i] += g * (sm - (i == target_index ? 1.0 : 0.0));
                           }
                         });
}

}  // namespace ascent
