#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mtmd/errors.hpp"
#include "mtmd/numerics/tape.hpp"
#include "mtmd/numerics/tensor.hpp"

namespace mtmd {

inline constexpr double kNormEps = 1e-12;
inline constexpr double kDefaultLeakySlope = 0.01;

namespace detail {

inline void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                         " differ");
}

inline void axpy(std::span<double> dst, std::span<const double> src, double s = 1.0) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += s * src[i];
}

}  // namespace detail

inline Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out = matmul_values(av, bv);
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  return a.tape().record(std::move(out), {a, b}, [a, b, m, k, n](Tape& t, const Tensor& g) {
    if (t.requires_grad(a)) kernels::gemm_nt_acc(g.data(), b.value().data(), t.grad(a).data(), m, n, k);
    if (t.requires_grad(b)) kernels::gemm_tn_acc(a.value().data(), g.data(), t.grad(b).data(), k, m, n);
  });
}

inline Var transpose(Var a) {
  const Tensor& av = a.value();
  av.require_rank(2);
  const std::size_t r = av.rows(), c = av.cols();
  Tensor out(Shape{c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(j, i) = av(i, j);
  return a.tape().record(std::move(out), {a}, [a, r, c](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad(a);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga(i, j) += g(j, i);
  });
}

inline Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return a.tape().record(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
    detail::axpy(t.grad(a).data(), g.data());
  });
}

inline Var add(Var a, Var b) {
  detail::require_same_shape("add", a.value(), b.value());
  Tensor out = a.value();
  detail::axpy(out.data(), b.value().data());
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (t.requires_grad(a)) detail::axpy(t.grad(a).data(), g.data());
    if (t.requires_grad(b)) detail::axpy(t.grad(b).data(), g.data());
  });
}

inline Var sub(Var a, Var b) {
  detail::require_same_shape("sub", a.value(), b.value());
  Tensor out = a.value();
  detail::axpy(out.data(), b.value().data(), -1.0);
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (t.requires_grad(a)) detail::axpy(t.grad(a).data(), g.data());
    if (t.requires_grad(b)) detail::axpy(t.grad(b).data(), g.data(), -1.0);
  });
}

/// Elementwise (Hadamard) product.
inline Var mul(Var a, Var b) {
  detail::require_same_shape("mul", a.value(), b.value());
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (t.requires_grad(a)) {
      Tensor& ga = t.grad(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b.value()[i];
    }
    if (t.requires_grad(b)) {
      Tensor& gb = t.grad(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a.value()[i];
    }
  });
}

inline Var scale(Var a, double c) {
  Tensor out = a.value();
  for (double& x : out.data()) x *= c;
  return a.tape().record(std::move(out), {a}, [a, c](Tape& t, const Tensor& g) {
    detail::axpy(t.grad(a).data(), g.data(), c);
  });
}

/// x[N×M] + b broadcast over rows; b has shape [M].
inline Var add_row_bias(Var x, Var b) {
  const Tensor& xv = x.value();
  xv.require_rank(2);
  if (b.value().rank() != 1 || b.value().size() != xv.cols())
    throw DimensionError("add_row_bias: bias " + shape_str(b.value().shape()) + " for input " +
                         shape_str(xv.shape()));
  Tensor out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r) detail::axpy(out.row(r), b.value().data());
  return x.tape().record(std::move(out), {x, b}, [x, b](Tape& t, const Tensor& g) {
    if (t.requires_grad(x)) detail::axpy(t.grad(x).data(), g.data());
    if (t.requires_grad(b)) {
      Tensor& gb = t.grad(b);
      for (std::size_t r = 0; r < g.rows(); ++r) detail::axpy(gb.data(), g.row(r));
    }
  });
}

/// x·W + b with W stored [in×out].
inline Var linear(Var x, Var w, Var b) { return add_row_bias(matmul(x, w), b); }

inline Var sum(Var a) {
  double s = 0.0;
  for (double x : a.value().data()) s += x;
  return a.tape().record(Tensor::scalar(s), {a}, [a](Tape& t, const Tensor& g) {
    const double gv = g.item();
    for (double& x : t.grad(a).data()) x += gv;
  });
}

inline Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

inline Var leaky_relu(Var x, double slope = kDefaultLeakySlope) {
  Tensor out = x.value();
  for (double& v : out.data())
    if (v < 0.0) v *= slope;
  return x.tape().record(std::move(out), {x}, [x, slope](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad(x);
    const Tensor& xv = x.value();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += xv[i] >= 0.0 ? g[i] : slope * g[i];
  });
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Var sigmoid(Var x) {
  Tensor out = x.value();
  for (double& v : out.data()) v = sigmoid(v);
  Tensor y = out;
  return x.tape().record(std::move(out), {x}, [x, y = std::move(y)](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

inline Var tanh(Var x) {
  Tensor out = x.value();
  for (double& v : out.data()) v = std::tanh(v);
  Tensor y = out;
  return x.tape().record(std::move(out), {x}, [x, y = std::move(y)](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

/// Fused gated recurrent update. `gi` and `gh` are the input and hidden
/// projections [N×3L] with gate blocks ordered (update z, reset r,
/// candidate n):
///   z = σ(gi_z + gh_z), r = σ(gi_r + gh_r), n = tanh(gi_n + r⊙gh_n)
///   h' = (1−z)⊙n + z⊙h
inline Var gru_update(Var gi, Var gh, Var h) {
  const Tensor& hv = h.value();
  hv.require_rank(2);
  const std::size_t rows = hv.rows(), width = hv.cols();
  const Shape gate_shape{rows, 3 * width};
  if (gi.value().shape() != gate_shape || gh.value().shape() != gate_shape)
    throw DimensionError("gru_update: gate projections " + shape_str(gi.value().shape()) + ", " +
                         shape_str(gh.value().shape()) + " do not match hidden " + shape_str(hv.shape()));
  Tensor z(Shape{rows, width}), r(Shape{rows, width}), n(Shape{rows, width}), out(Shape{rows, width});
  const Tensor& giv = gi.value();
  const Tensor& ghv = gh.value();
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < width; ++j) {
      const double zz = sigmoid(giv(i, j) + ghv(i, j));
      const double rr = sigmoid(giv(i, width + j) + ghv(i, width + j));
      const double nn = std::tanh(giv(i, 2 * width + j) + rr * ghv(i, 2 * width + j));
      z(i, j) = zz;
      r(i, j) = rr;
      n(i, j) = nn;
      out(i, j) = (1.0 - zz) * nn + zz * hv(i, j);
    }
  }
  return h.tape().record(
      std::move(out), {gi, gh, h},
      [gi, gh, h, rows, width, z = std::move(z), r = std::move(r), n = std::move(n)](Tape& t, const Tensor& g) {
        const bool need_gi = t.requires_grad(gi), need_gh = t.requires_grad(gh), need_h = t.requires_grad(h);
        const Tensor& hv = h.value();
        const Tensor& ghv = gh.value();
        Tensor* dgi = need_gi ? &t.grad(gi) : nullptr;
        Tensor* dgh = need_gh ? &t.grad(gh) : nullptr;
        Tensor* dh = need_h ? &t.grad(h) : nullptr;
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t j = 0; j < width; ++j) {
            const double gg = g(i, j), zz = z(i, j), rr = r(i, j), nn = n(i, j);
            const double da_n = gg * (1.0 - zz) * (1.0 - nn * nn);
            const double da_z = gg * (hv(i, j) - nn) * zz * (1.0 - zz);
            const double da_r = da_n * ghv(i, 2 * width + j) * rr * (1.0 - rr);
            if (dgi) {
              (*dgi)(i, j) += da_z;
              (*dgi)(i, width + j) += da_r;
              (*dgi)(i, 2 * width + j) += da_n;
            }
            if (dgh) {
              (*dgh)(i, j) += da_z;
              (*dgh)(i, width + j) += da_r;
              (*dgh)(i, 2 * width + j) += da_n * rr;
            }
            if (dh) (*dh)(i, j) += gg * zz;
          }
        }
      });
}

/// C[i,j] = cos(a_i, b_j) over the rows of a[N×L] and b[M×L], with both
/// norms clamped below by eps.
inline Var cosine_matrix(Var a, Var b, double eps = kNormEps) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  av.require_rank(2);
  bv.require_rank(2);
  if (av.cols() != bv.cols())
    throw DimensionError("cosine_matrix: widths " + shape_str(av.shape()) + " vs " + shape_str(bv.shape()));
  const std::size_t n = av.rows(), m = bv.rows(), width = av.cols();
  std::vector<double> raw_a(n), raw_b(m);
  for (std::size_t i = 0; i < n; ++i) raw_a[i] = kernels::norm(av.row(i));
  for (std::size_t j = 0; j < m; ++j) raw_b[j] = kernels::norm(bv.row(j));
  Tensor out(Shape{n, m});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j)
      out(i, j) = kernels::dot(av.row(i), bv.row(j)) / (std::max(raw_a[i], eps) * std::max(raw_b[j], eps));
  Tensor c = out;
  return a.tape().record(std::move(out), {a, b},
                         [a, b, n, m, width, eps, raw_a = std::move(raw_a), raw_b = std::move(raw_b),
                          c = std::move(c)](Tape& t, const Tensor& g) {
                           const Tensor& av = a.value();
                           const Tensor& bv = b.value();
                           const bool need_a = t.requires_grad(a), need_b = t.requires_grad(b);
                           Tensor* ga = need_a ? &t.grad(a) : nullptr;
                           Tensor* gb = need_b ? &t.grad(b) : nullptr;
                           for (std::size_t i = 0; i < n; ++i) {
                             const double na = std::max(raw_a[i], eps);
                             const bool a_live = raw_a[i] > eps;
                             for (std::size_t j = 0; j < m; ++j) {
                               const double gij = g(i, j);
                               if (gij == 0.0) continue;
                               const double nb = std::max(raw_b[j], eps);
                               const bool b_live = raw_b[j] > eps;
                               const double inv = gij / (na * nb);
                               const double cij = c(i, j);
                               for (std::size_t k = 0; k < width; ++k) {
                                 if (ga) {
                                   double d = inv * bv(j, k);
                                   if (a_live) d -= gij * cij * av(i, k) / (na * na);
                                   (*ga)(i, k) += d;
                                 }
                                 if (gb) {
                                   double d = inv * av(i, k);
                                   if (b_live) d -= gij * cij * bv(j, k) / (nb * nb);
                                   (*gb)(j, k) += d;
                                 }
                               }
                             }
                           }
                         });
}

namespace detail {

// Softmax over slices of a rank-2 tensor. axis 0 normalizes each column,
// axis 1 each row. `mask` (optional, same size) excludes entries, which get
// weight exactly 0.
inline Tensor softmax_values(const Tensor& x, std::size_t axis, const std::vector<std::uint8_t>* mask) {
  const std::size_t rows = x.rows(), cols = x.cols();
  const std::size_t slices = axis == 0 ? cols : rows;
  const std::size_t len = axis == 0 ? rows : cols;
  Tensor y(x.shape(), 0.0);
  auto idx = [&](std::size_t s, std::size_t e) { return axis == 0 ? e * cols + s : s * cols + e; };
  for (std::size_t s = 0; s < slices; ++s) {
    double mx = -INFINITY;
    for (std::size_t e = 0; e < len; ++e)
      if (!mask || (*mask)[idx(s, e)]) mx = std::max(mx, x[idx(s, e)]);
    if (mx == -INFINITY) throw ContractError("softmax over an empty masked slice");
    double z = 0.0;
    for (std::size_t e = 0; e < len; ++e) {
      if (mask && !(*mask)[idx(s, e)]) continue;
      const double v = std::exp(x[idx(s, e)] - mx);
      y[idx(s, e)] = v;
      z += v;
    }
    for (std::size_t e = 0; e < len; ++e) y[idx(s, e)] /= z;
  }
  return y;
}

inline Var softmax_impl(Var x, std::size_t axis, const std::vector<std::uint8_t>* mask) {
  Tensor y = softmax_values(x.value(), axis, mask);
  Tensor cached = y;
  const std::size_t rows = y.rows(), cols = y.cols();
  return x.tape().record(std::move(y), {x}, [x, axis, rows, cols, y = std::move(cached)](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad(x);
    const std::size_t slices = axis == 0 ? cols : rows;
    const std::size_t len = axis == 0 ? rows : cols;
    auto idx = [&](std::size_t s, std::size_t e) { return axis == 0 ? e * cols + s : s * cols + e; };
    for (std::size_t s = 0; s < slices; ++s) {
      double dotp = 0.0;
      for (std::size_t e = 0; e < len; ++e) dotp += g[idx(s, e)] * y[idx(s, e)];
      for (std::size_t e = 0; e < len; ++e) gx[idx(s, e)] += y[idx(s, e)] * (g[idx(s, e)] - dotp);
    }
  });
}

inline Tensor as_matrix(const Tensor& x) {
  if (x.rank() == 1) return x.reshaped(Shape{1, x.size()});
  x.require_rank(2);
  return x;
}

}  // namespace detail

/// Max-subtracted softmax. Rank-1 input normalizes the whole vector; rank-2
/// input normalizes along `axis` (0: per column, 1: per row).
inline Var softmax(Var x, std::size_t axis) {
  if (x.value().rank() == 1) {
    if (axis != 0) throw DimensionError("softmax axis out of range for rank-1 input");
    Var m = reshape(x, Shape{1, x.value().size()});
    return reshape(detail::softmax_impl(m, 1, nullptr), Shape{x.value().size()});
  }
  x.value().require_rank(2);
  if (axis > 1) throw DimensionError("softmax axis out of range for rank-2 input");
  return detail::softmax_impl(x, axis, nullptr);
}

/// Row softmax restricted to entries with mask != 0. Every row needs at
/// least one admitted entry.
inline Var masked_softmax_rows(Var x, const std::vector<std::uint8_t>& mask) {
  x.value().require_rank(2);
  if (mask.size() != x.value().size()) throw DimensionError("masked_softmax_rows: mask size mismatch");
  return detail::softmax_impl(x, 1, &mask);
}

inline Var l2_normalize_rows(Var x, double eps = kNormEps) {
  const Tensor& xv = x.value();
  xv.require_rank(2);
  const std::size_t rows = xv.rows();
  std::vector<double> raw(rows);
  for (std::size_t r = 0; r < rows; ++r) raw[r] = kernels::norm(xv.row(r));
  Tensor y = l2_normalize_rows_values(xv, eps);
  Tensor cached = y;
  return x.tape().record(std::move(y), {x},
                         [x, eps, raw = std::move(raw), y = std::move(cached)](Tape& t, const Tensor& g) {
                           Tensor& gx = t.grad(x);
                           for (std::size_t r = 0; r < raw.size(); ++r) {
                             const double n = std::max(raw[r], eps);
                             auto gr = g.row(r);
                             auto yr = y.row(r);
                             auto out = gx.row(r);
                             const double proj = raw[r] > eps ? kernels::dot(gr, yr) : 0.0;
                             for (std::size_t k = 0; k < out.size(); ++k) out[k] += (gr[k] - yr[k] * proj) / n;
                           }
                         });
}

/// Σ (p−y)² / N
inline Var mse_loss(Var pred, Var target) {
  if (pred.value().shape() != target.value().shape())
    throw DimensionError("mse_loss: prediction " + shape_str(pred.value().shape()) + " vs label " +
                         shape_str(target.value().shape()));
  Var d = sub(pred, target);
  return mean(mul(d, d));
}

}  // namespace mtmd
