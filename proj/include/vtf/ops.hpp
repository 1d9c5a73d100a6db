#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "vtf/tensor.hpp"

// Differentiable tensor operations. Broadcasting is limited to leading
// dimensions: a right operand whose shape is a suffix of the left operand's
// shape is repeated over the left operand's leading dims. matmul additionally
// broadcasts batch dims numpy-style. Anything else needs an explicit reshape.

namespace vtf {

namespace detail {

template <class T>
Tensor<T> finish(OpKind kind, Shape shape, std::vector<T> out, const std::vector<const Tensor<T>*>& inputs,
                 typename Tape<T>::BackwardFn backward) {
  Tape<T>* tape = nullptr;
  for (const auto* in : inputs) {
    if (!in->tracked()) continue;
    if (tape && tape != in->tape()) throw ContractError("inputs recorded on different tapes");
    tape = in->tape();
  }
  if (!tape) return Tensor<T>(std::move(shape), std::move(out));
  return tape->record(kind, std::move(shape), std::move(out), inputs, std::move(backward));
}

inline bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

// outer * len * inner decomposition around one axis.
struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

inline AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

inline std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> st(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) st[i - 1] = st[i] * shape[i];
  return st;
}

// out[j] = in[src_index(j)] where the output is `in` with axes a0 and a1 exchanged.
template <class T>
std::vector<T> swap_axes_copy(std::span<const T> in, const Shape& in_shape, std::size_t a0, std::size_t a1) {
  Shape out_shape = in_shape;
  std::swap(out_shape[a0], out_shape[a1]);
  auto in_st = strides_of(in_shape);
  std::swap(in_st[a0], in_st[a1]);
  std::vector<T> out(in.size());
  std::vector<std::size_t> idx(out_shape.size(), 0);
  std::size_t src = 0;
  for (std::size_t j = 0; j < out.size(); ++j) {
    out[j] = in[src];
    for (std::size_t d = out_shape.size(); d-- > 0;) {
      if (++idx[d] < out_shape[d]) {
        src += in_st[d];
        break;
      }
      src -= in_st[d] * (out_shape[d] - 1);
      idx[d] = 0;
    }
  }
  return out;
}

// C[m,n] += A[m,k] * B[k,n]
template <class T>
void gemm_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// dB[k,n] += A[m,k]^T * dC[m,n]
template <class T>
void gemm_tn_acc(const T* a, const T* dc, T* db, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* grow = dc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      T* brow = db + p * n;
      for (std::size_t j = 0; j < n; ++j) brow[j] += av * grow[j];
    }
  }
}

// dA[m,k] += dC[m,n] * B[k,n]^T, with bt = B^T laid out [n,k].
template <class T>
void gemm_nt_acc(const T* dc, const T* bt, T* da, std::size_t m, std::size_t k, std::size_t n) {
  gemm_acc(dc, bt, da, m, n, k);
}

template <class T>
Tensor<T> unary(const Tensor<T>& x, OpKind kind, T (*f)(T), T (*df)(T, T)) {
  std::vector<T> out(x.numel());
  const auto xs = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xs[i]);
  auto xv = x.detach();
  auto yv = std::make_shared<std::vector<T>>(out);
  return finish<T>(kind, x.shape(), std::move(out), {&x}, [xv, yv, df](std::span<const T> g, auto& gin) {
    if (gin[0].empty()) return;
    const auto xs = xv.data();
    for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i] * df(xs[i], (*yv)[i]);
  });
}

template <class T>
T sigmoid_value(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace detail

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() < 2 || b.rank() < 2 || a.dim(-1) != b.dim(-2)) {
    throw DimensionError("matmul: cannot multiply " + to_string(a.shape()) + " by " + to_string(b.shape()));
  }
  const std::size_t m = a.dim(-2), k = a.dim(-1), n = b.dim(-1);
  Shape abatch(a.shape().begin(), a.shape().end() - 2);
  Shape bbatch(b.shape().begin(), b.shape().end() - 2);
  const std::size_t rank = std::max(abatch.size(), bbatch.size());
  abatch.insert(abatch.begin(), rank - abatch.size(), 1);
  bbatch.insert(bbatch.begin(), rank - bbatch.size(), 1);
  Shape obatch(rank);
  for (std::size_t d = 0; d < rank; ++d) {
    if (abatch[d] != bbatch[d] && abatch[d] != 1 && bbatch[d] != 1) {
      throw DimensionError("matmul: batch dims of " + to_string(a.shape()) + " and " + to_string(b.shape()) +
                           " do not broadcast");
    }
    obatch[d] = std::max(abatch[d], bbatch[d]);
  }
  const std::size_t batches = numel(obatch);
  const auto ast = detail::strides_of(abatch), bst = detail::strides_of(bbatch), ost = detail::strides_of(obatch);
  auto offsets = std::make_shared<std::vector<std::pair<std::size_t, std::size_t>>>(batches);
  for (std::size_t bi = 0; bi < batches; ++bi) {
    std::size_t ao = 0, bo = 0;
    for (std::size_t d = 0; d < rank; ++d) {
      const std::size_t i = (bi / ost[d]) % obatch[d];
      if (abatch[d] != 1) ao += i * ast[d];
      if (bbatch[d] != 1) bo += i * bst[d];
    }
    (*offsets)[bi] = {ao * m * k, bo * k * n};
  }

  std::vector<T> out(batches * m * n, T(0));
  const T* ad = a.data().data();
  const T* bd = b.data().data();
  for (std::size_t bi = 0; bi < batches; ++bi) {
    detail::gemm_acc(ad + (*offsets)[bi].first, bd + (*offsets)[bi].second, out.data() + bi * m * n, m, k, n);
  }
  Shape oshape = obatch;
  oshape.push_back(m);
  oshape.push_back(n);
  auto av = a.detach(), bv = b.detach();
  return detail::finish<T>(OpKind::MatMul, oshape, std::move(out), {&a, &b},
                           [av, bv, offsets, m, k, n](std::span<const T> g, auto& gin) {
                             const T* ad = av.data().data();
                             const T* bd = bv.data().data();
                             if (!gin[0].empty()) {
                               // B^T per distinct b block
                               std::vector<T> bt(k * n);
                               std::size_t cached = static_cast<std::size_t>(-1);
                               for (std::size_t bi = 0; bi < offsets->size(); ++bi) {
                                 const auto [ao, bo] = (*offsets)[bi];
                                 if (bo != cached) {
                                   for (std::size_t p = 0; p < k; ++p)
                                     for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = bd[bo + p * n + j];
                                   cached = bo;
                                 }
                                 detail::gemm_nt_acc(g.data() + bi * m * n, bt.data(), gin[0].data() + ao, m, k, n);
                               }
                             }
                             if (!gin[1].empty()) {
                               for (std::size_t bi = 0; bi < offsets->size(); ++bi) {
                                 const auto [ao, bo] = (*offsets)[bi];
                                 detail::gemm_tn_acc(ad + ao, g.data() + bi * m * n, gin[1].data() + bo, m, k, n);
                               }
                             }
                           });
}

/// a + b, where b's shape equals a's or is a suffix of it (or vice versa).
template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (!detail::is_suffix(b.shape(), a.shape())) {
    if (detail::is_suffix(a.shape(), b.shape())) return add(b, a);
    throw DimensionError("add: shapes " + to_string(a.shape()) + " and " + to_string(b.shape()) + " do not broadcast");
  }
  const std::size_t inner = b.numel();
  std::vector<T> out(a.values());
  const auto bs = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bs[i % inner];
  return detail::finish<T>(OpKind::Add, a.shape(), std::move(out), {&a, &b}, [inner](std::span<const T> g, auto& gin) {
    if (!gin[0].empty())
      for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i];
    if (!gin[1].empty())
      for (std::size_t i = 0; i < g.size(); ++i) gin[1][i % inner] += g[i];
  });
}

/// a - b with the same broadcasting rule as add (b's shape a suffix of a's).
template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  if (!detail::is_suffix(b.shape(), a.shape())) {
    throw DimensionError("sub: shapes " + to_string(a.shape()) + " and " + to_string(b.shape()) + " do not broadcast");
  }
  const std::size_t inner = b.numel();
  std::vector<T> out(a.values());
  const auto bs = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bs[i % inner];
  return detail::finish<T>(OpKind::Sub, a.shape(), std::move(out), {&a, &b}, [inner](std::span<const T> g, auto& gin) {
    if (!gin[0].empty())
      for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i];
    if (!gin[1].empty())
      for (std::size_t i = 0; i < g.size(); ++i) gin[1][i % inner] -= g[i];
  });
}

/// Elementwise product, same broadcasting rule as add.
template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (!detail::is_suffix(b.shape(), a.shape())) {
    if (detail::is_suffix(a.shape(), b.shape())) return mul(b, a);
    throw DimensionError("mul: shapes " + to_string(a.shape()) + " and " + to_string(b.shape()) + " do not broadcast");
  }
  const std::size_t inner = b.numel();
  std::vector<T> out(a.values());
  const auto bs = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bs[i % inner];
  auto av = a.detach(), bv = b.detach();
  return detail::finish<T>(OpKind::Mul, a.shape(), std::move(out), {&a, &b},
                           [av, bv, inner](std::span<const T> g, auto& gin) {
                             const auto as = av.data();
                             const auto bs = bv.data();
                             if (!gin[0].empty())
                               for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i] * bs[i % inner];
                             if (!gin[1].empty())
                               for (std::size_t i = 0; i < g.size(); ++i) gin[1][i % inner] += g[i] * as[i];
                           });
}

template <class T>
Tensor<T> scale(const Tensor<T>& x, T s) {
  std::vector<T> out(x.values());
  for (auto& v : out) v *= s;
  return detail::finish<T>(OpKind::Scale, x.shape(), std::move(out), {&x}, [s](std::span<const T> g, auto& gin) {
    if (gin[0].empty()) return;
    for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += s * g[i];
  });
}

template <class T>
Tensor<T> swap_axes(const Tensor<T>& x, long axis0, long axis1) {
  const auto a0 = normalize_axis(axis0, x.rank());
  const auto a1 = normalize_axis(axis1, x.rank());
  Shape oshape = x.shape();
  std::swap(oshape[a0], oshape[a1]);
  auto out = detail::swap_axes_copy<T>(x.data(), x.shape(), a0, a1);
  return detail::finish<T>(OpKind::SwapAxes, oshape, std::move(out), {&x},
                           [oshape, a0, a1](std::span<const T> g, auto& gin) {
                             if (gin[0].empty()) return;
                             const auto back = detail::swap_axes_copy<T>(g, oshape, a0, a1);
                             for (std::size_t i = 0; i < back.size(); ++i) gin[0][i] += back[i];
                           });
}

/// Swaps the last two axes.
template <class T>
Tensor<T> transpose(const Tensor<T>& x) {
  if (x.rank() < 2) throw DimensionError("transpose needs rank >= 2, got " + to_string(x.shape()));
  return swap_axes(x, -2, -1);
}

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + to_string(x.shape()) + " cannot become " + to_string(shape));
  }
  return detail::finish<T>(OpKind::Reshape, std::move(shape), x.values(), {&x}, [](std::span<const T> g, auto& gin) {
    if (gin[0].empty()) return;
    for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i];
  });
}

/// Exact (erf) GELU.
template <class T>
Tensor<T> gelu(const Tensor<T>& x) {
  return detail::unary<T>(
      x, OpKind::Gelu, [](T v) { return T(0.5) * v * (T(1) + std::erf(v / std::numbers::sqrt2_v<T>)); },
      [](T v, T) {
        const T cdf = T(0.5) * (T(1) + std::erf(v / std::numbers::sqrt2_v<T>));
        const T pdf = std::exp(T(-0.5) * v * v) * std::numbers::inv_sqrtpi_v<T> / std::numbers::sqrt2_v<T>;
        return cdf + v * pdf;
      });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return detail::unary<T>(
      x, OpKind::Sigmoid, [](T v) { return detail::sigmoid_value(v); }, [](T, T y) { return y * (T(1) - y); });
}

/// log(1 + e^x), evaluated without overflow.
template <class T>
Tensor<T> softplus(const Tensor<T>& x) {
  return detail::unary<T>(
      x, OpKind::Softplus, [](T v) { return std::max(v, T(0)) + std::log1p(std::exp(-std::abs(v))); },
      [](T v, T) { return detail::sigmoid_value(v); });
}

template <class T>
Tensor<T> softmax(const Tensor<T>& x, long axis = -1) {
  const auto s = detail::split_at(x.shape(), normalize_axis(axis, x.rank()));
  std::vector<T> out(x.numel());
  const auto xs = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t j = 0; j < s.inner; ++j) {
      const std::size_t base = o * s.len * s.inner + j;
      T mx = xs[base];
      for (std::size_t i = 1; i < s.len; ++i) mx = std::max(mx, xs[base + i * s.inner]);
      T total = 0;
      for (std::size_t i = 0; i < s.len; ++i) {
        const T e = std::exp(xs[base + i * s.inner] - mx);
        out[base + i * s.inner] = e;
        total += e;
      }
      for (std::size_t i = 0; i < s.len; ++i) out[base + i * s.inner] /= total;
    }
  }
  auto yv = std::make_shared<std::vector<T>>(out);
  return detail::finish<T>(OpKind::Softmax, x.shape(), std::move(out), {&x}, [yv, s](std::span<const T> g, auto& gin) {
    if (gin[0].empty()) return;
    const auto& y = *yv;
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t j = 0; j < s.inner; ++j) {
        const std::size_t base = o * s.len * s.inner + j;
        T dot = 0;
        for (std::size_t i = 0; i < s.len; ++i) dot += g[base + i * s.inner] * y[base + i * s.inner];
        for (std::size_t i = 0; i < s.len; ++i) {
          const std::size_t at = base + i * s.inner;
          gin[0][at] += y[at] * (g[at] - dot);
        }
      }
    }
  });
}

/// Normalizes over the last axis with population variance, then applies gain and bias.
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps = T(1e-5)) {
  const std::size_t d = x.rank() ? x.dim(-1) : 0;
  if (d < 2 || gain.shape() != Shape{d} || bias.shape() != Shape{d}) {
    throw DimensionError("layer_norm: input " + to_string(x.shape()) + " with gain " + to_string(gain.shape()) +
                         " and bias " + to_string(bias.shape()));
  }
  if (!(eps > T(0))) throw ContractError("layer_norm: eps must be positive");
  const std::size_t rows = x.numel() / d;
  auto xhat = std::make_shared<std::vector<T>>(x.numel());
  auto inv_std = std::make_shared<std::vector<T>>(rows);
  std::vector<T> out(x.numel());
  const auto xs = x.data();
  const auto gs = gain.data();
  const auto bs = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xs.data() + r * d;
    T mean = 0;
    for (std::size_t i = 0; i < d; ++i) mean += row[i];
    mean /= T(d);
    T var = 0;
    for (std::size_t i = 0; i < d; ++i) var += (row[i] - mean) * (row[i] - mean);
    var /= T(d);
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t i = 0; i < d; ++i) {
      const T h = (row[i] - mean) * is;
      (*xhat)[r * d + i] = h;
      out[r * d + i] = h * gs[i] + bs[i];
    }
  }
  auto gv = gain.detach();
  return detail::finish<T>(
      OpKind::LayerNorm, x.shape(), std::move(out), {&x, &gain, &bias},
      [xhat, inv_std, gv, rows, d](std::span<const T> g, auto& gin) {
        const auto gs = gv.data();
        const auto& h = *xhat;
        for (std::size_t r = 0; r < rows; ++r) {
          const T* grow = g.data() + r * d;
          if (!gin[0].empty()) {
            T sum_gh = 0, sum_ghh = 0;
            for (std::size_t i = 0; i < d; ++i) {
              const T gh = grow[i] * gs[i];
              sum_gh += gh;
              sum_ghh += gh * h[r * d + i];
            }
            const T is = (*inv_std)[r];
            for (std::size_t i = 0; i < d; ++i) {
              const T gh = grow[i] * gs[i];
              gin[0][r * d + i] += is / T(d) * (T(d) * gh - sum_gh - h[r * d + i] * sum_ghh);
            }
          }
          if (!gin[1].empty())
            for (std::size_t i = 0; i < d; ++i) gin[1][i] += grow[i] * h[r * d + i];
          if (!gin[2].empty())
            for (std::size_t i = 0; i < d; ++i) gin[2][i] += grow[i];
        }
      });
}

namespace detail {
template <class T>
Tensor<T> reduce_axis(const Tensor<T>& x, long axis, bool average) {
  const auto ax = normalize_axis(axis, x.rank());
  const auto s = split_at(x.shape(), ax);
  Shape oshape = x.shape();
  oshape.erase(oshape.begin() + static_cast<long>(ax));
  std::vector<T> out(s.outer * s.inner, T(0));
  const auto xs = x.data();
  const T factor = average ? T(1) / T(s.len) : T(1);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.len; ++i) {
      const T* src = xs.data() + (o * s.len + i) * s.inner;
      T* dst = out.data() + o * s.inner;
      for (std::size_t j = 0; j < s.inner; ++j) dst[j] += src[j];
    }
  }
  if (average)
    for (auto& v : out) v *= factor;
  return finish<T>(average ? OpKind::MeanAxis : OpKind::SumAxis, oshape, std::move(out), {&x},
                   [s, factor](std::span<const T> g, auto& gin) {
                     if (gin[0].empty()) return;
                     for (std::size_t o = 0; o < s.outer; ++o)
                       for (std::size_t i = 0; i < s.len; ++i)
                         for (std::size_t j = 0; j < s.inner; ++j)
                           gin[0][(o * s.len + i) * s.inner + j] += factor * g[o * s.inner + j];
                   });
}
}  // namespace detail

/// Mean over one axis; the axis is removed from the shape. Sums run in index order.
template <class T>
Tensor<T> mean(const Tensor<T>& x, long axis) {
  return detail::reduce_axis(x, axis, true);
}

template <class T>
Tensor<T> sum(const Tensor<T>& x, long axis) {
  return detail::reduce_axis(x, axis, false);
}

/// Sum of every element, as a rank-0 tensor.
template <class T>
Tensor<T> sum_all(const Tensor<T>& x) {
  T total = 0;
  for (T v : x.data()) total += v;
  return detail::finish<T>(OpKind::SumAll, {}, {total}, {&x}, [](std::span<const T> g, auto& gin) {
    if (gin[0].empty()) return;
    for (auto& v : gin[0]) v += g[0];
  });
}

template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, long axis) {
  if (parts.empty()) throw ContractError("concat of zero tensors");
  const auto ax = normalize_axis(axis, parts[0].rank());
  Shape oshape = parts[0].shape();
  oshape[ax] = 0;
  for (const auto& p : parts) {
    Shape a = p.shape(), b = parts[0].shape();
    if (a.size() != b.size()) {
      throw DimensionError("concat: " + to_string(p.shape()) + " vs " + to_string(parts[0].shape()));
    }
    a[ax] = b[ax] = 0;
    if (a != b) throw DimensionError("concat: " + to_string(p.shape()) + " vs " + to_string(parts[0].shape()));
    oshape[ax] += p.dim(static_cast<long>(ax));
  }
  const auto s = detail::split_at(oshape, ax);
  std::vector<T> out(numel(oshape));
  std::vector<std::size_t> lens;
  std::size_t start = 0;
  for (const auto& p : parts) {
    const std::size_t len = p.dim(static_cast<long>(ax));
    const auto ps = p.data();
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy_n(ps.data() + o * len * s.inner, len * s.inner, out.data() + (o * s.len + start) * s.inner);
    }
    lens.push_back(len);
    start += len;
  }
  std::vector<const Tensor<T>*> inputs;
  for (const auto& p : parts) inputs.push_back(&p);
  return detail::finish<T>(OpKind::Concat, oshape, std::move(out), inputs, [s, lens](std::span<const T> g, auto& gin) {
    std::size_t start = 0;
    for (std::size_t k = 0; k < lens.size(); ++k) {
      const std::size_t len = lens[k];
      if (!gin[k].empty()) {
        for (std::size_t o = 0; o < s.outer; ++o)
          for (std::size_t i = 0; i < len * s.inner; ++i)
            gin[k][o * len * s.inner + i] += g[(o * s.len + start) * s.inner + i];
      }
      start += len;
    }
  });
}

/// Elements [begin, end) along `axis`.
template <class T>
Tensor<T> slice(const Tensor<T>& x, long axis, std::size_t begin, std::size_t end) {
  const auto ax = normalize_axis(axis, x.rank());
  if (begin >= end || end > x.shape()[ax]) {
    throw DimensionError("slice [" + std::to_string(begin) + "," + std::to_string(end) + ") of axis " +
                         std::to_string(ax) + " in " + to_string(x.shape()));
  }
  const auto s = detail::split_at(x.shape(), ax);
  const std::size_t len = end - begin;
  Shape oshape = x.shape();
  oshape[ax] = len;
  std::vector<T> out(numel(oshape));
  const auto xs = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(xs.data() + (o * s.len + begin) * s.inner, len * s.inner, out.data() + o * len * s.inner);
  }
  return detail::finish<T>(OpKind::Slice, oshape, std::move(out), {&x},
                           [s, begin, len](std::span<const T> g, auto& gin) {
                             if (gin[0].empty()) return;
                             for (std::size_t o = 0; o < s.outer; ++o)
                               for (std::size_t i = 0; i < len * s.inner; ++i)
                                 gin[0][(o * s.len + begin) * s.inner + i] += g[o * len * s.inner + i];
                           });
}

/// Row lookup: table [V, D], ids -> [ids.size(), D].
template <class T>
Tensor<T> gather_rows(const Tensor<T>& table, const std::vector<std::size_t>& ids) {
  if (table.rank() != 2) throw DimensionError("gather_rows: table must be 2-D, got " + to_string(table.shape()));
  if (ids.empty()) throw ContractError("gather_rows: no ids");
  const std::size_t rows = table.dim(0), d = table.dim(1);
  std::vector<T> out(ids.size() * d);
  const auto ts = table.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= rows) throw ContractError("gather_rows: id " + std::to_string(ids[i]) + " out of range");
    std::copy_n(ts.data() + ids[i] * d, d, out.data() + i * d);
  }
  return detail::finish<T>(OpKind::Gather, {ids.size(), d}, std::move(out), {&table},
                           [ids, d](std::span<const T> g, auto& gin) {
                             if (gin[0].empty()) return;
                             for (std::size_t i = 0; i < ids.size(); ++i)
                               for (std::size_t j = 0; j < d; ++j) gin[0][ids[i] * d + j] += g[i * d + j];
                           });
}

}  // namespace vtf
