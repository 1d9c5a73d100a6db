#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "vtf/ops.hpp"
#include "vtf/param.hpp"

namespace vtf::nn {

struct BlockConfig {
  std::size_t dim = 64;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;

  void validate() const {
    if (dim == 0 || heads == 0 || dim % heads != 0) {
      throw UsageError("token dim " + std::to_string(dim) + " must be a positive multiple of heads " +
                       std::to_string(heads));
    }
    if (mlp_ratio < 1) throw UsageError("mlp ratio must be at least 1");
  }
};

/// Post-softmax attention maps of every attention layer run, shape [..., heads, n, n].
template <class T>
struct AttentionTrace {
  std::vector<Tensor<T>> maps;
};

template <class T>
void add_linear(ParamStore<T>& store, Initializer<T>& init, const std::string& prefix, std::size_t in,
                std::size_t out, bool trainable, double weight_std) {
  store.add(prefix + ".weight", init.normal({in, out}, weight_std), trainable);
  store.add(prefix + ".bias", init.zeros({out}), trainable);
}

template <class T>
void add_layer_norm(ParamStore<T>& store, Initializer<T>& init, const std::string& prefix, std::size_t dim,
                    bool trainable) {
  store.add(prefix + ".gain", init.ones({dim}), trainable);
  store.add(prefix + ".bias", init.zeros({dim}), trainable);
}

/// x[..., in] -> x W + b, W stored [in, out].
template <class T>
Tensor<T> linear(Binder<T>& p, const std::string& prefix, const Tensor<T>& x) {
  return add(matmul(x, p(prefix + ".weight")), p(prefix + ".bias"));
}

template <class T>
Tensor<T> norm(Binder<T>& p, const std::string& prefix, const Tensor<T>& x) {
  return layer_norm(x, p(prefix + ".gain"), p(prefix + ".bias"), T(1e-5));
}

/// Registers one pre-norm transformer block. Q/K/V and the first MLP layer use
/// 1/sqrt(fan_in) weights; the two output projections use `out_std`.
template <class T>
void add_block(ParamStore<T>& store, Initializer<T>& init, const std::string& prefix, const BlockConfig& cfg,
               bool trainable, double out_std) {
  cfg.validate();
  const std::size_t d = cfg.dim, hidden = cfg.dim * cfg.mlp_ratio;
  const double in_std = 1.0 / std::sqrt(static_cast<double>(d));
  add_layer_norm(store, init, prefix + ".ln1", d, trainable);
  add_linear(store, init, prefix + ".attn.q", d, d, trainable, in_std);
  add_linear(store, init, prefix + ".attn.k", d, d, trainable, in_std);
  add_linear(store, init, prefix + ".attn.v", d, d, trainable, in_std);
  add_linear(store, init, prefix + ".attn.out", d, d, trainable, out_std);
  add_layer_norm(store, init, prefix + ".ln2", d, trainable);
  add_linear(store, init, prefix + ".mlp.fc1", d, hidden, trainable, in_std);
  add_linear(store, init, prefix + ".mlp.fc2", hidden, d, trainable, out_std);
}

namespace detail {
// [..., n, D] -> [..., heads, n, D/heads]
template <class T>
Tensor<T> split_heads(const Tensor<T>& x, std::size_t heads) {
  Shape s = x.shape();
  const std::size_t d = s.back();
  s.back() = heads;
  s.push_back(d / heads);
  return swap_axes(reshape(x, s), -3, -2);
}

template <class T>
Tensor<T> merge_heads(const Tensor<T>& x) {
  auto y = swap_axes(x, -3, -2);
  Shape s = y.shape();
  const std::size_t c = s.back();
  s.pop_back();
  s.back() *= c;
  return reshape(y, s);
}
}  // namespace detail

/// Additive mask [n, n] hiding future positions.
template <class T>
Tensor<T> causal_mask(std::size_t n) {
  std::vector<T> m(n * n, T(0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) m[i * n + j] = T(-1e9);
  return Tensor<T>({n, n}, std::move(m));
}

/// Multi-head self-attention over x[..., n, D]: per head softmax(Q K^T / sqrt(c)) V
/// with c = D / heads, heads concatenated, then the output projection.
template <class T>
Tensor<T> self_attention(Binder<T>& p, const std::string& prefix, const Tensor<T>& x, std::size_t heads,
                         const std::type_identity_t<Tensor<T>>* mask = nullptr,
                         std::type_identity_t<AttentionTrace<T>>* trace = nullptr) {
  const std::size_t d = x.dim(-1);
  if (d % heads != 0) throw DimensionError("attention: dim " + std::to_string(d) + " not divisible by heads");
  const std::size_t c = d / heads;
  auto q = detail::split_heads(linear(p, prefix + ".q", x), heads);
  auto k = detail::split_heads(linear(p, prefix + ".k", x), heads);
  auto v = detail::split_heads(linear(p, prefix + ".v", x), heads);
  auto scores = scale(matmul(q, transpose(k)), T(1) / std::sqrt(T(c)));
  if (mask) scores = add(scores, *mask);
  auto attn = softmax(scores, -1);
  if (trace) trace->maps.push_back(attn.detach());
  return linear(p, prefix + ".out", detail::merge_heads(matmul(attn, v)));
}

template <class T>
Tensor<T> mlp(Binder<T>& p, const std::string& prefix, const Tensor<T>& x) {
  return linear(p, prefix + ".fc2", gelu(linear(p, prefix + ".fc1", x)));
}

/// x + MHA(LN(x)), then + MLP(LN(.)).
template <class T>
Tensor<T> transformer_block(Binder<T>& p, const std::string& prefix, const Tensor<T>& x, std::size_t heads,
                            const std::type_identity_t<Tensor<T>>* mask = nullptr,
                            std::type_identity_t<AttentionTrace<T>>* trace = nullptr) {
  auto h = add(x, self_attention(p, prefix + ".attn", norm(p, prefix + ".ln1", x), heads, mask, trace));
  return add(h, mlp(p, prefix + ".mlp", norm(p, prefix + ".ln2", h)));
}

}  // namespace vtf::nn
