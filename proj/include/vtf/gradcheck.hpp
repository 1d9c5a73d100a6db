#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "vtf/tensor.hpp"

namespace vtf {

/// Central differences (f(x + d e_i) - f(x - d e_i)) / 2d for every coordinate of x.
template <class T>
Tensor<T> finite_diff_grad(const std::function<T(const Tensor<T>&)>& f, const Tensor<T>& x, T delta) {
  if (!(delta > T(0))) throw ContractError("finite_diff_grad: delta must be positive");
  std::vector<T> probe(x.values());
  std::vector<T> grad(probe.size());
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const T saved = probe[i];
    probe[i] = saved + delta;
    const T up = f(Tensor<T>(x.shape(), probe));
    probe[i] = saved - delta;
    const T down = f(Tensor<T>(x.shape(), probe));
    probe[i] = saved;
    grad[i] = (up - down) / (T(2) * delta);
  }
  return Tensor<T>(x.shape(), std::move(grad));
}

/// |a - b| / max(|a|, |b|, floor). The floor keeps gradients that are zero up
/// to rounding from reporting huge relative errors.
inline double relative_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

template <class T>
double max_relative_error(const Tensor<T>& a, const Tensor<T>& b, double floor = 1e-6) {
  if (a.shape() != b.shape()) {
    throw DimensionError("max_relative_error: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  double worst = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    worst = std::max(worst, relative_error(static_cast<double>(a[i]), static_cast<double>(b[i]), floor));
  }
  return worst;
}

}  // namespace vtf
