#pragma once

#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "vtf/gradcheck.hpp"
#include "vtf/model.hpp"
#include "vtf/ops.hpp"
#include "vtf/train.hpp"

namespace vtf {

struct GradCheckRow {
  std::string name;
  std::size_t checked = 0;  // scalar coordinates compared
  double max_rel_error = 0;
  bool pass = false;
};

struct GradCheckReport {
  std::vector<GradCheckRow> rows;
  double tolerance = 1e-4;

  bool passed() const {
    for (const auto& r : rows)
      if (!r.pass) return false;
    return !rows.empty();
  }
};

inline std::string sci4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4e", v);
  return buf;
}

inline std::string gradcheck_tsv(const GradCheckReport& r) {
  std::string out = "check\tchecked\tmax_rel_error\tstatus\n";
  for (const auto& row : r.rows) {
    out += row.name + "\t" + std::to_string(row.checked) + "\t" + sci4(row.max_rel_error) + "\t" +
           (row.pass ? "PASS" : "FAIL") + "\n";
  }
  return out;
}

using OpFn = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

/// Compares autodiff and central differences for loss = sum(fn(inputs) * R)
/// with a fixed random R, for every input listed in `wrt`.
inline GradCheckRow check_op(const std::string& name, const OpFn& fn, const std::vector<Tensor<double>>& inputs,
                             const std::vector<std::size_t>& wrt, std::mt19937_64& rng, double delta = 1e-5,
                             double tol = 1e-4) {
  const auto probe = fn(inputs);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> r(probe.numel());
  for (auto& v : r) v = normal(rng);
  const Tensor<double> weights(probe.shape(), r);

  GradCheckRow row;
  row.name = name;
  for (std::size_t k : wrt) {
    Tape<double> tape;
    auto args = inputs;
    args[k] = tape.leaf(inputs[k]);
    const auto loss = sum_all(mul(fn(args), weights));
    tape.backward(loss);
    const auto analytic = tape.grad(args[k]).value_or(Tensor<double>::zeros(inputs[k].shape()));
    const auto numeric = finite_diff_grad<double>(
        [&](const Tensor<double>& x) {
          auto a = inputs;
          a[k] = x;
          return sum_all(mul(fn(a), weights)).item();
        },
        inputs[k], delta);
    row.max_rel_error = std::max(row.max_rel_error, max_relative_error(analytic, numeric));
    row.checked += inputs[k].numel();
  }
  row.pass = row.max_rel_error < tol;
  return row;
}

inline Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -2.0, double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = u(rng);
  return Tensor<double>(std::move(shape), std::move(v));
}

/// One row per differentiable op kind.
inline std::vector<GradCheckRow> check_all_ops(std::uint64_t seed = 7, double delta = 1e-5, double tol = 1e-4) {
  std::mt19937_64 rng(seed);
  auto rt = [&](Shape s) { return random_tensor(std::move(s), rng); };
  std::vector<GradCheckRow> rows;
  auto merge = [](GradCheckRow a, const GradCheckRow& b) {
    a.checked += b.checked;
    a.max_rel_error = std::max(a.max_rel_error, b.max_rel_error);
    a.pass = a.pass && b.pass;
    return a;
  };
  using V = std::vector<Tensor<double>>;

  {
    auto mm = [](const V& x) { return matmul(x[0], x[1]); };
    auto a = check_op("matmul", mm, {rt({2, 3, 4}), rt({4, 5})}, {0, 1}, rng, delta, tol);
    auto b = check_op("matmul", mm, {rt({2, 3, 4}), rt({2, 4, 2})}, {0, 1}, rng, delta, tol);
    rows.push_back(merge(a, b));
  }
  rows.push_back(check_op("add", [](const V& x) { return add(x[0], x[1]); }, {rt({2, 3, 4}), rt({4})}, {0, 1}, rng,
                          delta, tol));
  rows.push_back(check_op("sub", [](const V& x) { return sub(x[0], x[1]); }, {rt({2, 3, 4}), rt({3, 4})}, {0, 1}, rng,
                          delta, tol));
  rows.push_back(check_op("mul", [](const V& x) { return mul(x[0], x[1]); }, {rt({2, 3, 4}), rt({4})}, {0, 1}, rng,
                          delta, tol));
  rows.push_back(check_op("scale", [](const V& x) { return scale(x[0], 1.7); }, {rt({3, 4})}, {0}, rng, delta, tol));
  rows.push_back(check_op("swap_axes", [](const V& x) { return swap_axes(x[0], 0, 2); }, {rt({2, 3, 4})}, {0}, rng,
                          delta, tol));
  rows.push_back(check_op("reshape", [](const V& x) { return reshape(x[0], {6, 4}); }, {rt({2, 3, 4})}, {0}, rng, delta,
                          tol));
  rows.push_back(check_op("gelu", [](const V& x) { return gelu(x[0]); }, {rt({3, 5})}, {0}, rng, delta, tol));
  rows.push_back(check_op("sigmoid", [](const V& x) { return sigmoid(x[0]); }, {rt({3, 5})}, {0}, rng, delta, tol));
  rows.push_back(check_op("softplus", [](const V& x) { return softplus(x[0]); }, {rt({3, 5})}, {0}, rng, delta, tol));
  {
    auto a = check_op("softmax", [](const V& x) { return softmax(x[0], -1); }, {rt({2, 3, 4})}, {0}, rng, delta, tol);
    auto b = check_op("softmax", [](const V& x) { return softmax(x[0], 0); }, {rt({3, 4})}, {0}, rng, delta, tol);
    rows.push_back(merge(a, b));
  }
  rows.push_back(check_op("layer_norm", [](const V& x) { return layer_norm(x[0], x[1], x[2]); },
                          {rt({3, 5}), rt({5}), rt({5})}, {0, 1, 2}, rng, delta, tol));
  rows.push_back(check_op("mean", [](const V& x) { return mean(x[0], 1); }, {rt({2, 3, 4})}, {0}, rng, delta, tol));
  rows.push_back(check_op("sum", [](const V& x) { return sum(x[0], 0); }, {rt({2, 3, 4})}, {0}, rng, delta, tol));
  rows.push_back(check_op("sum_all", [](const V& x) { return reshape(sum_all(x[0]), {1}); }, {rt({3, 4})}, {0}, rng,
                          delta, tol));
  rows.push_back(check_op("concat", [](const V& x) { return concat<double>({x[0], x[1]}, 1); },
                          {rt({2, 3}), rt({2, 2})}, {0, 1}, rng, delta, tol));
  rows.push_back(check_op("slice", [](const V& x) { return slice(x[0], 1, 1, 3); }, {rt({2, 4, 3})}, {0}, rng, delta,
                          tol));
  rows.push_back(check_op("gather", [](const V& x) { return gather_rows(x[0], {0, 2, 2, 4}); }, {rt({5, 3})}, {0}, rng,
                          delta, tol));
  return rows;
}

/// Small double-precision model used for the end-to-end check.
inline ModelConfig tiny_model_config() {
  ModelConfig c;
  c.vision = {8, 4, 8, 1, 2, 2};
  c.text = {8, 1, 2, 2};
  c.fusion = {2, 1, 2};
  c.seed = 11;
  return c;
}

inline AttributeSchema tiny_schema() {
  return AttributeSchema({{"shade", GroupKind::Exclusive, {{"light", "Light"}, {"dark", "Dark"}, {"mixed", "Mixed"}}},
                          {"bag", GroupKind::Binary, {{"backpack", "hasBackpack"}}}},
                         PromptTemplate());
}

/// BCE of the full pipeline (frames -> encoders -> fusion -> heads) against
/// each parameter, encoders unfrozen. Returns one row.
inline GradCheckRow check_full_model(std::uint64_t seed = 5, double delta = 1e-5, double tol = 1e-4) {
  const auto schema = tiny_schema();
  VtfModel<double> model(schema, tiny_model_config());
  model.set_encoders_trainable(true);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Frame> frames;
  for (int f = 0; f < 2; ++f) {
    std::vector<float> px(8 * 6 * 3);
    for (auto& v : px) v = static_cast<float>(u(rng));
    frames.emplace_back(8, 6, std::move(px));
  }
  const Tensor<double> targets({1, schema.class_count()}, {0, 1, 0, 1});

  auto loss_of = [&](Binder<double>& b) {
    return bce_loss(reshape(model.forward(b, frames), {1, schema.class_count()}), targets);
  };

  Tape<double> tape;
  Binder<double> bound(model.params(), &tape);
  tape.backward(loss_of(bound));
  const auto grads = bound.gradients();

  GradCheckRow row;
  row.name = "full_model";
  for (const auto& name : model.params().names()) {
    const auto& value = model.params().at(name).value;
    const auto analytic = grads.count(name) ? grads.at(name) : Tensor<double>::zeros(value.shape());
    const auto numeric = finite_diff_grad<double>(
        [&](const Tensor<double>& x) {
          ParamStore<double> copy = model.params();
          copy.set_value(name, x);
          Binder<double> b(copy);
          return loss_of(b).item();
        },
        value, delta);
    row.max_rel_error = std::max(row.max_rel_error, max_relative_error(analytic, numeric));
    row.checked += value.numel();
  }
  row.pass = row.max_rel_error < tol;
  return row;
}

inline GradCheckReport run_gradcheck(double delta = 1e-5, double tol = 1e-4) {
  GradCheckReport r;
  r.tolerance = tol;
  r.rows = check_all_ops(7, delta, tol);
  r.rows.push_back(check_full_model(5, delta, tol));
  return r;
}

}  // namespace vtf
