#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "vtf/gradcheck.hpp"
#include "vtf/ops.hpp"
#include "vtf/verify.hpp"

using namespace vtf;

namespace {

Tensor<double> T2(Shape s, std::vector<double> v) { return Tensor<double>(std::move(s), std::move(v)); }

void expect_values(const Tensor<double>& t, const std::vector<double>& want, double tol = 1e-12) {
  ASSERT_EQ(t.numel(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(t[i], want[i], tol) << "index " << i;
}

}  // namespace

TEST(Tensor, ConstructorChecksSize) {
  EXPECT_THROW(Tensor<float>({2, 3}, std::vector<float>(5)), DimensionError);
  EXPECT_THROW(Tensor<float>({2, 0}, {}), DimensionError);
  Tensor<float> t({2, 3}, std::vector<float>(6, 1.0f));
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.dim(-1), 3u);
  EXPECT_FALSE(t.tracked());
}

TEST(Matmul, IdentityLeavesMatrixAlone) {
  auto r = matmul(T2({2, 2}, {1, 0, 0, 1}), T2({2, 2}, {3, 4, 5, 6}));
  EXPECT_EQ(r.shape(), (Shape{2, 2}));
  expect_values(r, {3, 4, 5, 6});
}

TEST(Matmul, InnerProduct) { expect_values(matmul(T2({1, 2}, {1, 2}), T2({2, 1}, {3, 4})), {11}); }

TEST(Matmul, BroadcastsBatchDims) {
  std::mt19937_64 rng(1);
  auto a = random_tensor({2, 3, 4}, rng);
  auto b = random_tensor({4, 5}, rng);
  auto r = matmul(a, b);
  EXPECT_EQ(r.shape(), (Shape{2, 3, 5}));
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 5; ++j) {
        double s = 0;
        for (std::size_t k = 0; k < 4; ++k) s += a[n * 12 + i * 4 + k] * b[k * 5 + j];
        EXPECT_NEAR(r[n * 15 + i * 5 + j], s, 1e-12);
      }
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    matmul(Tensor<double>::zeros({2, 3}), Tensor<double>::zeros({4, 2}));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2,3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4,2]"), std::string::npos) << msg;
  }
}

TEST(Matmul, GradientOfSumMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  const auto a = random_tensor({3, 4}, rng);
  const auto b = random_tensor({4, 2}, rng);
  Tape<double> tape;
  auto la = tape.leaf(a), lb = tape.leaf(b);
  tape.backward(sum_all(matmul(la, lb)));
  auto fa = finite_diff_grad<double>([&](const Tensor<double>& x) { return sum_all(matmul(x, b)).item(); }, a, 1e-5);
  auto fb = finite_diff_grad<double>([&](const Tensor<double>& x) { return sum_all(matmul(a, x)).item(); }, b, 1e-5);
  EXPECT_LT(max_relative_error(*tape.grad(la), fa), 1e-4);
  EXPECT_LT(max_relative_error(*tape.grad(lb), fb), 1e-4);
}

TEST(Softmax, UniformInput) { expect_values(softmax(T2({3}, {0, 0, 0}), 0), {1.0 / 3, 1.0 / 3, 1.0 / 3}); }

TEST(Softmax, LargeInputsDoNotOverflow) {
  auto r = softmax(Tensor<float>({2}, {1000.0f, 1000.0f}), 0);
  EXPECT_FLOAT_EQ(r[0], 0.5f);
  EXPECT_FLOAT_EQ(r[1], 0.5f);
}

TEST(Softmax, LogInputsGiveProportions) {
  expect_values(softmax(T2({3}, {std::log(1.0), std::log(2.0), std::log(3.0)}), 0), {1.0 / 6, 2.0 / 6, 3.0 / 6});
}

TEST(Softmax, RowsSumToOneInFloat) {
  std::mt19937_64 rng(9);
  std::normal_distribution<float> n(0.0f, 30.0f);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<float> v(7 * 13);
    for (auto& x : v) x = n(rng);
    auto s = softmax(Tensor<float>({7, 13}, v), -1);
    for (std::size_t r = 0; r < 7; ++r) {
      double total = 0;
      for (std::size_t c = 0; c < 13; ++c) total += s[r * 13 + c];
      EXPECT_NEAR(total, 1.0, 1e-6);
    }
  }
}

TEST(LayerNorm, ConstantRowBecomesZero) {
  auto r = layer_norm(T2({4}, {2, 2, 2, 2}), Tensor<double>::full({4}, 1), Tensor<double>::zeros({4}));
  expect_values(r, {0, 0, 0, 0});
}

TEST(LayerNorm, TwoValueRow) {
  auto r = layer_norm(T2({2}, {1, 3}), Tensor<double>::full({2}, 1), Tensor<double>::zeros({2}), 1e-12);
  expect_values(r, {-1, 1}, 1e-9);
}

TEST(LayerNorm, ZeroGainGivesBias) {
  auto r = layer_norm(T2({3}, {5, -1, 7}), Tensor<double>::zeros({3}), T2({3}, {0.5, -2, 4}));
  expect_values(r, {0.5, -2, 4});
}

TEST(LayerNorm, NormalizesRows) {
  std::mt19937_64 rng(4);
  const double eps = 1e-5;
  for (int trial = 0; trial < 50; ++trial) {
    auto x = random_tensor({6, 16}, rng, -3, 3);
    auto y = layer_norm(x, Tensor<double>::full({16}, 1), Tensor<double>::zeros({16}), eps);
    for (std::size_t r = 0; r < 6; ++r) {
      double m = 0, v = 0;
      for (std::size_t c = 0; c < 16; ++c) m += y[r * 16 + c];
      m /= 16;
      for (std::size_t c = 0; c < 16; ++c) v += (y[r * 16 + c] - m) * (y[r * 16 + c] - m);
      v /= 16;
      EXPECT_LT(std::abs(m), 1e-6);
      EXPECT_LT(std::abs(v - 1), 10 * eps);
    }
  }
}

TEST(LayerNorm, RejectsSingleFeature) {
  EXPECT_THROW(layer_norm(T2({1}, {1}), Tensor<double>::full({1}, 1), Tensor<double>::zeros({1})), DimensionError);
}

TEST(Elementwise, SigmoidOfZero) { EXPECT_DOUBLE_EQ(sigmoid(T2({1}, {0}))[0], 0.5); }

TEST(Elementwise, MeanOverAxis) {
  auto r = mean(T2({2, 1}, {0, 2}), 0);
  EXPECT_EQ(r.shape(), (Shape{1}));
  expect_values(r, {1});
}

TEST(Elementwise, ConcatKeepsRowOrder) {
  std::vector<double> a(6), b(12);
  for (std::size_t i = 0; i < 6; ++i) a[i] = static_cast<double>(i);
  for (std::size_t i = 0; i < 12; ++i) b[i] = 100.0 + static_cast<double>(i);
  auto r = concat<double>({T2({2, 3}, a), T2({4, 3}, b)}, 0);
  EXPECT_EQ(r.shape(), (Shape{6, 3}));
  std::vector<double> want(a);
  want.insert(want.end(), b.begin(), b.end());
  expect_values(r, want);
}

TEST(Elementwise, BroadcastMismatchIsDimensionError) {
  EXPECT_THROW(add(Tensor<double>::zeros({2, 3}), Tensor<double>::zeros({2})), DimensionError);
  EXPECT_THROW(mul(Tensor<double>::zeros({2, 3}), Tensor<double>::zeros({3, 3})), DimensionError);
}

TEST(Elementwise, GeluMatchesErfForm) {
  for (double x : {-3.0, -0.5, 0.0, 0.7, 2.5}) {
    EXPECT_NEAR(gelu(T2({1}, {x}))[0], 0.5 * x * (1 + std::erf(x / std::sqrt(2.0))), 1e-14);
  }
}

TEST(Elementwise, FiniteOutputsOnFiniteInputs) {
  auto x = T2({4}, {-800, -1, 1, 800});
  EXPECT_TRUE(softplus(x).all_finite());
  EXPECT_TRUE(sigmoid(x).all_finite());
  EXPECT_TRUE(gelu(x).all_finite());
  EXPECT_TRUE(softmax(x, 0).all_finite());
}

TEST(Backward, SumGivesOnes) {
  Tape<double> tape;
  auto w = tape.leaf(T2({3}, {0.3, -1, 2}));
  tape.backward(sum_all(w));
  expect_values(*tape.grad(w), {1, 1, 1});
}

TEST(Backward, SquareGivesTwiceW) {
  Tape<double> tape;
  auto w = tape.leaf(T2({2}, {1, 2}));
  tape.backward(sum_all(mul(w, w)));
  expect_values(*tape.grad(w), {2, 4});
}

TEST(Backward, NonScalarLossIsContractError) {
  Tape<double> tape;
  auto w = tape.leaf(T2({2}, {1, 2}));
  EXPECT_THROW(tape.backward(scale(w, 2.0)), ContractError);
}

TEST(Backward, UntrackedInputsGetNoGradient) {
  Tape<double> tape;
  auto w = tape.leaf(T2({2}, {1, 2}));
  const auto frozen = T2({2}, {3, 4});
  tape.backward(sum_all(mul(w, frozen)));
  expect_values(*tape.grad(w), {3, 4});
  EXPECT_FALSE(tape.grad(frozen).has_value());
}

TEST(Backward, SharedSubexpressionAccumulates) {
  Tape<double> tape;
  auto w = tape.leaf(T2({1}, {3}));
  auto y = mul(w, w);
  tape.backward(sum_all(add(y, mul(y, w))));  // w^2 + w^3
  expect_values(*tape.grad(w), {2 * 3 + 3 * 9});
}

TEST(Backward, IsDeterministic) {
  std::mt19937_64 rng(12);
  const auto a = random_tensor({4, 6}, rng);
  const auto b = random_tensor({6, 3}, rng);
  auto run = [&] {
    Tape<double> tape;
    auto la = tape.leaf(a);
    tape.backward(sum_all(softmax(matmul(la, b), -1)));
    return tape.grad(la)->values();
  };
  EXPECT_EQ(run(), run());
}

TEST(FiniteDiff, SumGivesOnes) {
  std::mt19937_64 rng(2);
  auto g = finite_diff_grad<double>([](const Tensor<double>& x) { return sum_all(x).item(); },
                                    random_tensor({5}, rng), 1e-5);
  expect_values(g, {1, 1, 1, 1, 1}, 1e-9);
}

TEST(FiniteDiff, SquareAtThree) {
  auto g = finite_diff_grad<double>([](const Tensor<double>& x) { return x[0] * x[0]; }, T2({1}, {3}), 1e-5);
  EXPECT_NEAR(g[0], 6.0, 1e-6);
}

TEST(FiniteDiff, RejectsNonPositiveDelta) {
  EXPECT_THROW(finite_diff_grad<double>([](const Tensor<double>& x) { return x[0]; }, T2({1}, {1}), 0.0),
               ContractError);
}

TEST(FiniteDiff, AgreesWithBackwardOnSoftmaxMatmul) {
  std::mt19937_64 rng(8);
  const auto a = random_tensor({3, 4}, rng);
  const auto b = random_tensor({4, 5}, rng);
  const auto w = random_tensor({3, 5}, rng);
  auto f = [&](const Tensor<double>& x) { return sum_all(mul(softmax(matmul(x, b), -1), w)).item(); };
  Tape<double> tape;
  auto la = tape.leaf(a);
  tape.backward(sum_all(mul(softmax(matmul(la, b), -1), w)));
  EXPECT_LT(max_relative_error(*tape.grad(la), finite_diff_grad<double>(f, a, 1e-5)), 1e-4);
}

TEST(GradCheck, EveryOpOverManyTrials) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    for (const auto& row : check_all_ops(seed)) {
      EXPECT_TRUE(row.pass) << row.name << " seed " << seed << " err " << row.max_rel_error;
    }
  }
}

TEST(GradCheck, CoversEveryOpKind) {
  const auto rows = check_all_ops();
  for (int k = 1; k <= static_cast<int>(OpKind::Gather); ++k) {
    const auto name = std::string(op_name(static_cast<OpKind>(k)));
    bool found = false;
    for (const auto& r : rows) found = found || r.name == name;
    EXPECT_TRUE(found) << name;
  }
}

TEST(GradCheck, DetectsCorruptedBackwardRule) {
  vtf::testing::backward_fault() = OpKind::Gelu;
  const auto rows = check_all_ops();
  vtf::testing::backward_fault().reset();
  for (const auto& r : rows) EXPECT_EQ(r.pass, r.name != "gelu") << r.name;
}

TEST(RelativeError, FloorHandlesZeros) {
  EXPECT_DOUBLE_EQ(relative_error(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(1.0, 2.0), 0.5);
  EXPECT_NEAR(relative_error(1e-12, 0.0), 1e-6, 1e-18);
}
