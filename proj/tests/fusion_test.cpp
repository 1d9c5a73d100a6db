#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "vtf/gradcheck.hpp"
#include "vtf/verify.hpp"

using namespace vtf;

namespace {

template <class T>
std::vector<T> values(const Tensor<T>& t) {
  return {t.data().begin(), t.data().end()};
}

ParamStore<double> attention_params(std::size_t d, std::uint64_t seed) {
  ParamStore<double> store;
  Initializer<double> init(seed);
  for (const char* n : {"a.q", "a.k", "a.v", "a.out"}) {
    store.add(std::string(n) + ".weight", init.normal({d, d}, 0.7), true);
    store.add(std::string(n) + ".bias", init.normal({d}, 0.3), true);
  }
  return store;
}

std::vector<Frame> random_frames(std::size_t n, std::mt19937_64& rng, std::size_t h = 8, std::size_t w = 6) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<Frame> out;
  for (std::size_t f = 0; f < n; ++f) {
    std::vector<float> px(h * w * 3);
    for (auto& v : px) v = u(rng);
    out.emplace_back(h, w, std::move(px));
  }
  return out;
}

Tensor<double> logits_of(const VtfModel<double>& model, const std::vector<Frame>& frames,
                         nn::AttentionTrace<double>* trace = nullptr) {
  Binder<double> p(model.params());
  return model.forward(p, frames, trace);
}

void zero_output_projections(VtfModel<double>& model) {
  for (const auto& name : model.params().names()) {
    if (name.find(".attn.out.") != std::string::npos || name.find(".mlp.fc2.") != std::string::npos) {
      model.params().set_value(name, Tensor<double>::zeros(model.params().at(name).value.shape()));
    }
  }
}

}  // namespace

TEST(SelfAttention, SingleTokenWeightIsOne) {
  auto store = attention_params(4, 1);
  Binder<double> p(store);
  nn::AttentionTrace<double> trace;
  nn::self_attention(p, "a", Tensor<double>({1, 4}, {0.3, -1.0, 2.0, 0.5}), 2, nullptr, &trace);
  ASSERT_EQ(trace.maps.size(), 1u);
  EXPECT_EQ(trace.maps[0].shape(), (Shape{2, 1, 1}));
  for (double v : values(trace.maps[0])) EXPECT_EQ(v, 1.0);
}

TEST(SelfAttention, IdenticalKeysGiveUniformRows) {
  auto store = attention_params(2, 2);
  store.set_value("a.k.weight", Tensor<double>::zeros({2, 2}));
  Binder<double> p(store);
  nn::AttentionTrace<double> trace;
  nn::self_attention(p, "a", Tensor<double>({2, 2}, {1.0, -2.0, 0.5, 3.0}), 1, nullptr, &trace);
  for (double v : values(trace.maps[0])) EXPECT_EQ(v, 0.5);
}

TEST(SelfAttention, MatchesScalarReimplementation) {
  const std::size_t n = 3, d = 2;
  auto store = attention_params(d, 3);
  std::mt19937_64 rng(4);
  const auto x = random_tensor({n, d}, rng);
  Binder<double> p(store);
  const auto out = nn::self_attention(p, "a", x, 1);

  auto W = [&](const std::string& name, std::size_t i, std::size_t j) { return store.at(name).value[i * d + j]; };
  auto B = [&](const std::string& name, std::size_t j) { return store.at(name).value[j]; };
  auto proj = [&](const std::string& prefix, const std::vector<double>& in) {
    std::vector<double> r(n * d);
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t j = 0; j < d; ++j) {
        double acc = B(prefix + ".bias", j);
        for (std::size_t i = 0; i < d; ++i) acc += in[t * d + i] * W(prefix + ".weight", i, j);
        r[t * d + j] = acc;
      }
    return r;
  };
  const auto xs = values(x);
  const auto q = proj("a.q", xs), k = proj("a.k", xs), v = proj("a.v", xs);
  std::vector<double> mixed(n * d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s[3], mx = -1e300, z = 0;
    for (std::size_t j = 0; j < n; ++j) {
      s[j] = (q[i * d] * k[j * d] + q[i * d + 1] * k[j * d + 1]) / std::sqrt(2.0);
      mx = std::max(mx, s[j]);
    }
    for (std::size_t j = 0; j < n; ++j) z += std::exp(s[j] - mx);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t c = 0; c < d; ++c) mixed[i * d + c] += std::exp(s[j] - mx) / z * v[j * d + c];
  }
  const auto expected = proj("a.out", mixed);
  for (std::size_t i = 0; i < n * d; ++i) EXPECT_NEAR(out[i], expected[i], 1e-6);
}

TEST(FusionBlock, ZeroOutputProjectionsIsIdentity) {
  ParamStore<double> store;
  Initializer<double> init(5);
  nn::add_block(store, init, "b", {8, 2, 2}, true, 0.0);
  std::mt19937_64 rng(6);
  const auto x = random_tensor({5, 8}, rng);
  Binder<double> p(store);
  EXPECT_EQ(values(nn::transformer_block(p, "b", x, 2)), values(x));
}

TEST(FusionBlock, ShapePreserved) {
  ParamStore<double> store;
  Initializer<double> init(7);
  nn::add_block(store, init, "b", {8, 4, 2}, true, 0.1);
  std::mt19937_64 rng(8);
  for (std::size_t n : {1, 3, 9}) {
    Binder<double> p(store);
    EXPECT_EQ(nn::transformer_block(p, "b", random_tensor({2, n, 8}, rng), 4).shape(), (Shape{2, n, 8}));
  }
}

TEST(FusionBlock, ParameterGradientsMatchFiniteDifferences) {
  ParamStore<double> store;
  Initializer<double> init(9);
  nn::add_block(store, init, "b", {4, 2, 2}, true, 0.3);
  std::mt19937_64 rng(10);
  const auto x = random_tensor({3, 4}, rng);
  Tape<double> tape;
  Binder<double> bound(store, &tape);
  tape.backward(sum_all(nn::transformer_block(bound, "b", x, 2)));
  const auto grads = bound.gradients();
  for (const auto& name : store.names()) {
    ASSERT_TRUE(grads.count(name)) << name;
    const auto numeric = finite_diff_grad<double>(
        [&](const Tensor<double>& v) {
          ParamStore<double> copy = store;
          copy.set_value(name, v);
          Binder<double> p(copy);
          return sum_all(nn::transformer_block(p, "b", x, 2)).item();
        },
        store.at(name).value, 1e-5);
    EXPECT_LT(max_relative_error(grads.at(name), numeric), 1e-4) << name;
  }
}

TEST(Classify, DefaultSchemaGives43Logits) {
  ModelConfig cfg = tiny_model_config();
  VtfModel<double> model(default_schema(), cfg);
  std::mt19937_64 rng(11);
  const auto logits = logits_of(model, random_frames(2, rng));
  EXPECT_EQ(logits.shape(), (Shape{43}));
  EXPECT_TRUE(logits.all_finite());
}

TEST(Classify, ZeroTokensGiveBiases) {
  VtfModel<double> model(tiny_schema(), tiny_model_config());
  const Tensor<double> bias({4}, {0.5, -1.0, 2.0, 0.25});
  model.params().set_value("heads.bias", bias);
  Binder<double> p(model.params());
  const FusedSequence<double> seq{Tensor<double>::zeros({1, 5 + 4, 8}), 5};
  EXPECT_EQ(values(model.classify(p, seq)), values(reshape(bias, {1, 4})));
}

TEST(Classify, PermutingTextRowsAndHeadsPermutesLogits) {
  VtfModel<double> model(tiny_schema(), tiny_model_config());
  std::mt19937_64 rng(12);
  model.params().set_value("heads.bias", random_tensor({4}, rng));
  const auto tokens = random_tensor({1, 3 + 4, 8}, rng);
  Binder<double> p(model.params());
  const auto base = model.classify(p, {tokens, 3});

  const std::size_t perm[4] = {2, 0, 3, 1};
  std::vector<double> t = values(tokens), w(4 * 8), b(4);
  const auto w0 = values(model.params().at("heads.weight").value);
  const auto b0 = values(model.params().at("heads.bias").value);
  for (std::size_t m = 0; m < 4; ++m) {
    for (std::size_t c = 0; c < 8; ++c) {
      t[(3 + m) * 8 + c] = tokens[(3 + perm[m]) * 8 + c];
      w[m * 8 + c] = w0[perm[m] * 8 + c];
    }
    b[m] = b0[perm[m]];
  }
  ParamStore<double> permuted = model.params();
  permuted.set_value("heads.weight", Tensor<double>({4, 8}, w));
  permuted.set_value("heads.bias", Tensor<double>({4}, b));
  Binder<double> q(permuted);
  const auto out = model.classify(q, {Tensor<double>({1, 7, 8}, t), 3});
  for (std::size_t m = 0; m < 4; ++m) EXPECT_EQ(out[m], base[perm[m]]);
}

TEST(Classify, TokenCountMismatch) {
  VtfModel<double> model(tiny_schema(), tiny_model_config());
  Binder<double> p(model.params());
  EXPECT_THROW(model.classify(p, {Tensor<double>::zeros({1, 8, 8}), 5}), SchemaMismatchError);
}

TEST(Forward, FramePermutationInvariant) {
  VtfModel<double> model(tiny_schema(), tiny_model_config());
  std::mt19937_64 rng(13);
  auto frames = random_frames(6, rng);
  const auto base = logits_of(model, frames);
  std::reverse(frames.begin(), frames.end());
  const auto other = logits_of(model, frames);
  for (std::size_t m = 0; m < 4; ++m) EXPECT_NEAR(base[m], other[m], 1e-5);
}

TEST(Forward, RepeatedFrameMatchesSingle) {
  VtfModel<double> model(tiny_schema(), tiny_model_config());
  std::mt19937_64 rng(14);
  const auto one = random_frames(1, rng);
  const auto single = logits_of(model, one);
  const auto six = logits_of(model, std::vector<Frame>(6, one.front()));
  for (std::size_t m = 0; m < 4; ++m) EXPECT_NEAR(single[m], six[m], 1e-6);
}

TEST(Forward, DeterministicGivenSeed) {
  VtfModel<double> a(tiny_schema(), tiny_model_config()), b(tiny_schema(), tiny_model_config());
  std::mt19937_64 rng(15);
  const auto frames = random_frames(3, rng);
  EXPECT_EQ(values(logits_of(a, frames)), values(logits_of(b, frames)));
}

TEST(Forward, AttentionRowsSumToOne) {
  VtfModel<double> model(tiny_schema(), tiny_model_config());
  std::mt19937_64 rng(16);
  nn::AttentionTrace<double> trace;
  logits_of(model, random_frames(2, rng), &trace);
  ASSERT_EQ(trace.maps.size(), model.config().fusion.blocks);
  for (const auto& m : trace.maps) {
    const std::size_t n = m.dim(-1);
    for (std::size_t r = 0; r < m.numel() / n; ++r) {
      double s = 0;
      for (std::size_t j = 0; j < n; ++j) s += m[r * n + j];
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
  }
}

TEST(Forward, ZeroedFusionStackIsIdentity) {
  VtfModel<double> model(default_schema(), tiny_model_config());
  zero_output_projections(model);
  std::mt19937_64 rng(17);
  const auto frames = random_frames(2, rng);
  Binder<double> p(model.params());
  const auto seq = model.concat_tokens({model.visual_tokens(p, frames)}, model.text_tokens(p));
  const auto fused = model.fuse(p, seq);
  EXPECT_EQ(fused.boundary, seq.boundary);
  EXPECT_EQ(values(fused.tokens), values(seq.tokens));
}

TEST(Forward, ConcatKeepsOrder) {
  VtfModel<double> model(tiny_schema(), tiny_model_config());
  std::mt19937_64 rng(18);
  Binder<double> p(model.params());
  const auto vis = model.visual_tokens(p, random_frames(2, rng));
  const auto txt = model.text_tokens(p);
  const auto seq = model.concat_tokens({vis}, txt);
  EXPECT_EQ(seq.boundary, 5u);
  EXPECT_EQ(seq.tokens.shape(), (Shape{1, 9, 8}));
  for (std::size_t i = 0; i < vis.numel(); ++i) EXPECT_EQ(seq.tokens[i], vis[i]);
  for (std::size_t i = 0; i < txt.numel(); ++i) EXPECT_EQ(seq.tokens[vis.numel() + i], txt[i]);
}

TEST(NoFusion, UsesSharedLinearLayer) {
  ModelConfig cfg = tiny_model_config();
  cfg.use_fusion = false;
  VtfModel<double> model(tiny_schema(), cfg);
  EXPECT_TRUE(model.params().contains("fusion_fc.weight"));
  for (const auto& name : model.params().names()) EXPECT_EQ(name.rfind("fusion.", 0), std::string::npos) << name;
}

TEST(NoFusion, LogitsIgnoreVideo) {
  ModelConfig cfg = tiny_model_config();
  cfg.use_fusion = false;
  VtfModel<double> model(tiny_schema(), cfg);
  std::mt19937_64 rng(19);
  EXPECT_EQ(values(logits_of(model, random_frames(2, rng))), values(logits_of(model, random_frames(3, rng))));
}

TEST(ModelConfigTest, HeadsMustDivideDim) {
  ModelConfig cfg = tiny_model_config();
  cfg.fusion.heads = 3;
  EXPECT_THROW(VtfModel<double>(tiny_schema(), cfg), UsageError);
}
