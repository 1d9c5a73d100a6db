#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vtf/nn.hpp"
#include "vtf/schema.hpp"
#include "vtf/text_encoder.hpp"
#include "vtf/vision.hpp"

namespace vtf {

struct FusionConfig {
  std::size_t heads = 8;
  std::size_t blocks = 2;
  std::size_t mlp_ratio = 4;
};

struct ModelConfig {
  VitConfig vision;
  TextConfig text;
  FusionConfig fusion;
  /// false selects the ablation that swaps the fusion transformer for one
  /// shared per-token linear layer.
  bool use_fusion = true;
  std::uint64_t seed = 1;

  std::size_t dim() const { return vision.dim; }

  void validate() const {
    vision.validate();
    nn::BlockConfig{vision.dim, text.heads, text.mlp_ratio}.validate();
    nn::BlockConfig{vision.dim, fusion.heads, fusion.mlp_ratio}.validate();
    if (text.context_length < 3) throw UsageError("text context length must be at least 3");
    if (fusion.blocks < 1) throw UsageError("fusion needs at least one block");
  }

  /// ViT-B/16-shaped input and token sizes: 224 px, 16 px patches, 512-d tokens.
  static ModelConfig full_shape(std::size_t depth = 1) {
    ModelConfig c;
    c.vision = {224, 16, 512, depth, 8, 4};
    c.text = {16, depth, 8, 4};
    c.fusion = {8, depth, 4};
    return c;
  }
};

/// Visual tokens followed by text tokens: tokens [batch, boundary + M, dim].
template <class T>
struct FusedSequence {
  Tensor<T> tokens;
  std::size_t boundary = 0;
};

/// Dual encoders, fusion transformer and per-attribute heads. Head m reads the
/// fused text token of attribute m.
template <class T>
class VtfModel {
 public:
  VtfModel(const AttributeSchema& schema, ModelConfig cfg)
      : cfg_(cfg), classes_(schema.class_count()), vision_(cfg.vision), text_(schema, cfg.text, cfg.dim()) {
    nn::BlockConfig{cfg_.dim(), cfg_.fusion.heads, cfg_.fusion.mlp_ratio}.validate();
    Initializer<T> init(cfg_.seed);
    vision_.register_params(params_, init, false);
    text_.register_params(params_, init, false);
    const std::size_t d = cfg_.dim();
    if (cfg_.use_fusion) {
      for (std::size_t i = 0; i < cfg_.fusion.blocks; ++i) {
        nn::add_block(params_, init, fusion_block_name(i), {d, cfg_.fusion.heads, cfg_.fusion.mlp_ratio}, true,
                      1.0 / std::sqrt(static_cast<double>(d)));
      }
    } else {
      nn::add_linear(params_, init, "fusion_fc", d, d, true, 1.0 / std::sqrt(static_cast<double>(d)));
    }
    params_.add("heads.weight", init.normal({classes_, d}, 1.0 / std::sqrt(static_cast<double>(d))), true);
    params_.add("heads.bias", init.zeros({classes_}), true);
  }

  const ModelConfig& config() const { return cfg_; }
  std::size_t classes() const { return classes_; }
  std::size_t visual_token_count() const { return cfg_.vision.tokens(); }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }
  const TextEncoder<T>& text_encoder() const { return text_; }
  const VisionEncoder<T>& vision_encoder() const { return vision_; }

  /// Freeze policy: encoders are frozen unless this is called with true.
  void set_encoders_trainable(bool trainable) {
    params_.set_trainable("vision.", trainable);
    params_.set_trainable("text.", trainable);
  }

  static bool is_encoder_param(const std::string& name) {
    return name.rfind("vision.", 0) == 0 || name.rfind("text.", 0) == 0;
  }

  /// F_v: pad every frame, encode, average over time. [tokens, dim]
  Tensor<T> visual_tokens(Binder<T>& p, const std::vector<Frame>& frames) const {
    std::vector<Frame> square;
    square.reserve(frames.size());
    for (const auto& f : frames) square.push_back(pad_to_square(f, cfg_.vision.image_size));
    return temporal_average(vision_.encode(p, square));
  }

  /// F_t: [classes, dim]
  Tensor<T> text_tokens(Binder<T>& p) const { return text_.encode(p); }

  /// [F_v, F_t] for a batch of visual token sets, each [tokens, dim].
  FusedSequence<T> concat_tokens(const std::vector<Tensor<T>>& visual, const Tensor<T>& text) const {
    if (visual.empty()) throw ContractError("concat_tokens: empty batch");
    const std::size_t d = cfg_.dim(), nv = visual.front().dim(0), m = text.dim(0);
    std::vector<Tensor<T>> rows;
    for (const auto& v : visual) rows.push_back(reshape(v, {1, nv, d}));
    const auto t = reshape(text, {1, m, d});
    auto vis = rows.size() == 1 ? rows.front() : concat(rows, 0);
    auto txt = visual.size() == 1 ? t : concat(std::vector<Tensor<T>>(visual.size(), t), 0);
    return {concat<T>({vis, txt}, 1), nv};
  }

  /// The fusion stack (or the linear ablation), shape-preserving.
  FusedSequence<T> fuse(Binder<T>& p, const FusedSequence<T>& seq, nn::AttentionTrace<T>* trace = nullptr) const {
    auto x = seq.tokens;
    if (cfg_.use_fusion) {
      for (std::size_t i = 0; i < cfg_.fusion.blocks; ++i) {
        x = nn::transformer_block(p, fusion_block_name(i), x, cfg_.fusion.heads, nullptr, trace);
      }
    } else {
      x = nn::linear(p, "fusion_fc", x);
    }
    return {x, seq.boundary};
  }

  /// logits[b, m] = head_m(token boundary + m). [batch, classes]
  Tensor<T> classify(Binder<T>& p, const FusedSequence<T>& seq) const {
    const std::size_t n = seq.tokens.dim(1);
    if (n < seq.boundary || n - seq.boundary != classes_) {
      throw SchemaMismatchError("classify: " + std::to_string(n - std::min(n, seq.boundary)) +
                                " text tokens for " + std::to_string(classes_) + " classification heads");
    }
    auto text_rows = slice(seq.tokens, 1, seq.boundary, n);
    return add(sum(mul(text_rows, p("heads.weight")), -1), p("heads.bias"));
  }

  /// Logits for a batch of precomputed visual token sets. [batch, classes]
  Tensor<T> logits_from_tokens(Binder<T>& p, const std::vector<Tensor<T>>& visual, const Tensor<T>& text,
                               nn::AttentionTrace<T>* trace = nullptr) const {
    return classify(p, fuse(p, concat_tokens(visual, text), trace));
  }

  /// Full pipeline for one tracklet's frames (already sampled). [classes]
  Tensor<T> forward(Binder<T>& p, const std::vector<Frame>& frames, nn::AttentionTrace<T>* trace = nullptr) const {
    auto logits = logits_from_tokens(p, {visual_tokens(p, frames)}, text_tokens(p), trace);
    return reshape(logits, {classes_});
  }

  static std::string fusion_block_name(std::size_t i) { return "fusion.blocks." + std::to_string(i); }

 private:
  ModelConfig cfg_;
  std::size_t classes_;
  VisionEncoder<T> vision_;
  TextEncoder<T> text_;
  ParamStore<T> params_;
};

}  // namespace vtf
