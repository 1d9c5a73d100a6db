#pragma once

#include <string>
#include <vector>

#include "vtf/nn.hpp"
#include "vtf/prompt.hpp"
#include "vtf/schema.hpp"

namespace vtf {

struct TextConfig {
  std::size_t context_length = 16;
  std::size_t depth = 1;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;
};

/// Small causal text transformer. Each attribute sentence is tokenized and the
/// representation at its end token becomes that attribute's text token.
/// Parameters live under "text.".
template <class T>
class TextEncoder {
 public:
  TextEncoder(const AttributeSchema& schema, TextConfig cfg, std::size_t dim)
      : cfg_(cfg), dim_(dim), vocab_(schema.sentences(), cfg.context_length) {
    nn::BlockConfig{dim_, cfg_.heads, cfg_.mlp_ratio}.validate();
    for (const auto& s : schema.sentences()) {
      auto ids = tokenize(s, vocab_);
      ends_.push_back(end_position(ids));
      ids_.insert(ids_.end(), ids.begin(), ids.end());
    }
  }

  const TokenizerVocab& vocab() const { return vocab_; }
  std::size_t sentences() const { return ends_.size(); }

  void register_params(ParamStore<T>& store, Initializer<T>& init, bool trainable) const {
    store.add("text.token_embed", init.normal({vocab_.size(), dim_}, 1.0), trainable);
    store.add("text.pos_embed", init.normal({cfg_.context_length, dim_}, 0.02), trainable);
    for (std::size_t i = 0; i < cfg_.depth; ++i) {
      nn::add_block(store, init, block(i), {dim_, cfg_.heads, cfg_.mlp_ratio}, trainable, 0.02);
    }
    nn::add_layer_norm(store, init, "text.ln_final", dim_, trainable);
  }

  /// F_t: [sentences, dim], rows in schema class order.
  Tensor<T> encode(Binder<T>& p) const {
    const std::size_t m = sentences(), len = cfg_.context_length;
    auto x = reshape(gather_rows(p("text.token_embed"), ids_), {m, len, dim_});
    x = add(x, p("text.pos_embed"));
    const auto mask = nn::causal_mask<T>(len);
    for (std::size_t i = 0; i < cfg_.depth; ++i) x = nn::transformer_block(p, block(i), x, cfg_.heads, &mask);
    x = nn::norm(p, "text.ln_final", x);
    std::vector<std::size_t> rows;
    for (std::size_t s = 0; s < m; ++s) rows.push_back(s * len + ends_[s]);
    return gather_rows(reshape(x, {m * len, dim_}), rows);
  }

 private:
  static std::string block(std::size_t i) { return "text.blocks." + std::to_string(i); }

  TextConfig cfg_;
  std::size_t dim_;
  TokenizerVocab vocab_;
  std::vector<std::size_t> ids_;
  std::vector<std::size_t> ends_;
};

}  // namespace vtf
