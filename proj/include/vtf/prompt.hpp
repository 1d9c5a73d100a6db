#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "vtf/error.hpp"

namespace vtf {

namespace detail {

inline void replace_all(std::string& s, std::string_view from, std::string_view to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

inline bool ascii_lower(char c) { return c >= 'a' && c <= 'z'; }
inline bool ascii_upper(char c) { return c >= 'A' && c <= 'Z'; }
inline bool ascii_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

inline std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : s) {
    if (ascii_space(c)) {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

}  // namespace detail

/// Turns a raw attribute label into a lowercase natural phrase:
/// "Age ≤ 40" -> "age less than 40", "topLength_short" -> "top length short".
/// ASCII-only case handling, so the result does not depend on locale.
inline std::string split_expand(std::string_view raw) {
  if (raw.empty()) throw ContractError("split_expand: empty attribute string");
  std::string s(raw);
  detail::replace_all(s, "≤", " less than ");
  detail::replace_all(s, "≥", " greater than ");
  detail::replace_all(s, "<", " less than ");
  detail::replace_all(s, ">", " greater than ");
  detail::replace_all(s, "=", " is ");
  std::string spaced;
  spaced.reserve(s.size() + 8);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (c == '_') {
      spaced.push_back(' ');
      continue;
    }
    if (i > 0 && detail::ascii_upper(c) && detail::ascii_lower(s[i - 1])) spaced.push_back(' ');
    spaced.push_back(detail::ascii_upper(c) ? static_cast<char>(c - 'A' + 'a') : c);
  }
  std::string out;
  for (const auto& w : detail::split_words(spaced)) {
    if (!out.empty()) out.push_back(' ');
    out += w;
  }
  return out;
}

/// Sentence template with exactly one "{}" slot.
class PromptTemplate {
 public:
  static constexpr std::string_view kPlaceholder = "{}";
  static constexpr std::string_view kDefault = "the pedestrian has an attribute {}";

  PromptTemplate() : PromptTemplate(std::string(kDefault)) {}

  explicit PromptTemplate(std::string text) : text_(std::move(text)) {
    const auto first = text_.find(kPlaceholder);
    if (first == std::string::npos || text_.find(kPlaceholder, first + 1) != std::string::npos) {
      throw ContractError("prompt template must contain exactly one '{}' placeholder: \"" + text_ + "\"");
    }
    slot_ = first;
  }

  const std::string& text() const { return text_; }

  std::string apply(std::string_view phrase) const {
    if (phrase.empty()) throw ContractError("apply_template: empty phrase");
    std::string out = text_;
    out.replace(slot_, kPlaceholder.size(), phrase);
    return out;
  }

  bool operator==(const PromptTemplate&) const = default;

 private:
  std::string text_;
  std::size_t slot_ = 0;
};

inline std::string apply_template(std::string_view phrase, const PromptTemplate& tpl) { return tpl.apply(phrase); }

/// Word-level vocabulary with fixed reserved ids. Words are numbered in sorted
/// order, so the ids depend only on the set of sentences, not their order.
class TokenizerVocab {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnknown = 1;
  static constexpr std::size_t kStart = 2;
  static constexpr std::size_t kEnd = 3;
  static constexpr std::size_t kFirstWord = 4;

  explicit TokenizerVocab(const std::vector<std::string>& sentences, std::size_t max_length = 16)
      : max_length_(max_length) {
    if (max_length_ < 3) throw ContractError("tokenizer max length must be at least 3");
    std::set<std::string> words;
    for (const auto& s : sentences) {
      for (auto& w : detail::split_words(s)) words.insert(std::move(w));
    }
    std::size_t next = kFirstWord;
    for (const auto& w : words) ids_.emplace(w, next++);
  }

  std::size_t size() const { return kFirstWord + ids_.size(); }
  std::size_t max_length() const { return max_length_; }

  std::size_t id(const std::string& word) const {
    auto it = ids_.find(word);
    return it == ids_.end() ? kUnknown : it->second;
  }

 private:
  std::map<std::string, std::size_t> ids_;
  std::size_t max_length_;
};

/// [start, word ids..., end, pad...] of length max_length; long sentences are
/// cut so that start and end survive.
inline std::vector<std::size_t> tokenize(std::string_view sentence, const TokenizerVocab& vocab) {
  const std::size_t length = vocab.max_length();
  auto words = detail::split_words(sentence);
  if (words.size() > length - 2) words.resize(length - 2);
  std::vector<std::size_t> ids;
  ids.reserve(length);
  ids.push_back(TokenizerVocab::kStart);
  for (const auto& w : words) ids.push_back(vocab.id(w));
  ids.push_back(TokenizerVocab::kEnd);
  ids.resize(length, TokenizerVocab::kPad);
  return ids;
}

inline std::size_t end_position(const std::vector<std::size_t>& ids) {
  auto it = std::find(ids.begin(), ids.end(), TokenizerVocab::kEnd);
  if (it == ids.end()) throw ContractError("token sequence has no end token");
  return static_cast<std::size_t>(it - ids.begin());
}

}  // namespace vtf
