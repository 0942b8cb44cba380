/*
 * Copyright 2026 The qpriv Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "qpriv/tokenizer.hpp"

#include <algorithm>
#include <map>

#include "qpriv/text.hpp"
#include "qpriv/types.hpp"

namespace qpriv {

namespace {

const std::vector<std::string>& special_tokens() {
  static const std::vector<std::string> s = {"<pad>", "<unk>", "<bos>", "<sep>", "<eos>"};
  return s;
}

bool is_digit_token(const std::string& t) { return t.size() == 1 && t[0] >= '0' && t[0] <= '9'; }

}  // namespace

Tokenizer::Tokenizer() : tokens_(special_tokens()) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) ids_.emplace(tokens_[i], static_cast<int>(i));
}

Tokenizer Tokenizer::from_tokens(const std::vector<std::string>& tokens) {
  Tokenizer t;
  for (const auto& tok : tokens) {
    check(!tok.empty(), "tokenizer: empty token");
    check(t.ids_.emplace(tok, static_cast<int>(t.tokens_.size())).second,
          "tokenizer: duplicate token '" + tok + "'");
    t.tokens_.push_back(tok);
  }
  return t;
}

Tokenizer Tokenizer::build(const std::vector<std::string>& texts, std::size_t max_vocab) {
  check(max_vocab > kNumSpecials, "tokenizer: max_vocab must exceed the 5 special tokens");
  std::map<std::string, std::size_t> counts;
  for (const auto& text : texts) {
    for (auto& w : tokenize_words(text)) ++counts[std::move(w)];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  // counts is sorted by token, so a stable sort on count keeps ties lexicographic.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> keep;
  for (const auto& [tok, n] : ranked) {
    if (keep.size() + kNumSpecials >= max_vocab) break;
    if (std::find(special_tokens().begin(), special_tokens().end(), tok) != special_tokens().end())
      continue;
    keep.push_back(tok);
  }
  return from_tokens(keep);
}

std::vector<int> Tokenizer::encode(std::string_view text) const {
  std::vector<int> out;
  for (const auto& w : tokenize_words(text)) out.push_back(id(w));
  return out;
}

std::string Tokenizer::decode(const std::vector<int>& ids) const {
  std::string out;
  bool prev_digit = false;
  for (int i : ids) {
    if (i == kPad || i == kBos || i == kSep || i == kEos) continue;
    const std::string& t = token(i);
    const bool digit = is_digit_token(t);
    if (!out.empty() && !(digit && prev_digit)) out.push_back(' ');
    out += t;
    prev_digit = digit;
  }
  return out;
}

int Tokenizer::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Tokenizer::token(int id) const {
  check(id >= 0 && static_cast<std::size_t>(id) < tokens_.size(),
        "tokenizer: id " + std::to_string(id) + " out of range");
  return tokens_[id];
}

std::uint64_t Tokenizer::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : tokens_) {
    for (unsigned char c : t) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= 0xff;  // token separator
    h *= 0x100000001b3ULL;
  }
  return h;
}

Tokenizer build_tokenizer(const Corpus& corpus, std::size_t max_vocab) {
  check(!corpus.empty(), "build_tokenizer: empty corpus");
  std::vector<std::string> texts;
  texts.reserve(2 * corpus.size());
  for (const auto& e : corpus.examples) {
    texts.push_back(e.query);
    texts.push_back(e.document);
  }
  return Tokenizer::build(texts, max_vocab);
}

void to_json(nlohmann::json& j, const Tokenizer& t) {
  j = std::vector<std::string>(t.tokens().begin() + Tokenizer::kNumSpecials, t.tokens().end());
}

void from_json(const nlohmann::json& j, Tokenizer& t) {
  t = Tokenizer::from_tokens(j.get<std::vector<std::string>>());
}

}  // namespace qpriv
