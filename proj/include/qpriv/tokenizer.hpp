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


#ifndef QPRIV_TOKENIZER_HPP_
#define QPRIV_TOKENIZER_HPP_

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "qpriv/dataset.hpp"

namespace qpriv {

// Closed word-level vocabulary over tokenize_words() output.
class Tokenizer {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kSep = 3;
  static constexpr int kEos = 4;
  static constexpr int kNumSpecials = 5;

  Tokenizer();
  // Keeps the max_vocab - 5 most frequent tokens; equal counts are ordered
  // lexicographically.
  static Tokenizer build(const std::vector<std::string>& texts, std::size_t max_vocab);
  // Tokens as given, in order, after the specials.
  static Tokenizer from_tokens(const std::vector<std::string>& tokens);

  std::vector<int> encode(std::string_view text) const;
  // Specials other than UNK are dropped. Adjacent digits are joined so a
  // number decodes to its usual spelling; everything else is space separated.
  std::string decode(const std::vector<int>& ids) const;

  int id(const std::string& token) const;  // kUnk when absent
  const std::string& token(int id) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  // FNV-1a over the token list; identifies a vocabulary in checkpoints.
  std::uint64_t hash() const;

  bool operator==(const Tokenizer& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

// Queries and documents of the corpus.
Tokenizer build_tokenizer(const Corpus& corpus, std::size_t max_vocab);

void to_json(nlohmann::json& j, const Tokenizer& t);
void from_json(const nlohmann::json& j, Tokenizer& t);

}  // namespace qpriv

#endif  // QPRIV_TOKENIZER_HPP_
