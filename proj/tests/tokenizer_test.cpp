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

#include <gtest/gtest.h>

namespace qpriv {
namespace {

TEST(TokenizerTest, SpecialsHaveFixedIds) {
  const Tokenizer t;
  EXPECT_EQ(t.size(), 5u);
  EXPECT_EQ(t.id("<pad>"), Tokenizer::kPad);
  EXPECT_EQ(t.id("<unk>"), Tokenizer::kUnk);
  EXPECT_EQ(t.id("<bos>"), Tokenizer::kBos);
  EXPECT_EQ(t.id("<sep>"), Tokenizer::kSep);
  EXPECT_EQ(t.id("<eos>"), Tokenizer::kEos);
}

TEST(TokenizerTest, ThreeDistinctTokens) {
  const Tokenizer t = Tokenizer::build({"a b c", "a b", "a"}, 10);
  EXPECT_EQ(t.size(), 8u);
  EXPECT_EQ(t.token(5), "a");
  EXPECT_EQ(t.token(6), "b");
  EXPECT_EQ(t.token(7), "c");
}

TEST(TokenizerTest, KeepsMostFrequentWithLexicographicTies) {
  const Tokenizer t = Tokenizer::build({"zeta beta alpha", "zeta beta alpha", "gamma delta"}, 8);
  ASSERT_EQ(t.size(), 8u);
  EXPECT_EQ(t.token(5), "alpha");
  EXPECT_EQ(t.token(6), "beta");
  EXPECT_EQ(t.token(7), "zeta");
  EXPECT_EQ(t.id("gamma"), Tokenizer::kUnk);
}

TEST(TokenizerTest, CaseFoldAndPunctuation) {
  const Tokenizer t = Tokenizer::build({"Hello, world."}, 20);
  EXPECT_EQ(t.encode("HELLO world ,"), (std::vector<int>{t.id("hello"), t.id("world"), t.id(",")}));
}

TEST(TokenizerTest, RoundTripOnInVocabularyText) {
  const Tokenizer t = Tokenizer::build({"the river is 123 km long ."}, 50);
  const auto ids = t.encode("the river is 123 km long .");
  EXPECT_EQ(t.encode(t.decode(ids)), ids);
  EXPECT_EQ(t.decode(ids), "the river is 123 km long .");
}

TEST(TokenizerTest, OutOfVocabularyIsUnk) {
  const Tokenizer t = Tokenizer::build({"known"}, 50);
  EXPECT_EQ(t.encode("known unknown"), (std::vector<int>{t.id("known"), Tokenizer::kUnk}));
}

TEST(TokenizerTest, DecodeDropsControlTokens) {
  const Tokenizer t = Tokenizer::build({"a b"}, 50);
  EXPECT_EQ(t.decode({Tokenizer::kBos, t.id("a"), Tokenizer::kSep, t.id("b"), Tokenizer::kEos}), "a b");
  EXPECT_EQ(t.decode({Tokenizer::kUnk}), "<unk>");
}

TEST(TokenizerTest, JsonRoundTripAndHash) {
  const Tokenizer t = Tokenizer::build({"x y z y"}, 50);
  const Tokenizer back = nlohmann::json(t).get<Tokenizer>();
  EXPECT_EQ(back, t);
  EXPECT_EQ(back.hash(), t.hash());
  EXPECT_NE(Tokenizer::build({"x y"}, 50).hash(), t.hash());
}

TEST(TokenizerTest, DuplicateTokenIsAnError) {
  EXPECT_THROW(Tokenizer::from_tokens({"a", "a"}), Error);
}

}  // namespace
}  // namespace qpriv
