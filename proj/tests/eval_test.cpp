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


#include "qpriv/eval.hpp"

#include <algorithm>
#include <cmath>

#include <gmock/gmock.h>
#include <gtest/gtest.h>

#include "qpriv/rng.hpp"

namespace qpriv::eval {
namespace {

using ::testing::ElementsAre;

Matrix random_unit_rows(Index n, Index d, Rng& rng) {
  Matrix m(n, d);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  m.rowwise().normalize();
  return m;
}

std::vector<std::string> ids(std::size_t n, const std::string& prefix = "d") {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(1000 + i));
  return out;
}

TEST(IndexTest, DuplicateIdsKeepFirstRow) {
  Matrix v(3, 2);
  v << 1, 0, 0, 1, -1, 0;
  const auto index = make_index({"a", "b", "a"}, v);
  EXPECT_THAT(index.doc_ids, ElementsAre("a", "b"));
  EXPECT_EQ(index.vectors.row(0), v.row(0));
}

TEST(IndexTest, RejectsNonUnitRows) {
  Matrix v(1, 2);
  v << 1, 1;
  EXPECT_THROW(make_index({"a"}, v), Error);
}

TEST(IndexTest, BuildIndexEncodesEachUniqueDocument) {
  CorpusConfig cc;
  cc.n_docs = 50;
  cc.queries_per_doc = 2;
  const Corpus corpus = generate_toy_corpus(cc);
  const Tokenizer tok = build_tokenizer(corpus, 512);
  const auto enc = retriever::EncoderModel::init({.vocab = static_cast<Index>(tok.size()), .d = 8}, 1);
  const auto index = build_index(enc, tok, corpus);
  ASSERT_EQ(index.doc_ids.size(), 50u);
  const auto& e = corpus.examples[0];
  EXPECT_EQ(index.doc_ids[0], e.doc_id);
  EXPECT_TRUE(index.vectors.row(0).isApprox(enc.encode(tok.encode(e.document)), 1e-12));
}

TEST(SearchTest, StoredVectorComesFirstWithScoreOne) {
  Rng rng(3);
  const auto index = make_index(ids(20), random_unit_rows(20, 8, rng));
  const auto hits = search(index, index.vectors.row(7), 3);
  ASSERT_EQ(hits.size(), 3u);
  EXPECT_EQ(hits[0].doc_id, index.doc_ids[7]);
  EXPECT_NEAR(hits[0].score, 1.0, 1e-12);
}

TEST(SearchTest, HandVectors) {
  Matrix v(3, 2);
  v << 1, 0, 0, 1, std::sqrt(0.5), std::sqrt(0.5);
  const auto index = make_index({"x", "y", "z"}, v);
  RowVector q(2);
  q << 0.6, 0.8;
  // x: 0.6, y: 0.8, z: 1.4 / sqrt(2) = 0.98995
  const auto hits = search(index, q, 3);
  ASSERT_EQ(hits.size(), 3u);
  EXPECT_EQ(hits[0].doc_id, "z");
  EXPECT_EQ(hits[1].doc_id, "y");
  EXPECT_EQ(hits[2].doc_id, "x");
  EXPECT_NEAR(hits[0].score, 1.4 / std::sqrt(2.0), 1e-12);
  EXPECT_EQ(rank_of(index, q, "x"), 3u);
}

TEST(SearchTest, TiesBreakByDocId) {
  Matrix v(3, 2);
  v << 0, 1, 0, 1, 1, 0;
  const auto index = make_index({"m", "b", "k"}, v);
  RowVector q(2);
  q << 0, 1;
  const auto hits = search(index, q, 10);
  ASSERT_EQ(hits.size(), 3u);  // k > n clamps
  EXPECT_EQ(hits[0].doc_id, "b");
  EXPECT_EQ(hits[1].doc_id, "m");
  EXPECT_EQ(rank_of(index, q, "m"), 2u);
  EXPECT_EQ(rank_of(index, q, "b"), 1u);
  EXPECT_THROW(search(index, q, 0), Error);
}

TEST(SearchTest, AgreesWithFullSortAndRank) {
  Rng rng(11);
  const auto index = make_index(ids(60), random_unit_rows(60, 5, rng));
  for (int t = 0; t < 20; ++t) {
    const RowVector q = random_unit_rows(1, 5, rng).row(0);
    const auto hits = search(index, q, 60);
    ASSERT_EQ(hits.size(), 60u);
    std::vector<double> all(60);
    for (Index i = 0; i < 60; ++i) all[i] = index.vectors.row(i).dot(q);
    std::sort(all.rbegin(), all.rend());
    for (std::size_t i = 0; i < 60; ++i) {
      EXPECT_EQ(hits[i].score, all[i]);
      EXPECT_EQ(rank_of(index, q, hits[i].doc_id), i + 1);
    }
  }
}

TEST(MetricTest, ClosedForms) {
  EXPECT_EQ(ndcg_at_k(1), 1.0);
  EXPECT_EQ(ndcg_at_k(3), 0.5);
  EXPECT_EQ(ndcg_at_k(11, 10), 0.0);
  EXPECT_EQ(ndcg_at_k(std::nullopt), 0.0);
  EXPECT_EQ(recall_at_k(10, 10), 1.0);
  EXPECT_EQ(recall_at_k(11, 10), 0.0);
  EXPECT_DOUBLE_EQ(mean_recall_at_k({1, 5, 20}), 2.0 / 3.0);
}

TEST(MetricTest, RecallHitIffNdcgPositive) {
  for (std::size_t r = 1; r <= 30; ++r) EXPECT_EQ(recall_at_k(r) == 1.0, ndcg_at_k(r) > 0.0) << r;
}

TEST(BleuTest, IdentityAndDisjoint) {
  const std::vector<std::string> refs{"the cat sat on the mat", "a dog ran far away today"};
  EXPECT_DOUBLE_EQ(bleu(refs, refs), 1.0);
  EXPECT_EQ(bleu({"the cat sat"}, {"big red dogs"}), 0.0);
}

TEST(BleuTest, HandMixedCase) {
  // h = 3, r = 4; every precision is 1 after smoothing; BP = exp(1 - 4/3).
  EXPECT_EQ(bleu({"the cat sat down"}, {"the cat sat"}), 0.7165313105737893);
}

TEST(BleuTest, HandPartialMatch) {
  // ref "a b c d", hyp "a b x d": p1 = 3/4, p2 = (1+1)/(3+1), p3 = 1/3,
  // p4 = 1/2, no brevity penalty.
  const double expected = std::exp((std::log(0.75) + std::log(0.5) + std::log(1.0 / 3.0) + std::log(0.5)) / 4.0);
  EXPECT_DOUBLE_EQ(bleu({"a b c d"}, {"a b x d"}), expected);
}

TEST(BleuTest, ClipsRepeatedUnigrams) {
  // p1 = 2/4 (two "the" + "cat" clipped), higher orders smoothed.
  const double v = bleu({"the cat"}, {"the the the cat"});
  const double expected = std::exp((std::log(1.0 / 4.0 * 2.0) + std::log(2.0 / 4.0) + std::log(1.0 / 3.0) +
                                    std::log(1.0 / 2.0)) / 4.0);
  EXPECT_DOUBLE_EQ(v, expected);
}

TEST(BleuTest, SymmetricUnderPairReordering) {
  const std::vector<std::string> r{"one two three", "four five six seven", "eight nine"};
  const std::vector<std::string> h{"one two four", "four five six", "nine eight ten"};
  EXPECT_DOUBLE_EQ(bleu(r, h), bleu({r[2], r[0], r[1]}, {h[2], h[0], h[1]}));
  EXPECT_THROW(bleu(r, {"x"}), Error);
}

TEST(EvaluateTest, PerfectOracleScoresOne) {
  const std::size_t n = 12;
  const Matrix eye = Matrix::Identity(n, n);
  const auto report = evaluate_embeddings(make_index(ids(n), eye), eye, ids(n, "q"), ids(n));
  EXPECT_EQ(report.ndcg, 1.0);
  EXPECT_EQ(report.recall, 1.0);
  EXPECT_EQ(report.n_queries, n);
}

TEST(EvaluateTest, SingleDocumentScoresOne) {
  Matrix v(1, 2);
  v << 0, 1;
  Matrix q(1, 2);
  q << 1, 0;
  const auto report = evaluate_embeddings(make_index({"d"}, v), q, {"q"}, {"d"});
  EXPECT_EQ(report.ndcg, 1.0);
  EXPECT_EQ(report.recall, 1.0);
}

TEST(EvaluateTest, RandomVectorsRecallNearTenOverN) {
  Rng rng(5);
  const Index n = 200, m = 4000;
  const auto index = make_index(ids(n), random_unit_rows(n, 32, rng));
  std::vector<std::string> pos;
  for (Index i = 0; i < m; ++i) pos.push_back(index.doc_ids[rng.below(n)]);
  const auto report = evaluate_embeddings(index, random_unit_rows(m, 32, rng), ids(m, "q"), pos);
  const double p = 10.0 / n, se = std::sqrt(p * (1 - p) / m);
  EXPECT_NEAR(report.recall, p, 4 * se);
  EXPECT_DOUBLE_EQ(report.recall, mean_recall_at_k(report.ranks));
}

TEST(EvaluateTest, JsonAndCsv) {
  EvalReport r{.k = 10, .ndcg = 0.5, .recall = 1.0, .n_queries = 1, .query_ids = {"q1"}, .ranks = {3}};
  const nlohmann::json j = r;
  const auto back = j.get<EvalReport>();
  EXPECT_EQ(back.ranks, r.ranks);
  EXPECT_EQ(back.ndcg, 0.5);
  EXPECT_EQ(r.ranks_csv(), "query_id,rank\nq1,3\n");
}

}  // namespace
}  // namespace qpriv::eval
