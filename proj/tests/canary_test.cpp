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


#include "qpriv/canary.hpp"

#include <cmath>
#include <regex>
#include <set>

#include <gmock/gmock.h>
#include <gtest/gtest.h>

namespace qpriv::canary {
namespace {

using ::testing::EndsWith;
using ::testing::HasSubstr;
using ::testing::Not;

Corpus toy_corpus(std::size_t n) {
  CorpusConfig c;
  c.n_docs = n;
  return generate_toy_corpus(c);
}

struct World {
  Corpus corpus = toy_corpus(100);
  Tokenizer tok = lm::build_lm_tokenizer(corpus, 512);
  lm::LmDims dims() const {
    return {.vocab = static_cast<Index>(tok.size()), .d = 24, .blocks = 1, .max_len = 96, .ff = 48};
  }
};

// Fits the generator to a corpus that is mostly copies of one canary.
lm::LmModel memorizer(const World& s, const Canary& c) {
  Corpus base;
  base.examples.assign(s.corpus.examples.begin(), s.corpus.examples.begin() + 8);
  const Corpus data = inject(base, c, 24, 1);
  lm::LmModel m = lm::LmModel::init(s.dims(), 3);
  lm::LmTrainConfig cfg{.epochs = 40, .batch_size = 8};
  cfg.optimizer.learning_rate = 1e-2;
  lm::train_lm(m, s.tok, data, cfg, TrainMode::non_private());
  return m;
}

TEST(MakeCanariesTest, DistinctWellFormedSecrets) {
  const Corpus corpus = toy_corpus(50);
  for (CanaryKind kind : all_kinds()) {
    const auto cs = make_canaries(corpus, kind, 5, 10, 42);
    ASSERT_EQ(cs.size(), 5u);
    std::set<std::string> secrets;
    for (const auto& c : cs) {
      EXPECT_TRUE(std::regex_match(c.secret, std::regex("^[0-9]{10}$")));
      EXPECT_THAT(c.target(), EndsWith(" " + c.secret));
      EXPECT_THAT(c.document, Not(HasSubstr(c.secret)));
      EXPECT_EQ(c.kind, kind);
      EXPECT_EQ(c.repetitions, 10u);
      secrets.insert(c.secret);
    }
    EXPECT_EQ(secrets.size(), 5u);
  }
}

TEST(MakeCanariesTest, DocumentsFollowTheKind) {
  const Corpus corpus = toy_corpus(50);
  std::set<std::string> docs;
  for (const auto& e : corpus.examples) docs.insert(e.document);
  for (const auto& c : make_canaries(corpus, CanaryKind::kRandomSecret, 3, 1, 1)) EXPECT_EQ(c.document, "");
  for (const auto& c : make_canaries(corpus, CanaryKind::kTrueDocPlusSecret, 3, 1, 1))
    EXPECT_TRUE(docs.count(c.document)) << c.document;
  for (const auto& c : make_canaries(corpus, CanaryKind::kRandomDocPlusSecret, 3, 1, 1))
    EXPECT_FALSE(c.document.empty());
  EXPECT_THROW(make_canaries(Corpus{}, CanaryKind::kTrueDocPlusSecret, 1, 1, 1), Error);
}

TEST(MakeCanariesTest, DeterministicInSeed) {
  const Corpus corpus = toy_corpus(20);
  const auto a = make_canaries(corpus, CanaryKind::kTrueDocPlusSecret, 4, 10, 9);
  const auto b = make_canaries(corpus, CanaryKind::kTrueDocPlusSecret, 4, 10, 9);
  const auto c = make_canaries(corpus, CanaryKind::kTrueDocPlusSecret, 4, 10, 10);
  EXPECT_EQ(nlohmann::json(a), nlohmann::json(b));
  EXPECT_NE(nlohmann::json(a), nlohmann::json(c));
}

TEST(InjectTest, AppendsRepetitionsAndShuffles) {
  const Corpus corpus = toy_corpus(1000);
  const auto c = make_canaries(corpus, CanaryKind::kRandomDocPlusSecret, 1, 10, 3).front();
  const Corpus out = inject(corpus, c, 10, 5);
  EXPECT_EQ(out.size(), 1010u);
  EXPECT_EQ(out.provenance, Provenance::kCanaryInjected);
  std::size_t hits = 0, tail_hits = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out.examples[i].query != c.target()) continue;
    ++hits;
    EXPECT_EQ(out.examples[i].document, c.document);
    if (i >= 1000) ++tail_hits;
  }
  EXPECT_EQ(hits, 10u);
  EXPECT_LT(tail_hits, 10u);
  EXPECT_EQ(inject(corpus, c, 10, 5).examples, out.examples);
  EXPECT_THROW(inject(corpus, c, 0, 5), Error);
}

TEST(ExposureTest, Formula) {
  EXPECT_DOUBLE_EQ(exposure(1, 100), std::log2(100.0));
  EXPECT_EQ(exposure(100, 100), 0.0);
  for (std::size_t r = 1; r < 100; ++r) EXPECT_GT(exposure(r, 100), exposure(r + 1, 100));
  EXPECT_THROW(exposure(0, 100), Error);
  EXPECT_THROW(exposure(101, 100), Error);
}

TEST(ExposureTest, UntrainedModelRanksAreUniform) {
  const World s;
  const auto m = lm::LmModel::init({.vocab = static_cast<Index>(s.tok.size()), .d = 8, .blocks = 1,
                                    .max_len = 96, .ff = 16},
                                   11);
  const auto canaries = make_canaries(s.corpus, CanaryKind::kRandomDocPlusSecret, 200, 1, 12);
  std::vector<double> bins(10, 0.0);
  for (std::size_t t = 0; t < canaries.size(); ++t) {
    const auto r = exposure_rank(m, s.tok, canaries[t], 100, 1000 + t);
    ASSERT_GE(r.rank, 1u);
    ASSERT_LE(r.rank, 100u);
    bins[(r.rank - 1) / 10] += 1.0;
  }
  double chi2 = 0.0;
  for (double b : bins) chi2 += (b - 20.0) * (b - 20.0) / 20.0;
  EXPECT_LT(chi2, 27.88);  // chi-square, 9 degrees of freedom, p = 0.001
}

TEST(ExposureTest, MemorizedCanaryRanksFirstAndLeaks) {
  const World s;
  const auto c = make_canaries(s.corpus, CanaryKind::kRandomDocPlusSecret, 1, 1, 77).front();
  const auto m = memorizer(s, c);
  const auto r = exposure_rank(m, s.tok, c, 100, 5);
  EXPECT_EQ(r.rank, 1u);
  EXPECT_DOUBLE_EQ(r.exposure, std::log2(100.0));
  EXPECT_TRUE(extraction_test(m, s.tok, c, 4, {.nucleus_p = 0.01, .max_len = 32}));
}

TEST(ExtractionTest, AbsentSecretDoesNotLeak) {
  const World s;
  const auto m = lm::LmModel::init(s.dims(), 4);
  const auto c = make_canaries(s.corpus, CanaryKind::kRandomSecret, 1, 1, 8).front();
  EXPECT_FALSE(extraction_test(m, s.tok, c, 16, {}));
}

TEST(AuditTest, ProducesRowsForEveryCell) {
  const World s;
  Corpus train;
  train.examples.assign(s.corpus.examples.begin(), s.corpus.examples.begin() + 30);
  const auto init = lm::LmModel::init(s.dims(), 5);
  AuditConfig cfg;
  cfg.repetitions = {2};
  cfg.epsilons = {std::numeric_limits<double>::infinity(), 16.0};
  cfg.trials = 1;
  cfg.candidate_count = 10;
  cfg.samples = 2;
  const lm::LmTrainConfig lm_cfg{.epochs = 1, .batch_size = 8};
  const auto report = audit(init, s.tok, train, cfg, lm_cfg);
  EXPECT_EQ(report.runs.size(), 2u);
  EXPECT_EQ(report.outcomes.size(), 6u);
  EXPECT_EQ(report.rows.size(), 8u);  // (3 kinds + all) x 2 epsilons
  EXPECT_EQ(report.runs[0].training_examples, 36u);
  EXPECT_TRUE(report.runs[0].train.budget.is_infinite());
  EXPECT_LE(report.runs[1].train.budget.epsilon, 16.0 + 1e-3);
  const auto& all = report.row("all", 2, 16.0);
  EXPECT_EQ(all.ranks.size(), 3u);
  for (auto r : all.ranks) {
    EXPECT_GE(r, 1u);
    EXPECT_LE(r, 10u);
  }
  const std::string table = report.table();
  EXPECT_THAT(table, HasSubstr("Rank (rep=2)"));
  EXPECT_THAT(table, HasSubstr("inf"));
  EXPECT_THAT(table, HasSubstr("16"));
  EXPECT_EQ(nlohmann::json(report).dump(), nlohmann::json(audit(init, s.tok, train, cfg, lm_cfg)).dump());
}

TEST(MedianTest, OddAndEven) {
  EXPECT_EQ(median({3, 1, 2}), 2.0);
  EXPECT_EQ(median({4, 1, 2, 3}), 2.5);
  EXPECT_THROW(median({}), Error);
}

}  // namespace
}  // namespace qpriv::canary
