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

#include "qpriv/lm.hpp"

#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

namespace qpriv::lm {
namespace {

struct Fixture {
  Corpus corpus;
  Tokenizer tok;
  LmDims dims;
};

Fixture toy(std::size_t n_docs, Index d = 16) {
  CorpusConfig config;
  config.n_docs = n_docs;
  Fixture f;
  f.corpus = generate_toy_corpus(config);
  f.tok = build_lm_tokenizer(f.corpus, 512);
  f.dims.vocab = static_cast<Index>(f.tok.size());
  f.dims.d = d;
  f.dims.blocks = 1;
  f.dims.ff = 2 * d;
  f.dims.max_len = 64;
  return f;
}

// No blocks, d = V = 3, identity embedding, zero positions: the
// next-token logits after token i are c * a.row(i) with
// c = 1 / sqrt(1/3 + 1e-6) from the final RMS norm.
LmModel hand_model(const Matrix& a) {
  LmDims dims{.vocab = 3, .d = 3, .blocks = 0, .max_len = 8, .ff = 1};
  ad::ParamSet p;
  p.add("tok_emb", Matrix::Identity(3, 3));
  p.add("pos_emb", Matrix::Zero(8, 3));
  p.add("ln_f", Matrix::Ones(1, 3));
  p.add("out_proj", a);
  return make_lm(dims, std::move(p));
}

double hand_log_softmax(const Matrix& a, int row, int col) {
  const double c = 1.0 / std::sqrt(1.0 / 3.0 + 1e-6);
  double z = 0.0;
  for (int j = 0; j < 3; ++j) z += std::exp(c * a(row, j));
  return c * a(row, col) - std::log(z);
}

Matrix hand_weights() {
  Matrix a(3, 3);
  a << 0.2, 1.1, -0.4,
       0.7, -0.3, 0.9,
       -1.2, 0.5, 0.1;
  return a;
}

TEST(EncodePairTest, PromptAndTargetLayout) {
  const auto f = toy(5);
  const auto s = encode_pair(f.tok, "paris is big", "where", 100, 10);
  EXPECT_EQ(s.input_ids.front(), Tokenizer::kBos);
  EXPECT_EQ(f.tok.decode({s.input_ids[1], s.input_ids[2]}), "generate_query :");
  EXPECT_EQ(s.input_ids.back(), Tokenizer::kSep);
  EXPECT_EQ(s.target_ids.back(), Tokenizer::kEos);
  EXPECT_EQ(s.loss_mask.size(), s.input_ids.size() + s.target_ids.size());
}

TEST(EncodePairTest, EmptyQueryHasOnlyEos) {
  const auto f = toy(5);
  const auto s = encode_pair(f.tok, "a document", "", 100, 10);
  EXPECT_EQ(s.target_ids, std::vector<int>{Tokenizer::kEos});
  EXPECT_EQ(std::count(s.loss_mask.begin(), s.loss_mask.end(), true), 1);
}

TEST(EncodePairTest, TruncatesDocumentAndQuery) {
  const auto f = toy(5);
  const auto s = encode_pair(f.tok, "a b c d e f g h", "one two three four five", 3, 2);
  EXPECT_EQ(s.input_ids.size(), 3u + 3u + 1u);
  EXPECT_EQ(s.target_ids.size(), 3u);
  EXPECT_EQ(std::count(s.loss_mask.begin(), s.loss_mask.end(), true), 3);
  for (std::size_t i = 0; i < s.loss_mask.size(); ++i) EXPECT_EQ(s.loss_mask[i], i >= s.input_ids.size());
}

TEST(LmModelTest, DistributionsNormalize) {
  const auto f = toy(10);
  const auto m = LmModel::init(f.dims, 3);
  const auto s = encode_pair(f.tok, f.corpus.examples[0].document, f.corpus.examples[0].query, 60, 20);
  const Matrix lp = m.log_probs_all(s.tokens());
  for (Index i = 0; i < lp.rows(); ++i) EXPECT_NEAR(lp.row(i).array().exp().sum(), 1.0, 1e-9);
}

TEST(LmModelTest, Causality) {
  const auto f = toy(10);
  const auto m = LmModel::init(f.dims, 4);
  auto ids = encode_pair(f.tok, f.corpus.examples[1].document, f.corpus.examples[1].query, 60, 20).tokens();
  const Matrix before = m.log_probs_all(ids);
  for (std::size_t t : {std::size_t{3}, ids.size() / 2, ids.size() - 1}) {
    auto changed = ids;
    changed[t] = (changed[t] + 7) % static_cast<int>(f.tok.size());
    const Matrix after = m.log_probs_all(changed);
    EXPECT_EQ(before.topRows(t), after.topRows(t)) << t;
    EXPECT_NE(before.row(t), after.row(t));
  }
}

TEST(LmModelTest, DecoderMatchesFullForward) {
  const auto f = toy(10);
  const auto m = LmModel::init(f.dims, 5);
  const auto ids = encode_pair(f.tok, f.corpus.examples[2].document, f.corpus.examples[2].query, 60, 20).tokens();
  const Matrix full = m.log_probs_all(ids);
  Decoder dec(m);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const RowVector row = dec.push(ids[i]);
    EXPECT_LT((row - full.row(static_cast<Index>(i))).cwiseAbs().maxCoeff(), 1e-10) << i;
  }
}

TEST(LmModelTest, SequenceTooLongIsAnError) {
  auto f = toy(5);
  f.dims.max_len = 4;
  const auto m = LmModel::init(f.dims, 1);
  EXPECT_THROW(m.log_probs_all({2, 5, 6, 7, 8}), Error);
}

TEST(LmLossTest, UniformModelGivesLogV) {
  const auto f = toy(10);
  auto m = LmModel::init(f.dims, 6);
  m.params()["tok_emb"].setZero();
  ad::Tape t(m.params());
  const auto s = encode_pair(f.tok, f.corpus.examples[0].document, f.corpus.examples[0].query, 60, 20);
  EXPECT_NEAR(sequence_loss(t, m, s).item(), std::log(static_cast<double>(f.tok.size())), 1e-12);
}

TEST(LmLossTest, PerfectPredictionsGiveZero) {
  Matrix a = Matrix::Constant(3, 3, -50.0);
  a(0, 1) = a(1, 2) = a(2, 0) = 50.0;  // 0 -> 1 -> 2 -> 0
  const auto m = hand_model(a);
  TrainingSequence s{{0}, {1, 2, 0}, {false, true, true, true}};
  ad::Tape t(m.params());
  EXPECT_LT(sequence_loss(t, m, s).item(), 1e-12);
}

TEST(LmLossTest, HandComputedTwoPositionTarget) {
  const Matrix a = hand_weights();
  const auto m = hand_model(a);
  TrainingSequence s{{0}, {1, 2}, {false, true, true}};
  ad::Tape t(m.params());
  const double want = -(hand_log_softmax(a, 0, 1) + hand_log_softmax(a, 1, 2)) / 2.0;
  EXPECT_NEAR(sequence_loss(t, m, s).item(), want, 1e-12);
}

TEST(LmLossTest, AllFalseMaskIsAnError) {
  const auto m = hand_model(hand_weights());
  TrainingSequence s{{0}, {1}, {false, false}};
  ad::Tape t(m.params());
  EXPECT_THROW(sequence_loss(t, m, s), Error);
}

TEST(LmLossTest, TrailingPaddingDoesNotChangeLoss) {
  const auto f = toy(10);
  const auto m = LmModel::init(f.dims, 7);
  auto s = encode_pair(f.tok, f.corpus.examples[0].document, f.corpus.examples[0].query, 60, 20);
  ad::Tape t1(m.params());
  const double plain = sequence_loss(t1, m, s).item();
  s.target_ids.insert(s.target_ids.end(), 3, Tokenizer::kPad);
  s.loss_mask.insert(s.loss_mask.end(), 3, false);
  ad::Tape t2(m.params());
  EXPECT_EQ(sequence_loss(t2, m, s).item(), plain);
}

TEST(LmLossTest, GradientCheckFiveSeeds) {
  const auto f = toy(10);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto m = LmModel::init(f.dims, seed);
    const auto& e = f.corpus.examples[seed];
    const auto s = encode_pair(f.tok, e.document, e.query, 60, 20);
    const double err = ad::gradient_check(
        [&](ad::Tape& t) { return sequence_loss(t, m, s); }, m.params(),
        {.step = 1e-5, .coordinates = 100, .seed = seed});
    EXPECT_LT(err, 1e-4) << "seed " << seed;
  }
}

TEST(TrainLmTest, NonPrivateReducesTrainingLoss) {
  const auto f = toy(10);
  auto m = LmModel::init(f.dims, 8);
  LmTrainConfig c{.epochs = 1, .batch_size = 10};
  c.optimizer.learning_rate = 0.01;
  auto loss = [&] {
    ad::Tape t(m.params());
    double total = 0;
    for (const auto& e : f.corpus.examples) {
      total += sequence_loss(t, m, encode_pair(f.tok, e.document, e.query, c.max_input, c.max_target)).item();
    }
    return total;
  };
  const double before = loss();
  const auto r = train_lm(m, f.tok, f.corpus, c, TrainMode::non_private());
  EXPECT_LT(loss(), before);
  EXPECT_TRUE(r.budget.is_infinite());
  EXPECT_EQ(r.steps, 1u);
}

TEST(TrainLmTest, ZeroLearningRateLeavesParams) {
  const auto f = toy(10);
  auto m = LmModel::init(f.dims, 9);
  const Vector before = m.params().flat();
  LmTrainConfig c{.epochs = 1, .batch_size = 5};
  c.optimizer.kind = dp::OptimizerKind::kSgd;
  c.optimizer.learning_rate = 0.0;
  train_lm(m, f.tok, f.corpus, c, TrainMode::non_private());
  EXPECT_EQ(m.params().flat(), before);
  train_lm(m, f.tok, f.corpus, c, TrainMode::private_({.clip_norm = 0.1, .noise_multiplier = 1.0}, 1e-3));
  EXPECT_EQ(m.params().flat(), before);
}

TEST(TrainLmTest, DpReportsAccountantEpsilon) {
  const auto f = toy(20);
  auto m = LmModel::init(f.dims, 10);
  LmTrainConfig c{.epochs = 2, .batch_size = 5};
  const double delta = default_delta(20);
  const auto r = train_lm(m, f.tok, f.corpus, c,
                          TrainMode::private_({.clip_norm = 0.1, .noise_multiplier = 1.3}, delta));
  EXPECT_EQ(r.steps, 8u);
  EXPECT_EQ(r.raw_steps, 0u);
  EXPECT_EQ(r.private_steps, 8u);
  const AccountantState s{default_orders(), 0.25, 1.3, 8};
  EXPECT_EQ(r.budget.epsilon, epsilon_for(s, delta).epsilon);
  EXPECT_EQ(r.budget.delta, delta);
}

TEST(TrainLmTest, DpWithoutNoiseIsAnError) {
  const auto f = toy(10);
  auto m = LmModel::init(f.dims, 11);
  EXPECT_THROW(train_lm(m, f.tok, f.corpus, {.epochs = 1, .batch_size = 5},
                        TrainMode::private_({.clip_norm = 0.1, .noise_multiplier = 0.0}, 1e-3)),
               Error);
}

TEST(TrainLmTest, Deterministic) {
  const auto f = toy(10);
  LmTrainConfig c{.epochs = 1, .batch_size = 4, .seed = 3};
  auto a = LmModel::init(f.dims, 12);
  auto b = LmModel::init(f.dims, 12);
  const auto mode = TrainMode::private_({.clip_norm = 0.1, .noise_multiplier = 1.0, .seed = 4}, 1e-3);
  train_lm(a, f.tok, f.corpus, c, mode);
  train_lm(b, f.tok, f.corpus, c, mode);
  EXPECT_EQ(a.params().flat(), b.params().flat());
}

TEST(PretrainTest, LearnsToCopySpans) {
  const auto f = toy(40);
  auto m = LmModel::init(f.dims, 13);
  LmTrainConfig c{.epochs = 3, .batch_size = 8};
  c.optimizer.learning_rate = 0.01;
  const auto r = pretrain_lm(m, f.tok, f.corpus, c);
  ASSERT_EQ(r.epoch_losses.size(), 3u);
  EXPECT_LT(r.epoch_losses.back(), r.epoch_losses.front());
}

TEST(NucleusTest, MonteCarloFrequencies) {
  RowVector p(3);
  p << 0.5, 0.3, 0.2;
  Rng rng(21);
  const int draws = 100000;
  std::array<int, 3> counts{};
  for (int i = 0; i < draws; ++i) ++counts[nucleus_pick(p, 0.8, rng)];
  const double want[3] = {0.625, 0.375, 0.0};
  for (int k = 0; k < 3; ++k) {
    const double freq = static_cast<double>(counts[k]) / draws;
    const double sd = std::sqrt(want[k] * (1 - want[k]) / draws);
    EXPECT_LE(std::abs(freq - want[k]), 3 * sd + 1e-15) << k;
  }
}

TEST(NucleusTest, SmallPIsGreedy) {
  RowVector p(4);
  p << 0.1, 0.45, 0.3, 0.15;
  Rng rng(22);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(nucleus_pick(p, 0.2, rng), 1);
}

TEST(NucleusTest, FullPSamplesEverything) {
  RowVector p(3);
  p << 0.6, 0.3, 0.1;
  Rng rng(23);
  std::array<int, 3> counts{};
  for (int i = 0; i < 30000; ++i) ++counts[nucleus_pick(p, 1.0, rng)];
  EXPECT_NEAR(counts[2] / 30000.0, 0.1, 0.01);
}

TEST(NucleusTest, SampleIsDeterministicAndBounded) {
  const auto f = toy(10);
  const auto m = LmModel::init(f.dims, 14);
  const auto prompt = encode_prompt(f.tok, f.corpus.examples[0].document, 60);
  SamplerConfig c{.nucleus_p = 0.9, .max_len = 5};
  Rng a(1), b(1);
  const auto x = nucleus_sample(m, prompt, c, a);
  EXPECT_EQ(x, nucleus_sample(m, prompt, c, b));
  EXPECT_LE(x.size(), 5u);
}

TEST(SynthesizeTest, CardinalityAndIds) {
  const auto f = toy(12);
  const auto m = LmModel::init(f.dims, 15);
  const auto r1 = synthesize_dataset(m, f.tok, f.corpus, 1, {.max_len = 6}, 60);
  EXPECT_EQ(r1.corpus.size(), 12u);
  EXPECT_EQ(r1.corpus.provenance, Provenance::kSynthetic);
  const auto r3 = synthesize_dataset(m, f.tok, f.corpus, 3, {.max_len = 6}, 60);
  ASSERT_EQ(r3.corpus.size(), 36u);
  EXPECT_EQ(r3.corpus.examples[4].query_id, "syn-" + f.corpus.examples[1].doc_id + "-1");
  EXPECT_EQ(r3.corpus.examples[4].doc_id, f.corpus.examples[1].doc_id);
  EXPECT_EQ(r3.corpus.examples[4].document, f.corpus.examples[1].document);
  r3.corpus.validate();
}

TEST(SynthesizeTest, SameSeedSameCorpus) {
  const auto f = toy(8);
  const auto m = LmModel::init(f.dims, 16);
  const SamplerConfig c{.max_len = 6, .seed = 9};
  EXPECT_EQ(synthesize_dataset(m, f.tok, f.corpus, 2, c, 60).corpus.examples,
            synthesize_dataset(m, f.tok, f.corpus, 2, c, 60).corpus.examples);
}

TEST(SynthesizeTest, EmptyGenerationsBecomeUnk) {
  // Every embedding points the same way, with <eos> 50 times longer, so
  // <eos> always wins.
  const auto f = toy(4);
  LmDims dims{.vocab = static_cast<Index>(f.tok.size()), .d = 4, .blocks = 0, .max_len = 64, .ff = 1};
  ad::ParamSet p;
  Matrix emb = Matrix::Zero(dims.vocab, 4);
  emb.col(0).setOnes();
  emb(Tokenizer::kEos, 0) = 50.0;
  p.add("tok_emb", emb);
  p.add("pos_emb", Matrix::Zero(64, 4));
  p.add("ln_f", Matrix::Ones(1, 4));
  p.add("out_proj", Matrix::Identity(4, 4));
  const auto m = make_lm(dims, std::move(p));
  const auto r = synthesize_dataset(m, f.tok, f.corpus, 1, {}, 60);
  EXPECT_EQ(r.empty_generations, 4u);
  for (const auto& e : r.corpus.examples) EXPECT_EQ(e.query, "<unk>");
}

TEST(SequenceLogProbTest, UniformModel) {
  const auto f = toy(5);
  auto m = LmModel::init(f.dims, 17);
  m.params()["tok_emb"].setZero();
  EXPECT_NEAR(sequence_log_prob(m, {2, 5}, {6, 7, 8}), -3.0 * std::log(static_cast<double>(f.tok.size())),
              1e-10);
}

TEST(SequenceLogProbTest, ChainRule) {
  const auto f = toy(5);
  const auto m = LmModel::init(f.dims, 18);
  const std::vector<int> ctx = {2, 9, 10}, c1 = {11, 12}, c2 = {13};
  std::vector<int> ctx1 = ctx;
  ctx1.insert(ctx1.end(), c1.begin(), c1.end());
  EXPECT_NEAR(sequence_log_prob(m, ctx, {11, 12, 13}),
              sequence_log_prob(m, ctx, c1) + sequence_log_prob(m, ctx1, c2), 1e-10);
}

TEST(SequenceLogProbTest, HandModel) {
  const Matrix a = hand_weights();
  const auto m = hand_model(a);
  const double want = hand_log_softmax(a, 2, 0) + hand_log_softmax(a, 0, 1) + hand_log_softmax(a, 1, 1);
  EXPECT_NEAR(sequence_log_prob(m, {2}, {0, 1, 1}), want, 1e-12);
}

TEST(CheckpointTest, RoundTrip) {
  const auto f = toy(5);
  const auto m = LmModel::init(f.dims, 19);
  const auto path = std::filesystem::temp_directory_path() / "qpriv_lm_ckpt.json";
  save_lm(path, m, f.tok);
  const auto [back, tok] = load_lm(path);
  std::filesystem::remove(path);
  EXPECT_EQ(tok, f.tok);
  EXPECT_EQ(back.params().flat(), m.params().flat());
  EXPECT_EQ(nlohmann::json(back.dims()), nlohmann::json(m.dims()));
}

TEST(CheckpointTest, RejectsTamperedVocabulary) {
  const auto f = toy(5);
  auto j = lm_checkpoint(LmModel::init(f.dims, 20), f.tok);
  j["vocab"][0] = "tampered";
  EXPECT_THROW(lm_from_checkpoint(j), Error);
  auto k = lm_checkpoint(LmModel::init(f.dims, 20), f.tok);
  k["kind"] = "encoder";
  EXPECT_THROW(lm_from_checkpoint(k), Error);
}

}  // namespace
}  // namespace qpriv::lm
