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


#ifndef QPRIV_LM_HPP_
#define QPRIV_LM_HPP_

// Tiny pre-norm transformer decoder that models p(query | document).
//
// A training sequence is
//   <bos> generate_query : <document tokens> <sep> <query tokens> <eos>
// and the loss covers the query tokens and <eos> only.

#include <cstdint>
#include <filesystem>
#include <vector>

#include <nlohmann/json.hpp>

#include "qpriv/accountant.hpp"
#include "qpriv/autodiff.hpp"
#include "qpriv/dataset.hpp"
#include "qpriv/dp.hpp"
#include "qpriv/rng.hpp"
#include "qpriv/tokenizer.hpp"
#include "qpriv/training.hpp"

namespace qpriv::lm {

struct LmDims {
  Index vocab = 0;
  Index d = 64;
  Index blocks = 2;
  Index max_len = 256;
  Index ff = 256;  // feed-forward hidden width

  void validate() const;
};

void to_json(nlohmann::json& j, const LmDims& d);
void from_json(const nlohmann::json& j, LmDims& d);

struct TrainingSequence {
  std::vector<int> input_ids;   // prompt
  std::vector<int> target_ids;  // query tokens + <eos>
  std::vector<bool> loss_mask;  // over input_ids ++ target_ids

  std::vector<int> tokens() const;
};

// build_tokenizer over the corpus plus the prompt prefix, which the
// model must be able to read.
Tokenizer build_lm_tokenizer(const Corpus& corpus, std::size_t max_vocab);

// <bos> generate_query : doc[:max_input] <sep>
std::vector<int> encode_prompt(const Tokenizer& tok, std::string_view doc, std::size_t max_input);

TrainingSequence encode_pair(const Tokenizer& tok, std::string_view doc, std::string_view query,
                             std::size_t max_input, std::size_t max_target);

class LmModel {
 public:
  LmModel() = default;
  // Weights ~ N(0, 1/fan_in); residual output projections are further scaled
  // by 1/sqrt(2 * blocks); norm gains start at one.
  static LmModel init(const LmDims& dims, std::uint64_t seed);

  const LmDims& dims() const { return dims_; }
  ad::ParamSet& params() { return params_; }
  const ad::ParamSet& params() const { return params_; }

  // Next-token log-probabilities at the given positions of `ids` (row r is
  // the distribution of ids[positions[r] + 1]), recorded on `tape`.
  ad::Var log_probs(ad::Tape& tape, const std::vector<int>& ids,
                    const std::vector<int>& positions) const;

  // Untaped forward pass: one row of next-token log-probabilities per
  // position.
  Matrix log_probs_all(const std::vector<int>& ids) const;

 private:
  LmDims dims_;
  ad::ParamSet params_;
};

// Incremental decoding with cached keys and values. Produces the same
// distributions as log_probs_all up to rounding.
class Decoder {
 public:
  explicit Decoder(const LmModel& model);
  // Appends one token and returns the log-probabilities of the next one.
  RowVector push(int token);
  // Appends all tokens; returns the distribution after the last one.
  RowVector push_all(const std::vector<int>& tokens);
  std::size_t length() const { return length_; }

 private:
  const LmModel& model_;
  std::vector<Matrix> keys_;
  std::vector<Matrix> values_;
  std::size_t length_ = 0;
};

// Mean negative log-likelihood over masked positions, one scalar per
// sequence. Trailing padding is harmless: it sits after every masked
// position and attention is causal.
ad::Var sequence_loss(ad::Tape& tape, const LmModel& model, const TrainingSequence& seq);
std::vector<ad::Var> lm_loss(ad::Tape& tape, const LmModel& model,
                             const std::vector<TrainingSequence>& batch);

struct LmTrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  dp::OptimizerConfig optimizer;
  std::size_t max_input = 200;
  std::size_t max_target = 48;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const LmTrainConfig& c);
void from_json(const nlohmann::json& j, LmTrainConfig& c);


// Steps per epoch is round(n / batch_size), at least one. Non-private
// training shuffles and partitions each epoch. DP training draws every step
// as a Poisson sample with q = batch_size / n and feeds the optimizer only
// privatized gradients.
TrainReport train_sequences(LmModel& model, const std::vector<TrainingSequence>& data,
                            const LmTrainConfig& config, const TrainMode& mode);

TrainReport train_lm(LmModel& model, const Tokenizer& tok, const Corpus& corpus,
                     const LmTrainConfig& config, const TrainMode& mode);

// Public warm start: every document is paired with a random contiguous span
// of itself (2 to 6 tokens) as the target, so the model learns the prompt
// format and to copy from the document. Never sees queries.
TrainReport pretrain_lm(LmModel& model, const Tokenizer& tok, const Corpus& public_corpus,
                        const LmTrainConfig& config);

struct SamplerConfig {
  double nucleus_p = 0.8;
  std::size_t max_len = 32;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const SamplerConfig& c);
void from_json(const nlohmann::json& j, SamplerConfig& c);

// Sorts probabilities in descending order (ties by index), keeps the
// shortest prefix whose mass reaches p (at least the top entry),
// renormalizes and draws one index with a single uniform.
int nucleus_pick(const RowVector& probs, double p, Rng& rng);

// Tokens generated after `context`, excluding the final <eos>.
std::vector<int> nucleus_sample(const LmModel& model, const std::vector<int>& context,
                                const SamplerConfig& config, Rng& rng);

struct SynthesisResult {
  Corpus corpus;
  std::size_t empty_generations = 0;
};

// per_doc samples for every unique document of `docs`, in corpus order. The
// i-th query for document D gets query_id "syn-D-i".
SynthesisResult synthesize_dataset(const LmModel& model, const Tokenizer& tok, const Corpus& docs,
                                   std::size_t per_doc, const SamplerConfig& config,
                                   std::size_t max_input);

double sequence_log_prob(const LmModel& model, const std::vector<int>& context,
                         const std::vector<int>& continuation);

void save_lm(const std::filesystem::path& path, const LmModel& model, const Tokenizer& tok);
std::pair<LmModel, Tokenizer> load_lm(const std::filesystem::path& path);
nlohmann::json lm_checkpoint(const LmModel& model, const Tokenizer& tok);
std::pair<LmModel, Tokenizer> lm_from_checkpoint(const nlohmann::json& j);

// Test hook: wraps explicit parameters.
LmModel make_lm(const LmDims& dims, ad::ParamSet params);

}  // namespace qpriv::lm

#endif  // QPRIV_LM_HPP_
