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


#ifndef QPRIV_RETRIEVER_HPP_
#define QPRIV_RETRIEVER_HPP_

// Shared dual encoder: mean-pooled token embeddings, a tanh dense layer and
// a linear projection onto the unit sphere. Queries and documents go through
// the same parameters.

#include <cstdint>
#include <filesystem>
#include <vector>

#include <nlohmann/json.hpp>

#include "qpriv/autodiff.hpp"
#include "qpriv/dataset.hpp"
#include "qpriv/dp.hpp"
#include "qpriv/tokenizer.hpp"
#include "qpriv/training.hpp"

namespace qpriv::retriever {

struct EncoderDims {
  Index vocab = 0;
  Index d = 64;
  Index d_out = 64;

  void validate() const;
};

void to_json(nlohmann::json& j, const EncoderDims& d);
void from_json(const nlohmann::json& j, EncoderDims& d);

class EncoderModel {
 public:
  EncoderModel() = default;
  static EncoderModel init(const EncoderDims& dims, std::uint64_t seed);
  static EncoderModel from_params(const EncoderDims& dims, ad::ParamSet params);

  const EncoderDims& dims() const { return dims_; }
  ad::ParamSet& params() { return params_; }
  const ad::ParamSet& params() const { return params_; }

  // One unit-norm row per token list. Every list must be nonempty.
  ad::Var encode(ad::Tape& tape, const std::vector<std::vector<int>>& token_lists) const;
  Matrix encode(const std::vector<std::vector<int>>& token_lists) const;
  RowVector encode(const std::vector<int>& tokens) const;

 private:
  EncoderDims dims_;
  ad::ParamSet params_;
};

// Tokenizes each text (an all-unknown text becomes a single <unk>) and
// encodes in chunks. Row i belongs to texts[i].
Matrix encode_texts(const EncoderModel& model, const Tokenizer& tok,
                    const std::vector<std::string>& texts);

struct SimilarityConfig {
  double temperature = 1.0;

  void validate() const;
};

// L_i = -log softmax_j(s_ij / tau)_i with s_ij = cos(q_i, d_j); one scalar
// per pair. All queries and documents of the batch share one tape, so L_i
// depends on every document in the batch.
std::vector<ad::Var> in_batch_softmax_loss(ad::Tape& tape, const EncoderModel& model,
                                           const std::vector<std::vector<int>>& queries,
                                           const std::vector<std::vector<int>>& docs,
                                           const SimilarityConfig& sim);

std::vector<ad::Var> in_batch_softmax_loss(ad::Tape& tape, const EncoderModel& model,
                                           const Tokenizer& tok, const std::vector<Example>& batch,
                                           const SimilarityConfig& sim);

// How direct DP training bounds the sensitivity of the summed, clipped
// per-pair gradients.
//
// kCoupled: a pair also enters the softmax denominator of every other pair
// in its batch, so adding it moves up to every clipped term. Batches are
// capped at batch_cap(B) pairs (the kept subset is uniform) and the noise is
// scaled to the resulting bound 2 * cap * C, so the accountant's epsilon
// holds.
// kPerPair: clips and noises as if the loss decomposed over pairs. The
// reported epsilon then understates the true loss of privacy.
enum class Sensitivity { kCoupled, kPerPair };

std::string to_string(Sensitivity s);
Sensitivity sensitivity_from_string(const std::string& s);

// ceil(B + 4 sqrt(B)): a Poisson batch rarely exceeds it.
std::size_t batch_cap(std::size_t expected_batch_size);

struct RetrieverTrainConfig {
  std::size_t epochs = 5;
  std::size_t batch_size = 64;
  dp::OptimizerConfig optimizer;
  Sensitivity sensitivity = Sensitivity::kCoupled;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const RetrieverTrainConfig& c);
void from_json(const nlohmann::json& j, RetrieverTrainConfig& c);

// Non-private: shuffled minibatches, gradient of the batch mean of L_i.
// Direct DP: Poisson batches with q = batch_size / n; the gradient of each
// L_i (which reaches every document in its batch) is clipped to C, summed
// and noised according to config.sensitivity.
TrainReport train_retriever(EncoderModel& model, const Tokenizer& tok, const Corpus& corpus,
                            const RetrieverTrainConfig& config, const SimilarityConfig& sim,
                            const TrainMode& mode);

nlohmann::json encoder_checkpoint(const EncoderModel& model, const Tokenizer& tok);
std::pair<EncoderModel, Tokenizer> encoder_from_checkpoint(const nlohmann::json& j);
void save_encoder(const std::filesystem::path& path, const EncoderModel& model, const Tokenizer& tok);
std::pair<EncoderModel, Tokenizer> load_encoder(const std::filesystem::path& path);

}  // namespace qpriv::retriever

#endif  // QPRIV_RETRIEVER_HPP_
