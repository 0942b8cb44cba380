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


#ifndef QPRIV_PIPELINE_HPP_
#define QPRIV_PIPELINE_HPP_

// End-to-end experiment: private query generator, synthetic data, retriever
// on synthetic data, against retrievers trained on the original queries.

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qpriv/canary.hpp"
#include "qpriv/dataset.hpp"
#include "qpriv/eval.hpp"
#include "qpriv/lm.hpp"
#include "qpriv/retriever.hpp"
#include "qpriv/tokenizer.hpp"

namespace qpriv {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kSchemaVersion = 1;

struct SynthesisConfig {
  std::size_t per_doc = 1;
  lm::SamplerConfig sampler;
};

void to_json(nlohmann::json& j, const SynthesisConfig& c);
void from_json(const nlohmann::json& j, SynthesisConfig& c);

struct RunConfig {
  int schema_version = kSchemaVersion;
  std::uint64_t seed = 0;

  CorpusConfig corpus;
  // Public data: vocabulary and generator warm start. Never queried by eval.
  CorpusConfig public_corpus;
  double eval_fraction = 0.2;
  std::size_t max_vocab = 512;

  lm::LmDims lm_dims;  // vocab is filled from the tokenizer
  lm::LmTrainConfig pretrain;
  lm::LmTrainConfig lm;
  std::vector<double> epsilons;  // infinity means non-private
  double clip_norm = 0.1;
  SynthesisConfig synthesis;

  retriever::EncoderDims encoder;  // vocab is filled from the tokenizer
  retriever::RetrieverTrainConfig retriever;
  retriever::SimilarityConfig similarity;
  std::size_t direct_dp_batch_size = 32;
  // Also train the direct DP retriever with per-pair sensitivity, whose
  // reported epsilon does not hold for the coupled loss.
  bool per_pair_direct_dp = true;

  std::size_t eval_k = 10;

  bool run_audit = false;
  canary::AuditConfig audit;

  std::string output_dir;

  RunConfig();
  void validate() const;
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);
RunConfig load_run_config(const std::filesystem::path& path);

// QPRIV_OUT_DIR when set, otherwise "qpriv-out".
std::filesystem::path default_output_dir();

// Public corpus, vocabulary and the pretrained generator. With a cache
// directory the generator is read from (or written to) a file keyed by
// everything it depends on.
struct WarmStart {
  Corpus public_corpus;
  Tokenizer tok;
  lm::LmModel model;
  nlohmann::json report;
  bool cached = false;
};

Tokenizer public_tokenizer(const RunConfig& config);
WarmStart warm_start(const RunConfig& config,
                     const std::optional<std::filesystem::path>& cache_dir = std::nullopt);

struct PipelineContext {
  Corpus train;
  Corpus eval;
  Corpus public_corpus;
  Tokenizer tok;
  lm::LmModel pretrained;
  nlohmann::json pretrain_report;
  bool pretrain_cached = false;
};

// Corpus, split and the warm start.
PipelineContext prepare(const RunConfig& config,
                        const std::optional<std::filesystem::path>& cache_dir = std::nullopt);

retriever::EncoderModel init_encoder(const RunConfig& config, const Tokenizer& tok);
lm::LmDims lm_dims_for(const RunConfig& config, const Tokenizer& tok);

struct ArmResult {
  std::string name;
  std::string source;  // "original" or "synthetic"
  std::string method;  // "non_private", "direct_dp", "direct_dp_per_pair", "dp_generator"
  double target_epsilon = std::numeric_limits<double>::infinity();
  bool guarantee_holds = true;  // false when the accounting assumed a decomposable loss
  std::optional<TrainReport> generator;
  std::optional<TrainReport> retriever;
  std::optional<eval::EvalReport> eval;
  std::optional<double> bleu;
  std::size_t synthetic_examples = 0;
  std::size_t empty_generations = 0;
  std::vector<std::string> query_samples;  // first few synthetic queries
  std::string error;
  double seconds = 0.0;  // not serialized into the report

  bool ok() const { return error.empty(); }
  PrivacyBudget realized_budget() const;
};

struct PipelineReport {
  int schema_version = kSchemaVersion;
  std::string version = kVersion;
  RunConfig config;
  std::size_t train_examples = 0;
  std::size_t eval_examples = 0;
  std::size_t vocab_size = 0;
  std::uint64_t vocab_hash = 0;
  nlohmann::json pretrain;
  std::vector<ArmResult> arms;
  std::optional<canary::AuditReport> audit;

  const ArmResult& arm(const std::string& name) const;
  // Source, eps, NDCG@k, Recall@k, BLEU, realized eps.
  std::string table() const;
  nlohmann::json timings() const;
};

void to_json(nlohmann::json& j, const ArmResult& a);
void to_json(nlohmann::json& j, const PipelineReport& r);

std::string arm_name(const std::string& method, double epsilon);

// Runs every arm in order; a failing arm records its error and the run
// continues.
PipelineReport run_pipeline(const RunConfig& config, const PipelineContext& context);
PipelineReport run_pipeline(const RunConfig& config);

// report.json, report.txt (tables) and timings.json under dir.
void write_report(const PipelineReport& report, const std::filesystem::path& dir);

}  // namespace qpriv

#endif  // QPRIV_PIPELINE_HPP_
