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


#ifndef QPRIV_CANARY_HPP_
#define QPRIV_CANARY_HPP_

// Canary exposure audit for the query generator.
//
// A canary's training pair is (document, query + " " + secret): the secret
// sits in the generated text, never in the prompt, so an extracted secret
// can only come from memorization. The three kinds differ in the document
// that conditions the pair: empty, a real corpus document, or a freshly
// generated one.

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qpriv/dataset.hpp"
#include "qpriv/lm.hpp"
#include "qpriv/tokenizer.hpp"

namespace qpriv::canary {

enum class CanaryKind { kRandomSecret, kTrueDocPlusSecret, kRandomDocPlusSecret };

std::string to_string(CanaryKind k);
CanaryKind canary_kind_from_string(const std::string& s);
std::vector<CanaryKind> all_kinds();

struct Canary {
  CanaryKind kind = CanaryKind::kRandomSecret;
  std::string id;
  std::string query;     // template query, without the secret
  std::string doc_id;
  std::string document;  // prompt side; never contains the secret
  std::string secret;    // exactly 10 decimal digits
  std::size_t repetitions = 10;

  // The trained continuation for a given secret.
  std::string target(const std::string& candidate_secret) const;
  std::string target() const { return target(secret); }
};

void to_json(nlohmann::json& j, const Canary& c);

bool is_secret(const std::string& s);
std::string random_secret(Rng& rng);

// Queries come from the toy templates over fresh random entities drawn with
// `space.entity_vocab_size` and `space.template_set`. Secrets are distinct.
std::vector<Canary> make_canaries(const Corpus& corpus, CanaryKind kind, std::size_t count,
                                  std::size_t repetitions, std::uint64_t seed,
                                  const CorpusConfig& space = {});

// Appends `repetitions` copies of each canary, then shuffles the whole
// corpus with `seed`.
Corpus inject(const Corpus& corpus, const Canary& canary, std::size_t repetitions, std::uint64_t seed);
Corpus inject(const Corpus& corpus, std::span<const Canary> canaries, std::uint64_t seed);

struct ExposureResult {
  std::size_t rank = 0;
  std::size_t candidates = 0;
  double exposure = 0.0;
};

double exposure(std::size_t rank, std::size_t candidates);

// Scores target(s) given the canary's prompt for the true secret and
// candidate_count - 1 distinct fresh secrets. Ties count against the true
// secret: rank = 1 + #(other candidates scoring >= it).
ExposureResult exposure_rank(const lm::LmModel& model, const Tokenizer& tok, const Canary& canary,
                             std::size_t candidate_count, std::uint64_t seed,
                             std::size_t max_input = 200);

// True iff the secret is a substring of any of `samples` decoded
// generations from the canary's prompt.
bool extraction_test(const lm::LmModel& model, const Tokenizer& tok, const Canary& canary,
                     std::size_t samples, const lm::SamplerConfig& sampler,
                     std::size_t max_input = 200);

struct AuditConfig {
  std::vector<CanaryKind> kinds = all_kinds();
  std::vector<std::size_t> repetitions = {10, 100};
  std::vector<double> epsilons = {std::numeric_limits<double>::infinity(), 16.0};
  std::size_t trials = 3;
  std::size_t candidate_count = 100;
  std::size_t samples = 64;
  lm::SamplerConfig sampler;
  double clip_norm = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const AuditConfig& c);
void from_json(const nlohmann::json& j, AuditConfig& c);

struct CanaryOutcome {
  Canary canary;
  std::size_t trial = 0;
  double epsilon = 0.0;
  ExposureResult exposure;
  bool leaked = false;
};

// Aggregate over trials for one (kind, repetitions, epsilon); the pooled row
// over every kind has kind "all".
struct AuditRow {
  std::string kind;
  std::size_t repetitions = 0;
  double epsilon = 0.0;
  double median_rank = 0.0;
  double leak_rate = 0.0;
  double mean_exposure = 0.0;
  std::vector<std::size_t> ranks;
};

struct AuditRun {
  double epsilon = 0.0;
  std::size_t trial = 0;
  std::size_t training_examples = 0;
  TrainReport train;
};

struct AuditReport {
  std::size_t candidate_count = 0;
  std::vector<AuditRow> rows;
  std::vector<AuditRun> runs;
  std::vector<CanaryOutcome> outcomes;

  const AuditRow& row(const std::string& kind, std::size_t repetitions, double epsilon) const;
  // Model, epsilon, then Rank and Leaked for each repetition level.
  std::string table() const;
};

void to_json(nlohmann::json& j, const AuditReport& r);

double median(std::vector<double> values);

// One generator per (epsilon, trial), fine-tuned from `init` on `train` with
// one canary per (kind, repetitions) injected. Finite epsilons calibrate
// sigma for the injected corpus size.
AuditReport audit(const lm::LmModel& init, const Tokenizer& tok, const Corpus& train,
                  const AuditConfig& config, const lm::LmTrainConfig& lm_config,
                  const CorpusConfig& space = {});

}  // namespace qpriv::canary

#endif  // QPRIV_CANARY_HPP_
