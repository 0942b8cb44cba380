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

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "qpriv/rng.hpp"
#include "qpriv/types.hpp"

namespace qpriv::canary {

std::string to_string(CanaryKind k) {
  switch (k) {
    case CanaryKind::kRandomSecret:
      return "random_secret";
    case CanaryKind::kTrueDocPlusSecret:
      return "true_doc_plus_secret";
    case CanaryKind::kRandomDocPlusSecret:
      return "random_doc_plus_secret";
  }
  return "unknown";
}

CanaryKind canary_kind_from_string(const std::string& s) {
  for (CanaryKind k : all_kinds())
    if (to_string(k) == s) return k;
  throw Error("unknown canary kind '" + s + "'");
}

std::vector<CanaryKind> all_kinds() {
  return {CanaryKind::kRandomSecret, CanaryKind::kTrueDocPlusSecret, CanaryKind::kRandomDocPlusSecret};
}

std::string Canary::target(const std::string& candidate_secret) const {
  return query + " " + candidate_secret;
}

void to_json(nlohmann::json& j, const Canary& c) {
  j = nlohmann::json{{"kind", to_string(c.kind)}, {"id", c.id},
                             {"query", c.query},          {"doc_id", c.doc_id},
                             {"document", c.document},    {"secret", c.secret},
                             {"repetitions", c.repetitions}};
}

bool is_secret(const std::string& s) {
  return s.size() == 10 && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

std::string random_secret(Rng& rng) {
  std::string s(10, '0');
  for (char& c : s) c = static_cast<char>('0' + rng.below(10));
  return s;
}

std::vector<Canary> make_canaries(const Corpus& corpus, CanaryKind kind, std::size_t count,
                                  std::size_t repetitions, std::uint64_t seed,
                                  const CorpusConfig& space) {
  check(repetitions >= 1, "canary repetitions must be >= 1");
  check(kind != CanaryKind::kTrueDocPlusSecret || !corpus.empty(),
        "true-document canaries need a nonempty corpus");
  Rng rng(Rng::mix(seed ^ 0xca7a21ULL));
  std::set<std::string> secrets;
  std::vector<Canary> out;
  while (out.size() < count) {
    Canary c;
    c.kind = kind;
    c.repetitions = repetitions;
    const toy::Entity e = toy::random_entity(space.entity_vocab_size, rng);
    c.query = toy::render_query(e, rng.below(toy::kQueryTemplatesPerType), space.template_set);
    c.secret = random_secret(rng);
    if (!secrets.insert(c.secret).second) continue;
    c.id = "canary-" + c.secret;
    switch (kind) {
      case CanaryKind::kRandomSecret:
        c.doc_id = "canary-doc-" + c.secret;
        break;
      case CanaryKind::kTrueDocPlusSecret: {
        const Example& host = corpus.examples[rng.below(corpus.size())];
        c.doc_id = host.doc_id;
        c.document = host.document;
        break;
      }
      case CanaryKind::kRandomDocPlusSecret:
        c.doc_id = "canary-doc-" + c.secret;
        c.document = toy::render_document(
            toy::random_facts(toy::random_entity(space.entity_vocab_size, rng), rng));
        break;
    }
    out.push_back(std::move(c));
  }
  return out;
}

Corpus inject(const Corpus& corpus, const Canary& canary, std::size_t repetitions, std::uint64_t seed) {
  Canary c = canary;
  c.repetitions = repetitions;
  return inject(corpus, std::span<const Canary>(&c, 1), seed);
}

Corpus inject(const Corpus& corpus, std::span<const Canary> canaries, std::uint64_t seed) {
  Corpus out = corpus;
  out.provenance = Provenance::kCanaryInjected;
  for (const auto& c : canaries) {
    check(c.repetitions >= 1, "canary repetitions must be >= 1");
    check(is_secret(c.secret), "canary secret must be 10 digits");
    for (std::size_t r = 0; r < c.repetitions; ++r)
      out.examples.push_back({c.id + "-" + std::to_string(r), c.doc_id, c.target(), c.document});
  }
  Rng rng(Rng::mix(seed ^ 0x1a7ec7ULL));
  rng.shuffle(std::span<Example>(out.examples));
  out.validate();
  return out;
}

double exposure(std::size_t rank, std::size_t candidates) {
  check(rank >= 1 && rank <= candidates, "exposure: rank out of range");
  return std::log2(static_cast<double>(candidates)) - std::log2(static_cast<double>(rank));
}

namespace {

void check_digits(const Tokenizer& tok) {
  for (char d = '0'; d <= '9'; ++d)
    check(tok.id(std::string(1, d)) != Tokenizer::kUnk, "vocabulary lacks the digit tokens");
}

}  // namespace

ExposureResult exposure_rank(const lm::LmModel& model, const Tokenizer& tok, const Canary& canary,
                             std::size_t candidate_count, std::uint64_t seed, std::size_t max_input) {
  check(candidate_count >= 1, "exposure_rank: candidate_count must be >= 1");
  check(is_secret(canary.secret), "canary secret must be 10 digits");
  check_digits(tok);
  std::vector<std::string> candidates{canary.secret};
  std::set<std::string> seen{canary.secret};
  Rng rng(Rng::mix(seed ^ 0xe790ULL));
  while (candidates.size() < candidate_count) {
    std::string s = random_secret(rng);
    if (seen.insert(s).second) candidates.push_back(std::move(s));
  }

  // Every candidate shares the prompt and the query words; score those once.
  const std::vector<int> query_ids = tok.encode(canary.query);
  lm::Decoder prefix(model);
  RowVector lp = prefix.push_all(lm::encode_prompt(tok, canary.document, max_input));
  double shared = 0.0;
  for (int id : query_ids) {
    shared += lp[id];
    lp = prefix.push(id);
  }
  const RowVector after_query = lp;
  std::vector<double> scores;
  scores.reserve(candidates.size());
  for (const auto& s : candidates) {
    lm::Decoder dec = prefix;
    RowVector cur = after_query;
    double total = shared;
    std::vector<int> ids;
    for (char ch : s) ids.push_back(tok.id(std::string(1, ch)));
    ids.push_back(Tokenizer::kEos);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      total += cur[ids[i]];
      if (i + 1 < ids.size()) cur = dec.push(ids[i]);
    }
    scores.push_back(total);
  }
  ExposureResult r;
  r.candidates = candidate_count;
  r.rank = 1 + static_cast<std::size_t>(
                   std::count_if(scores.begin() + 1, scores.end(), [&](double v) { return v >= scores[0]; }));
  r.exposure = exposure(r.rank, r.candidates);
  return r;
}

bool extraction_test(const lm::LmModel& model, const Tokenizer& tok, const Canary& canary,
                     std::size_t samples, const lm::SamplerConfig& sampler, std::size_t max_input) {
  check(is_secret(canary.secret), "canary secret must be 10 digits");
  const std::vector<int> prompt = lm::encode_prompt(tok, canary.document, max_input);
  Rng rng(Rng::mix(sampler.seed ^ 0xe7a1ULL));
  for (std::size_t i = 0; i < samples; ++i) {
    if (tok.decode(lm::nucleus_sample(model, prompt, sampler, rng)).find(canary.secret) != std::string::npos)
      return true;
  }
  return false;
}

void AuditConfig::validate() const {
  check(!kinds.empty(), "audit: no canary kinds");
  check(!repetitions.empty(), "audit: no repetition levels");
  for (std::size_t r : repetitions) check(r >= 1, "audit: repetitions must be >= 1");
  check(!epsilons.empty(), "audit: no epsilon values");
  for (double e : epsilons) check(e > 0.0, "audit: epsilon must be positive");
  check(trials >= 1, "audit: trials must be >= 1");
  check(candidate_count >= 2, "audit: candidate_count must be >= 2");
  check(samples >= 1, "audit: samples must be >= 1");
  check(clip_norm > 0.0, "audit: clip_norm must be positive");
  sampler.validate();
}

void to_json(nlohmann::json& j, const AuditConfig& c) {
  std::vector<std::string> kinds;
  for (CanaryKind k : c.kinds) kinds.push_back(to_string(k));
  nlohmann::json eps = nlohmann::json::array();
  for (double e : c.epsilons) eps.push_back(epsilon_to_json(e));
  j = {{"kinds", kinds},
       {"repetitions", c.repetitions},
       {"epsilons", eps},
       {"trials", c.trials},
       {"candidate_count", c.candidate_count},
       {"samples", c.samples},
       {"sampler", c.sampler},
       {"clip_norm", c.clip_norm},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, AuditConfig& c) {
  c = AuditConfig{};
  if (j.contains("kinds")) {
    c.kinds.clear();
    for (const auto& k : j.at("kinds")) c.kinds.push_back(canary_kind_from_string(k.get<std::string>()));
  }
  c.repetitions = j.value("repetitions", c.repetitions);
  if (j.contains("epsilons")) {
    c.epsilons.clear();
    for (const auto& e : j.at("epsilons")) c.epsilons.push_back(epsilon_from_json(e));
  }
  c.trials = j.value("trials", c.trials);
  c.candidate_count = j.value("candidate_count", c.candidate_count);
  c.samples = j.value("samples", c.samples);
  if (j.contains("sampler")) c.sampler = j.at("sampler").get<lm::SamplerConfig>();
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.seed = j.value("seed", c.seed);
}

double median(std::vector<double> values) {
  check(!values.empty(), "median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size() / 2;
  return values.size() % 2 ? values[m] : 0.5 * (values[m - 1] + values[m]);
}

const AuditRow& AuditReport::row(const std::string& kind, std::size_t repetitions, double epsilon) const {
  for (const auto& r : rows)
    if (r.kind == kind && r.repetitions == repetitions && r.epsilon == epsilon) return r;
  throw Error("audit report has no row for " + kind);
}

namespace {

std::string format_epsilon(double e) {
  if (std::isinf(e)) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", e);
  return buf;
}

}  // namespace

std::string AuditReport::table() const {
  std::vector<std::size_t> reps;
  for (const auto& r : rows)
    if (std::find(reps.begin(), reps.end(), r.repetitions) == reps.end()) reps.push_back(r.repetitions);
  std::vector<std::vector<std::string>> cells{{"Model", "eps"}};
  for (std::size_t r : reps) {
    cells[0].push_back("Rank (rep=" + std::to_string(r) + ")");
    cells[0].push_back("Leaked (rep=" + std::to_string(r) + ")");
  }
  std::vector<std::pair<std::string, double>> keys;
  for (const auto& r : rows) {
    const std::pair<std::string, double> key{r.kind, r.epsilon};
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
  }
  for (const auto& [kind, eps] : keys) {
    std::vector<std::string> line{kind, format_epsilon(eps)};
    for (std::size_t r : reps) {
      const AuditRow& row = this->row(kind, r, eps);
      char rank[48], leak[16];
      std::snprintf(rank, sizeof rank, "%g/%zu", row.median_rank, candidate_count);
      std::snprintf(leak, sizeof leak, "%.0f%%", 100.0 * row.leak_rate);
      line.push_back(rank);
      line.push_back(leak);
    }
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(cells[0].size(), 0);
  for (const auto& line : cells)
    for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
  std::ostringstream out;
  for (const auto& line : cells) {
    for (std::size_t i = 0; i < line.size(); ++i) {
      out << line[i];
      if (i + 1 < line.size()) out << std::string(width[i] - line[i].size() + 2, ' ');
    }
    out << '\n';
  }
  return out.str();
}

void to_json(nlohmann::json& j, const AuditReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows)
    rows.push_back({{"kind", row.kind},
                    {"repetitions", row.repetitions},
                    {"epsilon", epsilon_to_json(row.epsilon)},
                    {"median_rank", row.median_rank},
                    {"leak_rate", row.leak_rate},
                    {"mean_exposure", row.mean_exposure},
                    {"ranks", row.ranks}});
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& run : r.runs)
    runs.push_back({{"epsilon", epsilon_to_json(run.epsilon)},
                    {"trial", run.trial},
                    {"training_examples", run.training_examples},
                    {"train", run.train}});
  nlohmann::json outcomes = nlohmann::json::array();
  for (const auto& o : r.outcomes)
    outcomes.push_back({{"canary", o.canary},
                        {"trial", o.trial},
                        {"epsilon", epsilon_to_json(o.epsilon)},
                        {"rank", o.exposure.rank},
                        {"exposure", o.exposure.exposure},
                        {"leaked", o.leaked}});
  j = nlohmann::json{
      {"candidate_count", r.candidate_count}, {"rows", rows}, {"runs", runs}, {"outcomes", outcomes}};
}

AuditReport audit(const lm::LmModel& init, const Tokenizer& tok, const Corpus& train,
                  const AuditConfig& config, const lm::LmTrainConfig& lm_config,
                  const CorpusConfig& space) {
  config.validate();
  check(!train.empty(), "audit: empty training corpus");
  AuditReport report;
  report.candidate_count = config.candidate_count;
  for (std::size_t trial = 0; trial < config.trials; ++trial) {
    // The same canaries are audited at every epsilon of a trial.
    const std::uint64_t trial_seed = Rng::mix(config.seed ^ (0xa0d17ULL + trial));
    std::vector<Canary> canaries;
    for (std::size_t ki = 0; ki < config.kinds.size(); ++ki)
      for (std::size_t ri = 0; ri < config.repetitions.size(); ++ri) {
        const std::uint64_t s = Rng::mix(trial_seed ^ (ki << 8) ^ (ri << 16));
        auto c = make_canaries(train, config.kinds[ki], 1, config.repetitions[ri], s, space);
        canaries.push_back(std::move(c.front()));
      }
    const Corpus injected = inject(train, canaries, trial_seed);
    for (double eps : config.epsilons) {
      lm::LmTrainConfig cfg = lm_config;
      cfg.seed = Rng::mix(lm_config.seed ^ trial_seed);
      const TrainMode mode = mode_for_epsilon(eps, injected.size(), cfg.batch_size, cfg.epochs,
                                              config.clip_norm, Rng::mix(trial_seed ^ 0x5eedULL));
      lm::LmModel model = init;
      AuditRun run{eps, trial, injected.size(), lm::train_lm(model, tok, injected, cfg, mode)};
      report.runs.push_back(std::move(run));
      for (std::size_t i = 0; i < canaries.size(); ++i) {
        lm::SamplerConfig sampler = config.sampler;
        sampler.seed = Rng::mix(config.sampler.seed ^ trial_seed ^ i);
        CanaryOutcome o{canaries[i], trial, eps,
                        exposure_rank(model, tok, canaries[i], config.candidate_count,
                                      Rng::mix(trial_seed ^ (i + 1)), cfg.max_input),
                        extraction_test(model, tok, canaries[i], config.samples, sampler, cfg.max_input)};
        report.outcomes.push_back(std::move(o));
      }
    }
  }

  auto aggregate = [&](const std::string& kind, std::size_t reps, double eps) {
    AuditRow row{kind, reps, eps, 0.0, 0.0, 0.0, {}};
    std::vector<double> ranks;
    double leaks = 0.0, expo = 0.0;
    for (const auto& o : report.outcomes) {
      if (o.epsilon != eps || o.canary.repetitions != reps) continue;
      if (kind != "all" && to_string(o.canary.kind) != kind) continue;
      row.ranks.push_back(o.exposure.rank);
      ranks.push_back(static_cast<double>(o.exposure.rank));
      leaks += o.leaked ? 1.0 : 0.0;
      expo += o.exposure.exposure;
    }
    row.median_rank = median(ranks);
    row.leak_rate = leaks / static_cast<double>(ranks.size());
    row.mean_exposure = expo / static_cast<double>(ranks.size());
    report.rows.push_back(std::move(row));
  };
  std::vector<std::string> kinds;
  for (CanaryKind k : config.kinds) kinds.push_back(to_string(k));
  kinds.push_back("all");
  for (const auto& kind : kinds)
    for (double eps : config.epsilons)
      for (std::size_t reps : config.repetitions) aggregate(kind, reps, eps);
  return report;
}

}  // namespace qpriv::canary
