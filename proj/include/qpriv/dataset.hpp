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

#ifndef QPRIV_DATASET_HPP_
#define QPRIV_DATASET_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "qpriv/rng.hpp"
#include "qpriv/types.hpp"

namespace qpriv {

struct Example {
  std::string query_id;
  std::string doc_id;
  std::string query;
  std::string document;

  bool operator==(const Example&) const = default;
};

enum class Provenance { kOriginal, kSynthetic, kCanaryInjected };

std::string to_string(Provenance p);
Provenance provenance_from_string(const std::string& s);

struct Corpus {
  std::vector<Example> examples;
  Provenance provenance = Provenance::kOriginal;

  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }

  // Throws unless n >= 1, ids are nonempty and (query_id, doc_id) is unique.
  void validate() const;
  // First occurrence of each doc_id, in corpus order.
  std::vector<std::pair<std::string, std::string>> unique_documents() const;
};

// Paraphrase: queries name the entity but describe its type, country and
// size with words that never occur in documents (town/city, demonym/country,
// tiny/small), so relevance has to be learned. Literal: queries reuse the
// document vocabulary.
enum class TemplateSet { kParaphrase, kLiteral };

std::string to_string(TemplateSet t);
TemplateSet template_set_from_string(const std::string& s);

struct CorpusConfig {
  std::size_t n_docs = 2000;
  std::size_t queries_per_doc = 1;
  std::size_t entity_vocab_size = 15;  // number of distinct entity names
  TemplateSet template_set = TemplateSet::kParaphrase;
  std::uint64_t seed = 7;

  void validate() const;
};

void to_json(nlohmann::json& j, const CorpusConfig& c);
void from_json(const nlohmann::json& j, CorpusConfig& c);

// Deterministic in `config`. Each document describes one (type, name,
// country, size) entity drawn without replacement, so every query has
// exactly one relevant document.
Corpus generate_toy_corpus(const CorpusConfig& config);

// Public lexicon behind the toy corpus. Exposed for canary construction.
namespace toy {

inline constexpr std::size_t kQueryTemplatesPerType = 3;

const std::vector<std::string>& entity_names();  // full public name pool
std::size_t max_documents(std::size_t entity_vocab_size);

struct Entity {
  std::size_t type = 0;
  std::size_t name = 0;
  std::size_t country = 0;
  std::size_t size = 0;
};

struct Facts {
  Entity entity;
  std::vector<int> digits;  // numeric attributes, consumed by the template
  std::size_t pick_a = 0;   // person / product / sea index
};

Facts random_facts(const Entity& e, Rng& rng);
std::string render_document(const Facts& f);
std::string render_query(const Entity& e, std::size_t template_index, TemplateSet set);
Entity random_entity(std::size_t entity_vocab_size, Rng& rng);

}  // namespace toy

enum class CorpusFormat { kJsonl, kTsv };

CorpusFormat corpus_format_from_path(const std::filesystem::path& path);

// One Example per record in file order. Errors name the 1-based line.
Corpus parse_corpus(std::istream& in, CorpusFormat format);
Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format);
Corpus load_corpus(const std::filesystem::path& path);

void write_corpus(std::ostream& out, const Corpus& corpus, CorpusFormat format);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path, CorpusFormat format);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);
// query_id, doc_id, 1
void write_qrels(std::ostream& out, const Corpus& corpus);

struct SplitResult {
  Corpus train;
  Corpus eval;
};

// Partitions by query_id. Both parts keep the input's relative order.
SplitResult split(const Corpus& corpus, double eval_fraction, std::uint64_t seed);

// Throws if any query_id occurs in both corpora.
void check_disjoint_queries(const Corpus& train, const Corpus& eval);

struct OverlapStats {
  std::size_t sample_size = 0;
  std::size_t trials = 0;
  double query_match_rate = 0.0;
  double doc_match_rate = 0.0;
  std::vector<double> per_trial_query_rate;
  std::vector<double> per_trial_doc_rate;
};

void to_json(nlohmann::json& j, const OverlapStats& s);

// Fraction of sampled queries (and documents) whose normalized text occurs
// verbatim inside some normalized reference document, averaged over trials.
OverlapStats overlap_report(const Corpus& queries, const Corpus& reference,
                            std::size_t sample_size, std::size_t trials, std::uint64_t seed);

}  // namespace qpriv

#endif  // QPRIV_DATASET_HPP_
