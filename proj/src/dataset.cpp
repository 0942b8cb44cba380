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

#include "qpriv/dataset.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "qpriv/text.hpp"
#include "qpriv/types.hpp"

namespace qpriv {

// ---- enums -----------------------------------------------------------------

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::kOriginal: return "original";
    case Provenance::kSynthetic: return "synthetic";
    case Provenance::kCanaryInjected: return "canary_injected";
  }
  return "original";
}

Provenance provenance_from_string(const std::string& s) {
  if (s == "original") return Provenance::kOriginal;
  if (s == "synthetic") return Provenance::kSynthetic;
  if (s == "canary_injected") return Provenance::kCanaryInjected;
  throw Error("unknown provenance '" + s + "'");
}

std::string to_string(TemplateSet t) {
  return t == TemplateSet::kLiteral ? "literal" : "paraphrase";
}

TemplateSet template_set_from_string(const std::string& s) {
  if (s == "paraphrase") return TemplateSet::kParaphrase;
  if (s == "literal") return TemplateSet::kLiteral;
  throw Error("unknown template set '" + s + "'");
}

// ---- Corpus -------------------------------------------------------------------

void Corpus::validate() const {
  check(!examples.empty(), "corpus is empty");
  std::set<std::pair<std::string, std::string>> seen;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& e = examples[i];
    check(!e.query_id.empty(), "example " + std::to_string(i) + " has an empty query_id");
    check(!e.doc_id.empty(), "example " + std::to_string(i) + " has an empty doc_id");
    check(seen.emplace(e.query_id, e.doc_id).second,
          "duplicate (query_id, doc_id) = (" + e.query_id + ", " + e.doc_id + ")");
  }
}

std::vector<std::pair<std::string, std::string>> Corpus::unique_documents() const {
  std::vector<std::pair<std::string, std::string>> out;
  std::unordered_set<std::string> seen;
  for (const auto& e : examples) {
    if (seen.insert(e.doc_id).second) out.emplace_back(e.doc_id, e.document);
  }
  return out;
}

// ---- toy corpus ---------------------------------------------------------------

namespace toy {
namespace {

struct TypeWords {
  const char* doc;
  const char* query;
};

constexpr std::array<TypeWords, 4> kTypes = {{
    {"city", "town"}, {"company", "firm"}, {"river", "stream"}, {"mountain", "peak"}}};

constexpr std::array<TypeWords, 10> kCountries = {{{"norvia", "norvian"},
                                                   {"kestra", "kestran"},
                                                   {"belmora", "belmoran"},
                                                   {"tavira", "taviran"},
                                                   {"ostria", "ostrian"},
                                                   {"valdor", "valdoran"},
                                                   {"lumeria", "lumerian"},
                                                   {"zandor", "zandorian"},
                                                   {"pelaria", "pelarian"},
                                                   {"ricosta", "ricostan"}}};

constexpr std::array<TypeWords, 4> kSizes = {
    {{"small", "tiny"}, {"medium", "midsize"}, {"large", "big"}, {"huge", "giant"}}};

constexpr std::array<const char*, 12> kPersons = {"maria", "tomas", "elena", "ivan",
                                                  "sofia", "marco", "lena",  "pavel",
                                                  "nina",  "oskar", "rosa",  "emil"};
constexpr std::array<const char*, 8> kProducts = {"cars",  "phones", "shoes", "toys",
                                                  "bread", "paper",  "steel", "glass"};
constexpr std::array<const char*, 4> kSeas = {"amber", "coral", "silver", "jade"};

// {S} size, {C} country, {T} type word, {N} name.
constexpr std::array<std::array<const char*, kQueryTemplatesPerType>, 4> kQueryTemplates = {{
    {"how many residents does the {S} {C} {T} {N} have", "who governs the {S} {C} {T} of {N}",
     "tell me about {N} , the {S} {C} {T}"},
    {"what does the {S} {C} {T} {N} produce", "when did the {S} {C} {T} {N} open",
     "tell me about {N} , the {S} {C} {T}"},
    {"how far does the {S} {C} {T} {N} run", "where does the {S} {C} {T} {N} end",
     "tell me about {N} , the {S} {C} {T}"},
    {"how tall is the {S} {C} {T} {N}", "when did climbers reach the top of the {S} {C} {T} {N}",
     "tell me about {N} , the {S} {C} {T}"},
}};

const std::set<std::string>& reserved_words() {
  static const std::set<std::string> words = [] {
    std::set<std::string> w;
    auto add_line = [&](const std::string& s) {
      for (auto& t : tokenize_words(s)) w.insert(t);
    };
    for (const auto& t : kTypes) add_line(std::string(t.doc) + " " + t.query);
    for (const auto& t : kCountries) add_line(std::string(t.doc) + " " + t.query);
    for (const auto& t : kSizes) add_line(std::string(t.doc) + " " + t.query);
    for (const char* p : kPersons) add_line(p);
    for (const char* p : kProducts) add_line(p);
    for (const char* p : kSeas) add_line(p);
    for (const auto& row : kQueryTemplates)
      for (const char* q : row) add_line(q);
    add_line("is a in it has population of thousand and its mayor based makes was founded "
             "km long flows into the sea m high first climbed generate_query");
    return w;
  }();
  return words;
}

void replace_all(std::string& s, const std::string& key, const std::string& value) {
  for (std::size_t pos = s.find(key); pos != std::string::npos; pos = s.find(key, pos)) {
    s.replace(pos, key.size(), value);
    pos += value.size();
  }
}

std::string number(const std::vector<int>& digits, std::size_t from, std::size_t count) {
  std::string s;
  for (std::size_t i = from; i < from + count; ++i) s.push_back(static_cast<char>('0' + digits[i]));
  return s;
}

}  // namespace

const std::vector<std::string>& entity_names() {
  static const std::vector<std::string> names = [] {
    const std::string consonants = "bdfgklmnprstvz";
    const std::string vowels = "aeiou";
    std::vector<std::string> all;
    for (char c1 : consonants)
      for (char v1 : vowels)
        for (char c2 : consonants)
          for (char v2 : vowels) all.push_back(std::string{c1, v1, c2, v2});
    Rng rng(0x70795eedULL);
    rng.shuffle(all);
    std::vector<std::string> out;
    for (auto& n : all) {
      if (!reserved_words().contains(n)) out.push_back(std::move(n));
    }
    return out;
  }();
  return names;
}

std::size_t max_documents(std::size_t entity_vocab_size) {
  return kTypes.size() * entity_vocab_size * kCountries.size() * kSizes.size();
}

Entity random_entity(std::size_t entity_vocab_size, Rng& rng) {
  Entity e;
  e.type = rng.below(kTypes.size());
  e.name = rng.below(entity_vocab_size);
  e.country = rng.below(kCountries.size());
  e.size = rng.below(kSizes.size());
  return e;
}

Facts random_facts(const Entity& e, Rng& rng) {
  Facts f;
  f.entity = e;
  auto digit = [&](int lo) { return lo + static_cast<int>(rng.below(10 - lo)); };
  switch (e.type) {
    case 0:  // city: population (3 digits), mayor
      f.digits = {digit(1), digit(0), digit(0)};
      f.pick_a = rng.below(kPersons.size());
      break;
    case 1:  // company: product, founding year 18xx/19xx
      f.digits = {1, 8 + static_cast<int>(rng.below(2)), digit(0), digit(0)};
      f.pick_a = rng.below(kProducts.size());
      break;
    case 2:  // river: length (3 digits), sea
      f.digits = {digit(1), digit(0), digit(0)};
      f.pick_a = rng.below(kSeas.size());
      break;
    default:  // mountain: height (4 digits), first ascent year
      f.digits = {digit(1), digit(0), digit(0), digit(0), 1, 8 + static_cast<int>(rng.below(2)),
                  digit(0), digit(0)};
      break;
  }
  return f;
}

std::string render_document(const Facts& f) {
  const auto& e = f.entity;
  const std::string head = entity_names()[e.name] + " is a " + kSizes[e.size].doc + " " +
                           kTypes[e.type].doc + " in " + kCountries[e.country].doc + " . ";
  switch (e.type) {
    case 0:
      return head + "it has a population of " + number(f.digits, 0, 3) +
             " thousand and its mayor is " + kPersons[f.pick_a] + " .";
    case 1:
      return head + "it makes " + kProducts[f.pick_a] + " and was founded in " +
             number(f.digits, 0, 4) + " .";
    case 2:
      return head + "it is " + number(f.digits, 0, 3) + " km long and flows into the " +
             kSeas[f.pick_a] + " sea .";
    default:
      return head + "it is " + number(f.digits, 0, 4) + " m high and was first climbed in " +
             number(f.digits, 4, 4) + " .";
  }
}

std::string render_query(const Entity& e, std::size_t template_index, TemplateSet set) {
  check(template_index < kQueryTemplatesPerType, "query template index out of range");
  const bool literal = set == TemplateSet::kLiteral;
  std::string q = kQueryTemplates[e.type][template_index];
  replace_all(q, "{S}", literal ? kSizes[e.size].doc : kSizes[e.size].query);
  replace_all(q, "{C}", literal ? kCountries[e.country].doc : kCountries[e.country].query);
  replace_all(q, "{T}", literal ? kTypes[e.type].doc : kTypes[e.type].query);
  replace_all(q, "{N}", entity_names()[e.name]);
  return q;
}

}  // namespace toy

void CorpusConfig::validate() const {
  check(n_docs >= 1, "n_docs must be >= 1");
  check(queries_per_doc >= 1, "queries_per_doc must be >= 1");
  check(entity_vocab_size >= 1, "entity_vocab_size must be >= 1");
  check(queries_per_doc <= toy::kQueryTemplatesPerType,
        "queries_per_doc must be <= " + std::to_string(toy::kQueryTemplatesPerType));
  check(entity_vocab_size <= toy::entity_names().size(), "entity_vocab_size exceeds the name pool");
  check(n_docs <= toy::max_documents(entity_vocab_size),
        "n_docs exceeds the " + std::to_string(toy::max_documents(entity_vocab_size)) +
            " distinct entities available for entity_vocab_size=" +
            std::to_string(entity_vocab_size));
}

void to_json(nlohmann::json& j, const CorpusConfig& c) {
  j = {{"n_docs", c.n_docs},
       {"queries_per_doc", c.queries_per_doc},
       {"entity_vocab_size", c.entity_vocab_size},
       {"template_set", to_string(c.template_set)},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, CorpusConfig& c) {
  c = CorpusConfig{};
  c.n_docs = j.value("n_docs", c.n_docs);
  c.queries_per_doc = j.value("queries_per_doc", c.queries_per_doc);
  c.entity_vocab_size = j.value("entity_vocab_size", c.entity_vocab_size);
  c.template_set = template_set_from_string(j.value("template_set", to_string(c.template_set)));
  c.seed = j.value("seed", c.seed);
}

Corpus generate_toy_corpus(const CorpusConfig& config) {
  config.validate();
  Rng rng(Rng::mix(config.seed));
  const std::size_t k = config.entity_vocab_size;
  const std::size_t n_countries = 10;
  const std::size_t n_sizes = 4;
  const auto picks = rng.sample_without_replacement(toy::max_documents(k), config.n_docs);

  Corpus corpus;
  corpus.examples.reserve(config.n_docs * config.queries_per_doc);
  char buf[64];
  for (std::size_t i = 0; i < picks.size(); ++i) {
    std::size_t code = picks[i];
    toy::Entity e;
    e.size = code % n_sizes;
    code /= n_sizes;
    e.country = code % n_countries;
    code /= n_countries;
    e.name = code % k;
    e.type = code / k;
    const toy::Facts facts = toy::random_facts(e, rng);
    const std::string doc = toy::render_document(facts);
    std::snprintf(buf, sizeof(buf), "d%05zu", i);
    const std::string doc_id = buf;
    const auto templates =
        rng.sample_without_replacement(toy::kQueryTemplatesPerType, config.queries_per_doc);
    for (std::size_t j = 0; j < templates.size(); ++j) {
      std::snprintf(buf, sizeof(buf), "q%05zu-%zu", i, j);
      corpus.examples.push_back(
          {buf, doc_id, toy::render_query(e, templates[j], config.template_set), doc});
    }
  }
  return corpus;
}

// ---- file formats -----------------------------------------------------------------

CorpusFormat corpus_format_from_path(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".tsv" || ext == ".tab") return CorpusFormat::kTsv;
  return CorpusFormat::kJsonl;
}

namespace {

std::string line_prefix(std::size_t line) { return "line " + std::to_string(line) + ": "; }

void add_checked(Corpus& corpus, std::set<std::pair<std::string, std::string>>& seen, Example e,
                 std::size_t line) {
  check(!e.query_id.empty(), line_prefix(line) + "empty query_id");
  check(!e.doc_id.empty(), line_prefix(line) + "empty doc_id");
  check(seen.emplace(e.query_id, e.doc_id).second,
        line_prefix(line) + "duplicate (query_id, doc_id) = (" + e.query_id + ", " + e.doc_id +
            ")");
  corpus.examples.push_back(std::move(e));
}

Corpus parse_jsonl(std::istream& in) {
  Corpus corpus;
  std::set<std::pair<std::string, std::string>> seen;
  std::string line;
  std::size_t lineno = 0;
  bool provenance_set = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& ex) {
      throw Error(line_prefix(lineno) + "malformed JSON: " + ex.what());
    }
    check(j.is_object(), line_prefix(lineno) + "record is not a JSON object");
    Example e;
    for (auto [field, dst] : {std::pair{"query_id", &e.query_id}, std::pair{"doc_id", &e.doc_id},
                              std::pair{"query", &e.query}, std::pair{"document", &e.document}}) {
      auto it = j.find(field);
      check(it != j.end(), line_prefix(lineno) + "missing field \"" + field + "\"");
      check(it->is_string(), line_prefix(lineno) + "field \"" + field + "\" is not a string");
      *dst = it->get<std::string>();
    }
    if (auto it = j.find("provenance"); it != j.end() && it->is_string() && !provenance_set) {
      corpus.provenance = provenance_from_string(it->get<std::string>());
      provenance_set = true;
    }
    add_checked(corpus, seen, std::move(e), lineno);
  }
  return corpus;
}

// Tab-separated, four columns, no header. A field that begins with '"' is
// quoted: it runs to the next lone '"', may contain tabs and newlines, and
// '""' inside it stands for one '"'.
Corpus parse_tsv(std::istream& in) {
  Corpus corpus;
  std::set<std::pair<std::string, std::string>> seen;
  std::vector<std::string> fields;
  std::string field;
  std::size_t line = 1;
  std::size_t record_line = 1;
  bool at_field_start = true;
  bool in_quotes = false;
  bool was_quoted = false;
  bool record_has_content = false;

  auto end_field = [&] {
    fields.push_back(std::move(field));
    field.clear();
    at_field_start = true;
    was_quoted = false;
  };
  auto end_record = [&] {
    if (!record_has_content && fields.empty() && field.empty()) return;
    end_field();
    check(fields.size() == 4, line_prefix(record_line) + "expected 4 tab-separated fields, got " +
                                  std::to_string(fields.size()));
    add_checked(corpus, seen, {fields[0], fields[1], fields[2], fields[3]}, record_line);
    fields.clear();
    record_has_content = false;
  };

  char c;
  while (in.get(c)) {
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (c == '\r' && in.peek() == '\n') continue;
    if (c == '\n') {
      end_record();
      ++line;
      record_line = line;
      continue;
    }
    record_has_content = true;
    if (c == '\t') {
      end_field();
      continue;
    }
    if (c == '"' && at_field_start) {
      in_quotes = true;
      was_quoted = true;
      at_field_start = false;
      continue;
    }
    check(!was_quoted, line_prefix(line) + "text after closing quote");
    at_field_start = false;
    field.push_back(c);
  }
  check(!in_quotes, line_prefix(record_line) + "unterminated quoted field");
  end_record();
  return corpus;
}

std::string tsv_field(const std::string& s) {
  if (s.find_first_of("\t\n\r\"") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

Corpus parse_corpus(std::istream& in, CorpusFormat format) {
  Corpus c = format == CorpusFormat::kTsv ? parse_tsv(in) : parse_jsonl(in);
  check(!c.empty(), "corpus file contains no records");
  return c;
}

Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), "cannot open corpus file " + path.string());
  try {
    return parse_corpus(in, format);
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

Corpus load_corpus(const std::filesystem::path& path) {
  return load_corpus(path, corpus_format_from_path(path));
}

void write_corpus(std::ostream& out, const Corpus& corpus, CorpusFormat format) {
  for (const auto& e : corpus.examples) {
    if (format == CorpusFormat::kTsv) {
      out << tsv_field(e.query_id) << '\t' << tsv_field(e.doc_id) << '\t' << tsv_field(e.query)
          << '\t' << tsv_field(e.document) << '\n';
    } else {
      nlohmann::ordered_json j = {{"query_id", e.query_id},
                                  {"doc_id", e.doc_id},
                                  {"query", e.query},
                                  {"document", e.document},
                                  {"provenance", to_string(corpus.provenance)}};
      out << j.dump() << '\n';
    }
  }
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path, CorpusFormat format) {
  std::ofstream out(path, std::ios::binary);
  check(out.good(), "cannot write corpus file " + path.string());
  write_corpus(out, corpus, format);
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  save_corpus(corpus, path, corpus_format_from_path(path));
}

void write_qrels(std::ostream& out, const Corpus& corpus) {
  for (const auto& e : corpus.examples) {
    out << tsv_field(e.query_id) << '\t' << tsv_field(e.doc_id) << "\t1\n";
  }
}

// ---- split / overlap ----------------------------------------------------------------

SplitResult split(const Corpus& corpus, double eval_fraction, std::uint64_t seed) {
  check(eval_fraction > 0.0 && eval_fraction < 1.0, "eval_fraction must lie in (0, 1)");
  std::vector<std::string> qids;
  std::unordered_set<std::string> seen;
  for (const auto& e : corpus.examples) {
    if (seen.insert(e.query_id).second) qids.push_back(e.query_id);
  }
  const auto n = qids.size();
  const auto n_eval = static_cast<std::size_t>(std::llround(eval_fraction * static_cast<double>(n)));
  check(n_eval >= 1 && n_eval < n, "corpus of " + std::to_string(n) +
                                       " queries is too small to split at eval_fraction " +
                                       std::to_string(eval_fraction));
  Rng rng(Rng::mix(seed ^ 0x5b117ULL));
  rng.shuffle(qids);
  const std::unordered_set<std::string> eval_ids(qids.begin(), qids.begin() + static_cast<long>(n_eval));
  SplitResult out;
  out.train.provenance = out.eval.provenance = corpus.provenance;
  for (const auto& e : corpus.examples) {
    (eval_ids.contains(e.query_id) ? out.eval : out.train).examples.push_back(e);
  }
  return out;
}

void check_disjoint_queries(const Corpus& train, const Corpus& eval) {
  std::unordered_set<std::string> ids;
  for (const auto& e : train.examples) ids.insert(e.query_id);
  for (const auto& e : eval.examples) {
    check(!ids.contains(e.query_id),
          "query_id '" + e.query_id + "' occurs in both the training and the evaluation split");
  }
}

void to_json(nlohmann::json& j, const OverlapStats& s) {
  j = {{"sample_size", s.sample_size},
       {"trials", s.trials},
       {"query_match_rate", s.query_match_rate},
       {"doc_match_rate", s.doc_match_rate},
       {"per_trial_query_rate", s.per_trial_query_rate},
       {"per_trial_doc_rate", s.per_trial_doc_rate}};
}

OverlapStats overlap_report(const Corpus& queries, const Corpus& reference,
                            std::size_t sample_size, std::size_t trials, std::uint64_t seed) {
  check(!reference.empty(), "overlap_report: reference corpus is empty");
  check(sample_size <= queries.size(), "overlap_report: sample_size exceeds the query corpus");
  check(sample_size >= 1 && trials >= 1, "overlap_report: sample_size and trials must be >= 1");
  // '\n' never survives normalization, so it cannot create a cross-document match.
  std::string haystack;
  for (const auto& [id, text] : reference.unique_documents()) {
    haystack.push_back('\n');
    haystack += normalize_text(text);
  }
  haystack.push_back('\n');

  OverlapStats stats;
  stats.sample_size = sample_size;
  stats.trials = trials;
  Rng rng(Rng::mix(seed ^ 0x0e71a9ULL));
  for (std::size_t t = 0; t < trials; ++t) {
    std::size_t q_hits = 0;
    std::size_t d_hits = 0;
    for (std::size_t i : rng.sample_without_replacement(queries.size(), sample_size)) {
      const auto& e = queries.examples[i];
      if (haystack.find(normalize_text(e.query)) != std::string::npos) ++q_hits;
      if (haystack.find(normalize_text(e.document)) != std::string::npos) ++d_hits;
    }
    stats.per_trial_query_rate.push_back(static_cast<double>(q_hits) / sample_size);
    stats.per_trial_doc_rate.push_back(static_cast<double>(d_hits) / sample_size);
  }
  for (std::size_t t = 0; t < trials; ++t) {
    stats.query_match_rate += stats.per_trial_query_rate[t];
    stats.doc_match_rate += stats.per_trial_doc_rate[t];
  }
  stats.query_match_rate /= static_cast<double>(trials);
  stats.doc_match_rate /= static_cast<double>(trials);
  return stats;
}

}  // namespace qpriv
