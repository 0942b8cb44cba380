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

#include "qpriv/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "qpriv/checkpoint.hpp"
#include "qpriv/rng.hpp"
#include "qpriv/types.hpp"

namespace qpriv {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string format_number(double v, const char* fmt = "%.4f") {
  if (std::isinf(v)) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

std::string aligned(const std::vector<std::vector<std::string>>& cells) {
  std::vector<std::size_t> width(cells.front().size(), 0);
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

}  // namespace

void to_json(nlohmann::json& j, const SynthesisConfig& c) {
  j = {{"per_doc", c.per_doc}, {"sampler", c.sampler}};
}

void from_json(const nlohmann::json& j, SynthesisConfig& c) {
  c = SynthesisConfig{};
  c.per_doc = j.value("per_doc", c.per_doc);
  if (j.contains("sampler")) c.sampler = j.at("sampler").get<lm::SamplerConfig>();
}

RunConfig::RunConfig() {
  public_corpus.seed = 1000003;
  pretrain.epochs = 4;
  pretrain.seed = 1;
  epsilons = {kInf, 16.0, 8.0};
  encoder.d = 64;
  encoder.d_out = 64;
  retriever.epochs = 10;
  retriever.batch_size = 64;
  similarity.temperature = 0.05;
}

void RunConfig::validate() const {
  check(schema_version == kSchemaVersion,
        "unsupported config schema_version " + std::to_string(schema_version));
  corpus.validate();
  public_corpus.validate();
  check(eval_fraction > 0.0 && eval_fraction < 1.0, "eval_fraction must lie in (0, 1)");
  check(max_vocab > static_cast<std::size_t>(Tokenizer::kNumSpecials), "max_vocab too small");
  lm.validate();
  pretrain.validate();
  check(!epsilons.empty(), "epsilons must not be empty");
  std::set<double> seen;
  for (double e : epsilons) {
    check(e > 0.0 && !std::isnan(e), "epsilon must be positive");
    check(seen.insert(e).second, "duplicate epsilon");
  }
  check(clip_norm > 0.0, "clip_norm must be positive");
  check(synthesis.per_doc >= 1, "synthesis.per_doc must be >= 1");
  synthesis.sampler.validate();
  retriever.validate();
  similarity.validate();
  check(direct_dp_batch_size >= 1, "direct_dp_batch_size must be >= 1");
  check(eval_k >= 1, "eval_k must be >= 1");
  if (run_audit) audit.validate();
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  nlohmann::json eps = nlohmann::json::array();
  for (double e : c.epsilons) eps.push_back(epsilon_to_json(e));
  j = {{"schema_version", c.schema_version},
       {"seed", c.seed},
       {"corpus", c.corpus},
       {"public_corpus", c.public_corpus},
       {"eval_fraction", c.eval_fraction},
       {"max_vocab", c.max_vocab},
       {"lm_dims", c.lm_dims},
       {"pretrain", c.pretrain},
       {"lm", c.lm},
       {"epsilons", eps},
       {"clip_norm", c.clip_norm},
       {"synthesis", c.synthesis},
       {"encoder", c.encoder},
       {"retriever", c.retriever},
       {"similarity", {{"temperature", c.similarity.temperature}}},
       {"direct_dp_batch_size", c.direct_dp_batch_size},
       {"per_pair_direct_dp", c.per_pair_direct_dp},
       {"eval_k", c.eval_k},
       {"run_audit", c.run_audit},
       {"audit", c.audit},
       {"output_dir", c.output_dir}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  static const std::set<std::string> kKeys{
      "schema_version", "seed",      "corpus",    "public_corpus", "eval_fraction", "max_vocab",
      "lm_dims",        "pretrain",  "lm",        "epsilons",      "clip_norm",     "synthesis",
      "encoder",        "retriever", "similarity", "direct_dp_batch_size", "per_pair_direct_dp",
      "eval_k",         "run_audit", "audit",      "output_dir"};
  check(j.is_object(), "config must be a JSON object");
  for (const auto& [key, _] : j.items()) check(kKeys.count(key), "unknown config key '" + key + "'");
  c = RunConfig{};
  c.schema_version = j.value("schema_version", c.schema_version);
  c.seed = j.value("seed", c.seed);
  if (j.contains("corpus")) c.corpus = j.at("corpus").get<CorpusConfig>();
  if (j.contains("public_corpus")) c.public_corpus = j.at("public_corpus").get<CorpusConfig>();
  c.eval_fraction = j.value("eval_fraction", c.eval_fraction);
  c.max_vocab = j.value("max_vocab", c.max_vocab);
  if (j.contains("lm_dims")) c.lm_dims = j.at("lm_dims").get<lm::LmDims>();
  if (j.contains("pretrain")) c.pretrain = j.at("pretrain").get<lm::LmTrainConfig>();
  if (j.contains("lm")) c.lm = j.at("lm").get<lm::LmTrainConfig>();
  if (j.contains("epsilons")) {
    c.epsilons.clear();
    for (const auto& e : j.at("epsilons")) c.epsilons.push_back(epsilon_from_json(e));
  }
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  if (j.contains("synthesis")) c.synthesis = j.at("synthesis").get<SynthesisConfig>();
  if (j.contains("encoder")) c.encoder = j.at("encoder").get<retriever::EncoderDims>();
  if (j.contains("retriever")) c.retriever = j.at("retriever").get<retriever::RetrieverTrainConfig>();
  if (j.contains("similarity"))
    c.similarity.temperature = j.at("similarity").value("temperature", c.similarity.temperature);
  c.direct_dp_batch_size = j.value("direct_dp_batch_size", c.direct_dp_batch_size);
  c.per_pair_direct_dp = j.value("per_pair_direct_dp", c.per_pair_direct_dp);
  c.eval_k = j.value("eval_k", c.eval_k);
  c.run_audit = j.value("run_audit", c.run_audit);
  if (j.contains("audit")) c.audit = j.at("audit").get<canary::AuditConfig>();
  c.output_dir = j.value("output_dir", c.output_dir);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  RunConfig c = read_json_file(path).get<RunConfig>();
  c.validate();
  return c;
}

std::filesystem::path default_output_dir() {
  const char* env = std::getenv("QPRIV_OUT_DIR");
  return env && *env ? std::filesystem::path(env) : std::filesystem::path("qpriv-out");
}

lm::LmDims lm_dims_for(const RunConfig& config, const Tokenizer& tok) {
  lm::LmDims d = config.lm_dims;
  d.vocab = static_cast<Index>(tok.size());
  return d;
}

retriever::EncoderModel init_encoder(const RunConfig& config, const Tokenizer& tok) {
  retriever::EncoderDims d = config.encoder;
  d.vocab = static_cast<Index>(tok.size());
  return retriever::EncoderModel::init(d, Rng::mix(config.seed ^ 0xe2c0ULL));
}

Tokenizer public_tokenizer(const RunConfig& config) {
  return lm::build_lm_tokenizer(generate_toy_corpus(config.public_corpus), config.max_vocab);
}

WarmStart warm_start(const RunConfig& config, const std::optional<std::filesystem::path>& cache_dir) {
  config.validate();
  WarmStart ws;
  ws.public_corpus = generate_toy_corpus(config.public_corpus);
  ws.tok = lm::build_lm_tokenizer(ws.public_corpus, config.max_vocab);
  const lm::LmDims dims = lm_dims_for(config, ws.tok);

  const nlohmann::json key = {{"version", kVersion},
                              {"public_corpus", config.public_corpus},
                              {"vocab_hash", hex64(ws.tok.hash())},
                              {"lm_dims", dims},
                              {"pretrain", config.pretrain}};
  std::optional<std::filesystem::path> cache_file;
  if (cache_dir) cache_file = *cache_dir / ("pretrain-" + hex64(fnv1a(key.dump())) + ".json");
  if (cache_file && std::filesystem::exists(*cache_file)) {
    const nlohmann::json cached = read_json_file(*cache_file);
    if (cached.value("key", nlohmann::json()) == key) {
      auto [model, tok] = lm::lm_from_checkpoint(cached.at("model"));
      check(tok == ws.tok, "pretrain cache: vocabulary mismatch");
      ws.model = std::move(model);
      ws.report = cached.at("report");
      ws.cached = true;
      return ws;
    }
  }
  ws.model = lm::LmModel::init(dims, Rng::mix(config.pretrain.seed ^ 0x1417ULL));
  ws.report = lm::pretrain_lm(ws.model, ws.tok, ws.public_corpus, config.pretrain);
  if (cache_file)
    write_json_file(*cache_file, {{"key", key},
                                  {"report", ws.report},
                                  {"model", lm::lm_checkpoint(ws.model, ws.tok)}});
  return ws;
}

PipelineContext prepare(const RunConfig& config, const std::optional<std::filesystem::path>& cache_dir) {
  config.validate();
  PipelineContext ctx;
  const Corpus corpus = generate_toy_corpus(config.corpus);
  auto parts = split(corpus, config.eval_fraction, Rng::mix(config.seed ^ 0x5b1170ULL));
  ctx.train = std::move(parts.train);
  ctx.eval = std::move(parts.eval);
  check_disjoint_queries(ctx.train, ctx.eval);
  WarmStart ws = warm_start(config, cache_dir);
  ctx.public_corpus = std::move(ws.public_corpus);
  ctx.tok = std::move(ws.tok);
  ctx.pretrained = std::move(ws.model);
  ctx.pretrain_report = std::move(ws.report);
  ctx.pretrain_cached = ws.cached;
  return ctx;
}

PrivacyBudget ArmResult::realized_budget() const {
  if (generator) return generator->budget;
  if (retriever) return retriever->budget;
  return PrivacyBudget::infinite();
}

std::string arm_name(const std::string& method, double epsilon) {
  return method + "/eps=" + format_number(epsilon, "%g");
}

void to_json(nlohmann::json& j, const ArmResult& a) {
  j = {{"name", a.name},
       {"source", a.source},
       {"method", a.method},
       {"target_epsilon", epsilon_to_json(a.target_epsilon)},
       {"realized_budget", a.realized_budget()},
       {"guarantee_holds", a.guarantee_holds},
       {"ok", a.ok()}};
  if (a.generator) j["generator_training"] = *a.generator;
  if (a.retriever) j["retriever_training"] = *a.retriever;
  if (a.eval) j["eval"] = *a.eval;
  if (a.bleu) j["bleu"] = *a.bleu;
  if (a.source == "synthetic") {
    j["synthetic_examples"] = a.synthetic_examples;
    j["empty_generations"] = a.empty_generations;
    j["query_samples"] = a.query_samples;
  }
  if (!a.ok()) j["error"] = a.error;
}

const ArmResult& PipelineReport::arm(const std::string& name) const {
  for (const auto& a : arms)
    if (a.name == name) return a;
  throw Error("no arm named " + name);
}

std::string PipelineReport::table() const {
  std::vector<std::vector<std::string>> cells{
      {"Source", "Method", "eps", "NDCG@" + std::to_string(config.eval_k),
       "Recall@" + std::to_string(config.eval_k), "BLEU", "realized eps"}};
  for (const auto& a : arms) {
    std::vector<std::string> line{a.source, a.method, format_number(a.target_epsilon, "%g")};
    if (a.ok() && a.eval) {
      line.push_back(format_number(a.eval->ndcg));
      line.push_back(format_number(a.eval->recall));
    } else {
      line.push_back("failed");
      line.push_back("-");
    }
    line.push_back(a.bleu ? format_number(*a.bleu) : "-");
    line.push_back(format_number(a.realized_budget().epsilon, "%.3f") + (a.guarantee_holds ? "" : " (not valid)"));
    cells.push_back(std::move(line));
  }
  return aligned(cells);
}

nlohmann::json PipelineReport::timings() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& a : arms) j[a.name] = a.seconds;
  return j;
}

void to_json(nlohmann::json& j, const PipelineReport& r) {
  j = {{"schema_version", r.schema_version},
       {"version", r.version},
       {"seed", r.config.seed},
       {"config", r.config},
       {"train_examples", r.train_examples},
       {"eval_examples", r.eval_examples},
       {"vocab_size", r.vocab_size},
       {"vocab_hash", hex64(r.vocab_hash)},
       {"pretrain", r.pretrain},
       {"arms", r.arms}};
  if (r.audit) j["audit"] = *r.audit;
}

namespace {

struct Stopwatch {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

template <typename Fn>
ArmResult run_arm(ArmResult arm, Fn&& body) {
  Stopwatch clock;
  try {
    body(arm);
  } catch (const std::exception& e) {
    arm.error = e.what();
  }
  arm.seconds = clock.seconds();
  return arm;
}

ArmResult new_arm(const std::string& source, const std::string& method, double epsilon) {
  ArmResult a;
  a.name = arm_name(method, epsilon);
  a.source = source;
  a.method = method;
  a.target_epsilon = epsilon;
  return a;
}

retriever::RetrieverTrainConfig retriever_config(const RunConfig& config, std::uint64_t salt) {
  retriever::RetrieverTrainConfig c = config.retriever;
  c.seed = Rng::mix(config.seed ^ config.retriever.seed ^ salt);
  return c;
}

}  // namespace

PipelineReport run_pipeline(const RunConfig& config, const PipelineContext& ctx) {
  config.validate();
  check_disjoint_queries(ctx.train, ctx.eval);
  PipelineReport report;
  report.config = config;
  report.train_examples = ctx.train.size();
  report.eval_examples = ctx.eval.size();
  report.vocab_size = ctx.tok.size();
  report.vocab_hash = ctx.tok.hash();
  report.pretrain = ctx.pretrain_report;

  // Every finite epsilon is calibrated before any training starts.
  const std::size_t n = ctx.train.size();
  std::map<double, TrainMode> lm_modes, direct_modes;
  for (double eps : config.epsilons) {
    lm_modes[eps] = mode_for_epsilon(eps, n, config.lm.batch_size, config.lm.epochs, config.clip_norm,
                                     Rng::mix(config.seed ^ 0x11a0ULL));
    if (!std::isinf(eps))
      direct_modes[eps] = mode_for_epsilon(eps, n, config.direct_dp_batch_size, config.retriever.epochs,
                                           config.clip_norm, Rng::mix(config.seed ^ 0xd1ecULL));
  }

  report.arms.push_back(run_arm(new_arm("original", "non_private", kInf), [&](ArmResult& a) {
    auto enc = init_encoder(config, ctx.tok);
    a.retriever = retriever::train_retriever(enc, ctx.tok, ctx.train, retriever_config(config, 0xa0),
                                             config.similarity, TrainMode::non_private());
    a.eval = eval::evaluate_retrieval(enc, ctx.tok, ctx.eval, config.eval_k);
  }));

  auto direct_arm = [&](double eps, retriever::Sensitivity sensitivity) {
    const bool per_pair = sensitivity == retriever::Sensitivity::kPerPair;
    ArmResult arm = new_arm("original", per_pair ? "direct_dp_per_pair" : "direct_dp", eps);
    arm.guarantee_holds = !per_pair;
    return run_arm(std::move(arm), [&](ArmResult& a) {
      auto enc = init_encoder(config, ctx.tok);
      auto rc = retriever_config(config, 0xb0);
      rc.batch_size = config.direct_dp_batch_size;
      rc.sensitivity = sensitivity;
      a.retriever = retriever::train_retriever(enc, ctx.tok, ctx.train, rc, config.similarity,
                                               direct_modes.at(eps));
      check(a.retriever->budget.epsilon <= eps + 1e-3, "realized epsilon exceeds its target");
      a.eval = eval::evaluate_retrieval(enc, ctx.tok, ctx.eval, config.eval_k);
    });
  };
  for (double eps : config.epsilons) {
    if (std::isinf(eps)) continue;
    report.arms.push_back(direct_arm(eps, retriever::Sensitivity::kCoupled));
    if (config.per_pair_direct_dp) report.arms.push_back(direct_arm(eps, retriever::Sensitivity::kPerPair));
  }

  std::map<std::string, std::string> original_query;
  for (const auto& e : ctx.train.examples) original_query.emplace(e.doc_id, e.query);
  for (double eps : config.epsilons) {
    report.arms.push_back(run_arm(new_arm("synthetic", "dp_generator", eps), [&](ArmResult& a) {
      lm::LmModel gen = ctx.pretrained;
      lm::LmTrainConfig lc = config.lm;
      lc.seed = Rng::mix(config.seed ^ config.lm.seed ^ 0x6e0ULL);
      a.generator = lm::train_lm(gen, ctx.tok, ctx.train, lc, lm_modes.at(eps));
      check(a.generator->budget.epsilon <= eps + 1e-3, "realized epsilon exceeds its target");

      // Everything below only post-processes the generator.
      lm::SamplerConfig sampler = config.synthesis.sampler;
      sampler.seed = Rng::mix(config.seed ^ config.synthesis.sampler.seed ^ 0x5a3ULL);
      auto syn = lm::synthesize_dataset(gen, ctx.tok, ctx.train, config.synthesis.per_doc, sampler,
                                        config.lm.max_input);
      check_disjoint_queries(syn.corpus, ctx.eval);
      a.synthetic_examples = syn.corpus.size();
      a.empty_generations = syn.empty_generations;
      std::vector<std::string> refs, hyps;
      for (const auto& e : syn.corpus.examples) {
        refs.push_back(original_query.at(e.doc_id));
        hyps.push_back(e.query);
        if (a.query_samples.size() < 5) a.query_samples.push_back(e.query);
      }
      a.bleu = eval::bleu(refs, hyps);

      auto enc = init_encoder(config, ctx.tok);
      a.retriever = retriever::train_retriever(enc, ctx.tok, syn.corpus, retriever_config(config, 0xc0),
                                               config.similarity, TrainMode::non_private());
      a.eval = eval::evaluate_retrieval(enc, ctx.tok, ctx.eval, config.eval_k);
    }));
  }

  if (config.run_audit) {
    report.audit = canary::audit(ctx.pretrained, ctx.tok, ctx.train, config.audit, config.lm, config.corpus);
  }
  return report;
}

PipelineReport run_pipeline(const RunConfig& config) {
  const std::filesystem::path out =
      config.output_dir.empty() ? default_output_dir() : std::filesystem::path(config.output_dir);
  return run_pipeline(config, prepare(config, out / "cache"));
}

void write_report(const PipelineReport& report, const std::filesystem::path& dir) {
  write_json_file(dir / "report.json", report);
  write_json_file(dir / "timings.json", report.timings());
  std::ofstream txt(dir / "report.txt");
  check(static_cast<bool>(txt), "cannot write " + (dir / "report.txt").string());
  txt << report.table();
  if (report.audit) txt << '\n' << report.audit->table();
}

}  // namespace qpriv
