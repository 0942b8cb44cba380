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


#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "qpriv/accountant.hpp"
#include "qpriv/canary.hpp"
#include "qpriv/checkpoint.hpp"
#include "qpriv/dataset.hpp"
#include "qpriv/eval.hpp"
#include "qpriv/lm.hpp"
#include "qpriv/pipeline.hpp"
#include "qpriv/retriever.hpp"
#include "qpriv/training.hpp"

namespace qpriv::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class UsageError : public Error {
 public:
  using Error::Error;
};

double parse_epsilon(const std::string& s) {
  if (s == "inf" || s == "infinity") return std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || !(v > 0.0)) throw UsageError("invalid epsilon '" + s + "'");
  return v;
}

// Writes JSON to `path` when given, otherwise to out.
void emit(const json& j, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << j.dump(2) << '\n';
  } else {
    write_json_file(path, j);
  }
}

void emit_corpus(const Corpus& corpus, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    write_corpus(out, corpus, CorpusFormat::kJsonl);
  } else {
    save_corpus(corpus, path);
  }
}

struct Shared {
  std::string config_path;
  std::string out;
  RunConfig config;

  void load() {
    if (config_path.empty()) return;
    try {
      config = load_run_config(config_path);
    } catch (const std::exception& e) {
      throw UsageError(std::string("invalid config: ") + e.what());
    }
  }
  fs::path out_dir() const {
    return config.output_dir.empty() ? default_output_dir() : fs::path(config.output_dir);
  }
  fs::path cache_dir() const { return out_dir() / "cache"; }
};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Private query synthesis for dense retrieval"};
  app.name("qpriv");
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  Shared sh;
  app.add_option("--config", sh.config_path, "RunConfig JSON file")->check(CLI::ExistingFile);

  std::function<int()> action;
  auto add = [&](const std::string& name, const std::string& help) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--out", sh.out, "output file (default: stdout)");
    return sub;
  };

  // gen-corpus
  std::optional<std::size_t> n_docs, queries_per_doc, entities;
  std::optional<std::uint64_t> corpus_seed;
  std::string templates, eval_out;
  std::optional<double> eval_fraction;
  {
    CLI::App* c = add("gen-corpus", "generate the synthetic toy corpus");
    c->add_option("--n-docs", n_docs);
    c->add_option("--seed", corpus_seed);
    c->add_option("--queries-per-doc", queries_per_doc);
    c->add_option("--entities", entities, "distinct entity names");
    c->add_option("--templates", templates)->check(CLI::IsMember({"paraphrase", "literal"}));
    c->add_option("--eval-out", eval_out, "also split and write the eval part here");
    c->add_option("--eval-fraction", eval_fraction);
    c->callback([&] {
      action = [&] {
        CorpusConfig cc = sh.config.corpus;
        if (n_docs) cc.n_docs = *n_docs;
        if (corpus_seed) cc.seed = *corpus_seed;
        if (queries_per_doc) cc.queries_per_doc = *queries_per_doc;
        if (entities) cc.entity_vocab_size = *entities;
        if (!templates.empty()) cc.template_set = template_set_from_string(templates);
        Corpus corpus = generate_toy_corpus(cc);
        if (eval_out.empty()) {
          emit_corpus(corpus, sh.out, out);
          return kExitOk;
        }
        auto parts = split(corpus, eval_fraction.value_or(sh.config.eval_fraction),
                           Rng::mix(sh.config.seed ^ 0x5b1170ULL));
        check_disjoint_queries(parts.train, parts.eval);
        emit_corpus(parts.train, sh.out, out);
        save_corpus(parts.eval, eval_out);
        return kExitOk;
      };
    });
  }

  // train-lm
  std::string train_path, epsilon_text = "inf", model_path;
  {
    CLI::App* c = add("train-lm", "fine-tune the pretrained generator on (document, query) pairs");
    c->get_option("--out")->description("checkpoint path")->required();
    c->add_option("--train", train_path)->required()->check(CLI::ExistingFile);
    c->add_option("--epsilon", epsilon_text, "target epsilon or 'inf'");
    c->callback([&] {
      action = [&] {
        const double eps = parse_epsilon(epsilon_text);
        const Corpus train = load_corpus(train_path);
        train.validate();
        WarmStart ws = warm_start(sh.config, sh.cache_dir());
        const TrainMode mode = mode_for_epsilon(eps, train.size(), sh.config.lm.batch_size, sh.config.lm.epochs,
                                                sh.config.clip_norm, Rng::mix(sh.config.seed ^ 0x11a0ULL));
        lm::LmTrainConfig lc = sh.config.lm;
        lc.seed = Rng::mix(sh.config.seed ^ sh.config.lm.seed ^ 0x6e0ULL);
        const TrainReport report = lm::train_lm(ws.model, ws.tok, train, lc, mode);
        lm::save_lm(sh.out, ws.model, ws.tok);
        out << json(report).dump(2) << '\n';
        return kExitOk;
      };
    });
  }

  // synthesize
  std::string docs_path;
  std::optional<std::size_t> per_doc;
  std::optional<double> nucleus_p;
  std::optional<std::uint64_t> sample_seed;
  {
    CLI::App* c = add("synthesize", "sample synthetic queries for documents");
    c->add_option("--model", model_path, "generator checkpoint")->required()->check(CLI::ExistingFile);
    c->add_option("--docs", docs_path, "corpus whose documents are used")->required()->check(CLI::ExistingFile);
    c->add_option("--per-doc", per_doc);
    c->add_option("--nucleus-p", nucleus_p);
    c->add_option("--seed", sample_seed);
    c->callback([&] {
      action = [&] {
        auto [model, tok] = lm::load_lm(model_path);
        lm::SamplerConfig sampler = sh.config.synthesis.sampler;
        if (nucleus_p) sampler.nucleus_p = *nucleus_p;
        if (sample_seed) sampler.seed = *sample_seed;
        const auto syn = lm::synthesize_dataset(model, tok, load_corpus(docs_path),
                                                per_doc.value_or(sh.config.synthesis.per_doc), sampler,
                                                sh.config.lm.max_input);
        emit_corpus(syn.corpus, sh.out, out);
        err << json{{"examples", syn.corpus.size()}, {"empty_generations", syn.empty_generations}}.dump()
            << '\n';
        return kExitOk;
      };
    });
  }

  // train-retriever
  std::string mode_text = "non_private", sensitivity_text = "coupled";
  {
    CLI::App* c = add("train-retriever", "train the dual encoder");
    c->get_option("--out")->description("checkpoint path")->required();
    c->add_option("--train", train_path)->required()->check(CLI::ExistingFile);
    c->add_option("--mode", mode_text)->check(CLI::IsMember({"non_private", "direct_dp"}));
    c->add_option("--epsilon", epsilon_text, "target epsilon for direct_dp");
    c->add_option("--sensitivity", sensitivity_text)->check(CLI::IsMember({"coupled", "per_pair"}));
    c->callback([&] {
      action = [&] {
        const bool dp = mode_text == "direct_dp";
        const double eps = dp ? parse_epsilon(epsilon_text) : std::numeric_limits<double>::infinity();
        if (dp && std::isinf(eps)) throw UsageError("direct_dp needs a finite --epsilon");
        const Corpus train = load_corpus(train_path);
        train.validate();
        const Tokenizer tok = public_tokenizer(sh.config);
        auto enc = init_encoder(sh.config, tok);
        retriever::RetrieverTrainConfig rc = sh.config.retriever;
        if (dp) {
          rc.batch_size = sh.config.direct_dp_batch_size;
          rc.sensitivity = retriever::sensitivity_from_string(sensitivity_text);
        }
        const TrainMode mode = mode_for_epsilon(eps, train.size(), rc.batch_size, rc.epochs,
                                                sh.config.clip_norm, Rng::mix(sh.config.seed ^ 0xd1ecULL));
        const TrainReport report = retriever::train_retriever(enc, tok, train, rc, sh.config.similarity, mode);
        retriever::save_encoder(sh.out, enc, tok);
        out << json(report).dump(2) << '\n';
        return kExitOk;
      };
    });
  }

  // evaluate
  std::string eval_path, exclude_path;
  std::optional<std::size_t> k;
  {
    CLI::App* c = add("evaluate", "NDCG@k and Recall@k of an encoder on an eval split");
    c->add_option("--model", model_path, "encoder checkpoint")->required()->check(CLI::ExistingFile);
    c->add_option("--eval", eval_path)->required()->check(CLI::ExistingFile);
    c->add_option("--train", exclude_path, "training split that must not share query ids")
        ->check(CLI::ExistingFile);
    c->add_option("-k", k);
    c->callback([&] {
      action = [&] {
        const Corpus eval_corpus = load_corpus(eval_path);
        if (!exclude_path.empty()) check_disjoint_queries(load_corpus(exclude_path), eval_corpus);
        auto [enc, tok] = retriever::load_encoder(model_path);
        emit(eval::evaluate_retrieval(enc, tok, eval_corpus, k.value_or(sh.config.eval_k)), sh.out, out);
        return kExitOk;
      };
    });
  }

  // audit
  std::optional<std::size_t> trials;
  std::vector<std::size_t> repetitions;
  std::vector<std::string> epsilon_list;
  {
    CLI::App* c = add("audit", "canary exposure and extraction audit of the generator");
    c->add_option("--trials", trials);
    c->add_option("--repetitions", repetitions);
    c->add_option("--epsilons", epsilon_list);
    c->callback([&] {
      action = [&] {
        canary::AuditConfig ac = sh.config.audit;
        if (trials) ac.trials = *trials;
        if (!repetitions.empty()) ac.repetitions = repetitions;
        if (!epsilon_list.empty()) {
          ac.epsilons.clear();
          for (const auto& e : epsilon_list) ac.epsilons.push_back(parse_epsilon(e));
        }
        ac.validate();
        const PipelineContext ctx = prepare(sh.config, sh.cache_dir());
        const auto report = canary::audit(ctx.pretrained, ctx.tok, ctx.train, ac, sh.config.lm, sh.config.corpus);
        emit(report, sh.out, out);
        err << report.table();
        return kExitOk;
      };
    });
  }

  // accountant
  double q = 0.0, sigma = 0.0, delta = 0.0;
  std::size_t steps = 0;
  std::optional<double> target_epsilon;
  {
    CLI::App* c = add("accountant", "epsilon for (q, sigma, steps, delta), or sigma for a target epsilon");
    c->add_option("--q", q, "sampling rate")->required()->check(CLI::Range(0.0, 1.0));
    c->add_option("--sigma", sigma, "noise multiplier");
    c->add_option("--steps", steps)->required();
    c->add_option("--delta", delta)->required();
    c->add_option("--target-epsilon", target_epsilon, "calibrate sigma instead");
    c->callback([&] {
      action = [&] {
        json j;
        if (target_epsilon) {
          const double s = calibrate_sigma({*target_epsilon, delta}, q, steps);
          const auto r = epsilon_for({default_orders(), q, s, steps}, delta);
          j = {{"sigma", s}, {"epsilon", r.epsilon}, {"best_order", r.best_order}};
        } else {
          if (!(sigma > 0.0)) throw UsageError("--sigma must be positive");
          const auto r = epsilon_for({default_orders(), q, sigma, steps}, delta);
          j = {{"epsilon", r.epsilon}, {"best_order", r.best_order}};
        }
        emit(j, sh.out, out);
        return kExitOk;
      };
    });
  }

  // overlap
  std::string queries_path, reference_path;
  std::size_t sample_size = 100, overlap_trials = 5;
  std::uint64_t overlap_seed = 0;
  {
    CLI::App* c = add("overlap", "exact-match overlap of queries and documents with a reference corpus");
    c->add_option("--queries", queries_path)->required()->check(CLI::ExistingFile);
    c->add_option("--reference", reference_path)->required()->check(CLI::ExistingFile);
    c->add_option("--sample-size", sample_size);
    c->add_option("--trials", overlap_trials);
    c->add_option("--seed", overlap_seed);
    c->callback([&] {
      action = [&] {
        emit(overlap_report(load_corpus(queries_path), load_corpus(reference_path), sample_size, overlap_trials,
                            overlap_seed),
             sh.out, out);
        return kExitOk;
      };
    });
  }

  // run
  std::string out_dir;
  std::optional<std::uint64_t> run_seed;
  bool with_audit = false;
  {
    CLI::App* c = app.add_subcommand("run", "all arms of the experiment; writes report.json and report.txt");
    c->add_option("--out-dir", out_dir, "default: config output_dir, then $QPRIV_OUT_DIR, then qpriv-out");
    c->add_option("--seed", run_seed);
    c->add_flag("--audit", with_audit, "also run the canary audit");
    c->callback([&] {
      action = [&] {
        RunConfig config = sh.config;
        if (run_seed) config.seed = *run_seed;
        if (with_audit) config.run_audit = true;
        if (!out_dir.empty()) config.output_dir = out_dir;
        const fs::path dir = config.output_dir.empty() ? default_output_dir() : fs::path(config.output_dir);
        const PipelineReport report = run_pipeline(config, prepare(config, dir / "cache"));
        write_report(report, dir);
        out << report.table();
        if (report.audit) out << '\n' << report.audit->table();
        for (const auto& a : report.arms)
          if (!a.ok()) {
            err << "qpriv: arm " << a.name << " failed: " << a.error << '\n';
            return kExitStageFailure;
          }
        return kExitOk;
      };
    });
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    sh.load();
  } catch (const UsageError& e) {
    err << "qpriv: " << e.what() << '\n';
    return kExitUsage;
  }
  try {
    return action();
  } catch (const UsageError& e) {
    err << "qpriv: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "qpriv: " << e.what() << '\n';
    return kExitStageFailure;
  }
}

}  // namespace qpriv::cli
