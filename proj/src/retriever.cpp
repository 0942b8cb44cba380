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

#include "qpriv/retriever.hpp"

#include <cmath>
#include <algorithm>
#include <numeric>
#include <span>

#include "qpriv/checkpoint.hpp"
#include "qpriv/rng.hpp"
#include "qpriv/types.hpp"

namespace qpriv::retriever {

using ad::Tape;
using ad::Var;

namespace {

std::vector<int> tokens_or_unk(const Tokenizer& tok, const std::string& text) {
  auto ids = tok.encode(text);
  if (ids.empty()) ids.push_back(Tokenizer::kUnk);
  return ids;
}

}  // namespace

void EncoderDims::validate() const {
  check(vocab >= 1 && d >= 1 && d_out >= 1, "encoder: invalid dimensions");
}

void to_json(nlohmann::json& j, const EncoderDims& d) {
  j = {{"vocab", d.vocab}, {"d", d.d}, {"d_out", d.d_out}};
}

void from_json(const nlohmann::json& j, EncoderDims& d) {
  d = EncoderDims{};
  d.vocab = j.value("vocab", d.vocab);
  d.d = j.value("d", d.d);
  d.d_out = j.value("d_out", d.d_out);
}

EncoderModel EncoderModel::init(const EncoderDims& dims, std::uint64_t seed) {
  dims.validate();
  Rng rng(Rng::mix(seed ^ 0xe4c0deULL));
  auto gaussian = [&](Index r, Index c, Scalar sd) {
    Matrix m(r, c);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = sd * rng.normal();
    return m;
  };
  EncoderModel m;
  m.dims_ = dims;
  m.params_.add("tok_emb", gaussian(dims.vocab, dims.d, 1.0));
  m.params_.add("dense", gaussian(dims.d, dims.d, 1.0 / std::sqrt(static_cast<Scalar>(dims.d))));
  m.params_.add("dense_bias", Matrix::Zero(1, dims.d));
  m.params_.add("proj", gaussian(dims.d, dims.d_out, 1.0 / std::sqrt(static_cast<Scalar>(dims.d))));
  return m;
}

EncoderModel EncoderModel::from_params(const EncoderDims& dims, ad::ParamSet params) {
  EncoderModel m = init(dims, 0);
  check(params.layout() == m.params_.layout(), "encoder: parameter layout does not match dims");
  m.params_ = std::move(params);
  return m;
}

Var EncoderModel::encode(Tape& t, const std::vector<std::vector<int>>& token_lists) const {
  check(!token_lists.empty(), "encode: no inputs");
  for (const auto& l : token_lists) {
    check(!l.empty(), "encode: empty token sequence");
    for (int id : l) check(id >= 0 && id < dims_.vocab, "encode: token id out of range");
  }
  Var pooled = ad::embedding_bag_mean(t.param("tok_emb"), token_lists);
  Var h = ad::tanh(ad::add_row(ad::matmul(pooled, t.param("dense")), t.param("dense_bias")));
  return ad::l2_normalize_rows(ad::matmul(h, t.param("proj")));
}

Matrix EncoderModel::encode(const std::vector<std::vector<int>>& token_lists) const {
  Tape t(params_);
  return encode(t, token_lists).value();
}

RowVector EncoderModel::encode(const std::vector<int>& tokens) const {
  return encode(std::vector<std::vector<int>>{tokens}).row(0);
}

Matrix encode_texts(const EncoderModel& model, const Tokenizer& tok,
                    const std::vector<std::string>& texts) {
  constexpr std::size_t kChunk = 256;
  Matrix out(static_cast<Index>(texts.size()), model.dims().d_out);
  for (std::size_t lo = 0; lo < texts.size(); lo += kChunk) {
    const std::size_t hi = std::min(texts.size(), lo + kChunk);
    std::vector<std::vector<int>> lists;
    for (std::size_t i = lo; i < hi; ++i) lists.push_back(tokens_or_unk(tok, texts[i]));
    out.middleRows(static_cast<Index>(lo), static_cast<Index>(hi - lo)) = model.encode(lists);
  }
  return out;
}

void SimilarityConfig::validate() const {
  check(temperature > 0.0 && std::isfinite(temperature), "temperature must be positive");
}

std::vector<Var> in_batch_softmax_loss(Tape& tape, const EncoderModel& model,
                                       const std::vector<std::vector<int>>& queries,
                                       const std::vector<std::vector<int>>& docs,
                                       const SimilarityConfig& sim) {
  sim.validate();
  check(!queries.empty(), "in_batch_softmax_loss: empty batch");
  check(queries.size() == docs.size(), "in_batch_softmax_loss: queries and documents differ in count");
  const int b = static_cast<int>(queries.size());
  Var q = model.encode(tape, queries);
  Var d = model.encode(tape, docs);
  Var logits = ad::scale(ad::matmul_nt(q, d), 1.0 / sim.temperature);
  std::vector<int> diag(b);
  std::iota(diag.begin(), diag.end(), 0);
  Var nll = ad::scale(ad::pick(ad::log_softmax_rows(logits), diag, diag), -1.0);
  std::vector<Var> out;
  out.reserve(b);
  for (int i = 0; i < b; ++i) out.push_back(ad::element(nll, i, 0));
  return out;
}

std::vector<Var> in_batch_softmax_loss(Tape& tape, const EncoderModel& model, const Tokenizer& tok,
                                       const std::vector<Example>& batch,
                                       const SimilarityConfig& sim) {
  std::vector<std::vector<int>> q, d;
  for (const auto& e : batch) {
    q.push_back(tokens_or_unk(tok, e.query));
    d.push_back(tokens_or_unk(tok, e.document));
  }
  return in_batch_softmax_loss(tape, model, q, d, sim);
}

std::string to_string(Sensitivity s) { return s == Sensitivity::kCoupled ? "coupled" : "per_pair"; }

Sensitivity sensitivity_from_string(const std::string& s) {
  if (s == "coupled") return Sensitivity::kCoupled;
  if (s == "per_pair") return Sensitivity::kPerPair;
  throw Error("unknown sensitivity '" + s + "'");
}

std::size_t batch_cap(std::size_t expected_batch_size) {
  const double b = static_cast<double>(expected_batch_size);
  return static_cast<std::size_t>(std::ceil(b + 4.0 * std::sqrt(b)));
}

void RetrieverTrainConfig::validate() const {
  check(batch_size >= 1, "retriever training: batch_size must be >= 1");
  optimizer.validate();
}

void to_json(nlohmann::json& j, const RetrieverTrainConfig& c) {
  j = {{"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"optimizer", c.optimizer},
       {"sensitivity", to_string(c.sensitivity)},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, RetrieverTrainConfig& c) {
  c = RetrieverTrainConfig{};
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  if (j.contains("optimizer")) c.optimizer = j.at("optimizer").get<dp::OptimizerConfig>();
  if (j.contains("sensitivity")) c.sensitivity = sensitivity_from_string(j.at("sensitivity").get<std::string>());
  c.seed = j.value("seed", c.seed);
}

TrainReport train_retriever(EncoderModel& model, const Tokenizer& tok, const Corpus& corpus,
                            const RetrieverTrainConfig& config, const SimilarityConfig& sim,
                            const TrainMode& mode) {
  config.validate();
  sim.validate();
  check(!corpus.empty(), "train_retriever: empty corpus");
  check(static_cast<Index>(tok.size()) == model.dims().vocab,
        "train_retriever: tokenizer/model vocab mismatch");
  const std::size_t n = corpus.size();
  std::vector<std::vector<int>> queries, docs;
  for (const auto& e : corpus.examples) {
    queries.push_back(tokens_or_unk(tok, e.query));
    docs.push_back(tokens_or_unk(tok, e.document));
  }
  auto gather = [&](const std::vector<std::size_t>& idx, std::size_t lo, std::size_t hi) {
    std::pair<std::vector<std::vector<int>>, std::vector<std::vector<int>>> out;
    for (std::size_t i = lo; i < hi; ++i) {
      out.first.push_back(queries[idx[i]]);
      out.second.push_back(docs[idx[i]]);
    }
    return out;
  };
  const std::size_t per_epoch = steps_per_epoch(n, config.batch_size);
  Rng rng(Rng::mix(config.seed ^ 0x7e7e1ULL));
  TrainReport report;

  if (!mode.is_private()) {
    dp::OptimizerState opt(model.params(), config.optimizer);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
      rng.shuffle(order);
      double total = 0.0;
      for (std::size_t s = 0; s < per_epoch; ++s) {
        const auto [q, d] = gather(order, s * n / per_epoch, (s + 1) * n / per_epoch);
        ad::Gradient g = ad::Gradient::zeros_like(model.params());
        Tape tape(model.params());
        const auto losses = in_batch_softmax_loss(tape, model, q, d, sim);
        Var loss = losses.front();
        for (std::size_t i = 1; i < losses.size(); ++i) loss = loss + losses[i];
        total += loss.item();
        tape.backward(ad::scale(loss, 1.0 / static_cast<Scalar>(losses.size())), g);
        opt.step(model.params(), g);
        ++report.steps;
      }
      report.epoch_losses.push_back(total / static_cast<double>(n));
    }
    report.raw_steps = opt.raw_steps();
    report.budget = PrivacyBudget::infinite();
    return report;
  }

  check(mode.dp.noise_multiplier > 0.0, "DP training needs a positive noise multiplier");
  dp::DpConfig dpc = mode.dp;
  dpc.expected_batch_size = config.batch_size;
  const std::size_t cap = batch_cap(config.batch_size);
  if (config.sensitivity == Sensitivity::kCoupled) {
    // Adding a pair changes its own term, may displace one kept pair, and
    // moves each of the other kept terms by at most 2C.
    dpc.sensitivity_factor = 2.0 * static_cast<double>(cap);
  }
  dpc.validate();
  const double q = std::min(1.0, static_cast<double>(config.batch_size) / static_cast<double>(n));
  dp::OptimizerState opt(model.params(), config.optimizer, /*private_only=*/true);
  dp::DpAggregator agg(model.params().layout_ptr(), dpc);
  Rng noise = rng.fork(dpc.seed ^ 0x90153ULL);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    double total = 0.0;
    std::size_t seen = 0;
    for (std::size_t s = 0; s < per_epoch; ++s) {
      auto batch = dp::poisson_sample(n, q, rng);
      if (config.sensitivity == Sensitivity::kCoupled && batch.size() > cap) {
        rng.shuffle(std::span<std::size_t>(batch));
        batch.resize(cap);
        std::sort(batch.begin(), batch.end());
      }
      if (!batch.empty()) {
        const auto [qs, ds] = gather(batch, 0, batch.size());
        std::vector<double> values;
        const auto grads = ad::per_example_grads(
            [&](Tape& tape) {
              auto l = in_batch_softmax_loss(tape, model, qs, ds, sim);
              for (const auto& v : l) values.push_back(v.item());
              return l;
            },
            batch.size(), model.params());
        for (const auto& g : grads) agg.add(g);
        for (double v : values) total += v;
        seen += values.size();
      }
      opt.step(model.params(), agg.finish(noise));
      ++report.steps;
    }
    report.epoch_losses.push_back(seen ? total / static_cast<double>(seen) : 0.0);
  }
  report.raw_steps = opt.raw_steps();
  report.private_steps = opt.private_steps();
  check(report.raw_steps == 0, "DP training applied a raw gradient");
  report.accountant = {default_orders(), q, dpc.noise_multiplier, report.steps};
  report.budget = {epsilon_for(report.accountant, mode.delta).epsilon, mode.delta};
  return report;
}

nlohmann::json encoder_checkpoint(const EncoderModel& model, const Tokenizer& tok) {
  return make_checkpoint("encoder", model.dims(), tok, model.params());
}

std::pair<EncoderModel, Tokenizer> encoder_from_checkpoint(const nlohmann::json& j) {
  auto c = read_checkpoint(j, "encoder");
  const EncoderDims dims = c.dims.get<EncoderDims>();
  check(static_cast<Index>(c.tokenizer.size()) == dims.vocab,
        "encoder checkpoint: vocab size mismatch");
  return {EncoderModel::from_params(dims, std::move(c.params)), std::move(c.tokenizer)};
}

void save_encoder(const std::filesystem::path& path, const EncoderModel& model, const Tokenizer& tok) {
  write_json_file(path, encoder_checkpoint(model, tok));
}

std::pair<EncoderModel, Tokenizer> load_encoder(const std::filesystem::path& path) {
  return encoder_from_checkpoint(read_json_file(path));
}

}  // namespace qpriv::retriever
