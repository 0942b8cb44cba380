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

#include "qpriv/lm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "qpriv/checkpoint.hpp"
#include "qpriv/types.hpp"

namespace qpriv::lm {

using ad::Tape;
using ad::Var;

namespace {

constexpr Scalar kNormEps = 1e-6;
constexpr Scalar kGeluK = 0.7978845608028654;  // sqrt(2 / pi)
constexpr Scalar kGeluC = 0.044715;

std::string block_name(Index b, const char* part) {
  return "block" + std::to_string(b) + "." + part;
}

Matrix gaussian(Index rows, Index cols, Scalar stddev, Rng& rng) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * rng.normal();
  return m;
}

Matrix rms_norm_plain(const Matrix& x, const Eigen::Map<const Matrix>& gain) {
  Vector inv_rms = ((x.array().square().rowwise().mean()) + kNormEps).rsqrt();
  Matrix normed = x.array().colwise() * inv_rms.array();
  return normed.array().rowwise() * gain.row(0).array();
}

Matrix gelu_plain(const Matrix& m) {
  auto x = m.array();
  return (0.5 * x * (1.0 + (kGeluK * (x + kGeluC * x.cube())).tanh())).matrix();
}

RowVector log_softmax_row(const RowVector& z) {
  const Scalar mx = z.maxCoeff();
  const RowVector shifted = z.array() - mx;
  return shifted.array() - std::log(shifted.array().exp().sum());
}

}  // namespace

void LmDims::validate() const {
  check(vocab >= 1, "lm: empty vocabulary");
  check(d >= 1 && blocks >= 0 && max_len >= 2 && ff >= 1, "lm: invalid dimensions");
}

void to_json(nlohmann::json& j, const LmDims& d) {
  j = {{"vocab", d.vocab}, {"d", d.d}, {"blocks", d.blocks}, {"max_len", d.max_len}, {"ff", d.ff}};
}

void from_json(const nlohmann::json& j, LmDims& d) {
  d = LmDims{};
  d.vocab = j.value("vocab", d.vocab);
  d.d = j.value("d", d.d);
  d.blocks = j.value("blocks", d.blocks);
  d.max_len = j.value("max_len", d.max_len);
  d.ff = j.value("ff", d.ff);
}

// ---- sequences ---------------------------------------------------------------

std::vector<int> TrainingSequence::tokens() const {
  std::vector<int> out = input_ids;
  out.insert(out.end(), target_ids.begin(), target_ids.end());
  return out;
}

namespace {
constexpr const char* kPromptPrefix = "generate_query:";
}  // namespace

Tokenizer build_lm_tokenizer(const Corpus& corpus, std::size_t max_vocab) {
  check(!corpus.empty(), "build_lm_tokenizer: empty corpus");
  std::vector<std::string> texts;
  texts.reserve(3 * corpus.size());
  for (const auto& e : corpus.examples) {
    texts.push_back(e.query);
    texts.push_back(e.document);
    texts.push_back(kPromptPrefix);
  }
  return Tokenizer::build(texts, max_vocab);
}

std::vector<int> encode_prompt(const Tokenizer& tok, std::string_view doc, std::size_t max_input) {
  check(max_input >= 2, "encode_prompt: max_input must be >= 2");
  std::vector<int> ids = {Tokenizer::kBos};
  for (int t : tok.encode(kPromptPrefix)) ids.push_back(t);
  auto d = tok.encode(doc);
  if (d.size() > max_input) d.resize(max_input);
  ids.insert(ids.end(), d.begin(), d.end());
  ids.push_back(Tokenizer::kSep);
  return ids;
}

TrainingSequence encode_pair(const Tokenizer& tok, std::string_view doc, std::string_view query,
                             std::size_t max_input, std::size_t max_target) {
  check(max_target >= 2, "encode_pair: max_target must be >= 2");
  TrainingSequence s;
  s.input_ids = encode_prompt(tok, doc, max_input);
  s.target_ids = tok.encode(query);
  if (s.target_ids.size() > max_target) s.target_ids.resize(max_target);
  s.target_ids.push_back(Tokenizer::kEos);
  s.loss_mask.assign(s.input_ids.size(), false);
  s.loss_mask.resize(s.input_ids.size() + s.target_ids.size(), true);
  return s;
}

// ---- model -------------------------------------------------------------------

LmModel LmModel::init(const LmDims& dims, std::uint64_t seed) {
  dims.validate();
  Rng rng(Rng::mix(seed));
  LmModel m;
  m.dims_ = dims;
  const Index d = dims.d;
  const Scalar inv_sqrt_d = 1.0 / std::sqrt(static_cast<Scalar>(d));
  const Scalar residual = 1.0 / std::sqrt(2.0 * std::max<Index>(1, dims.blocks));
  auto& p = m.params_;
  p.add("tok_emb", gaussian(dims.vocab, d, inv_sqrt_d, rng));
  p.add("pos_emb", gaussian(dims.max_len, d, 0.1 * inv_sqrt_d, rng));
  for (Index b = 0; b < dims.blocks; ++b) {
    p.add(block_name(b, "ln1"), Matrix::Ones(1, d));
    p.add(block_name(b, "wq"), gaussian(d, d, inv_sqrt_d, rng));
    p.add(block_name(b, "wk"), gaussian(d, d, inv_sqrt_d, rng));
    p.add(block_name(b, "wv"), gaussian(d, d, inv_sqrt_d, rng));
    p.add(block_name(b, "wo"), gaussian(d, d, residual * inv_sqrt_d, rng));
    p.add(block_name(b, "ln2"), Matrix::Ones(1, d));
    p.add(block_name(b, "w1"), gaussian(d, dims.ff, inv_sqrt_d, rng));
    p.add(block_name(b, "b1"), Matrix::Zero(1, dims.ff));
    p.add(block_name(b, "w2"),
          gaussian(dims.ff, d, residual / std::sqrt(static_cast<Scalar>(dims.ff)), rng));
    p.add(block_name(b, "b2"), Matrix::Zero(1, d));
  }
  p.add("ln_f", Matrix::Ones(1, d));
  p.add("out_proj", gaussian(d, d, inv_sqrt_d, rng));
  return m;
}

LmModel make_lm(const LmDims& dims, ad::ParamSet params) {
  LmModel m = LmModel::init(dims, 0);
  check(params.layout() == m.params().layout(), "make_lm: parameter layout does not match dims");
  m.params() = std::move(params);
  return m;
}

Var LmModel::log_probs(Tape& t, const std::vector<int>& ids,
                       const std::vector<int>& positions) const {
  const Index n = static_cast<Index>(ids.size());
  check(n >= 1, "lm: empty input");
  check(n <= dims_.max_len, "lm: sequence of " + std::to_string(n) +
                                " tokens exceeds max_len " + std::to_string(dims_.max_len));
  for (int id : ids) {
    check(id >= 0 && id < dims_.vocab, "lm: token id " + std::to_string(id) + " out of range");
  }
  std::vector<int> pos(n);
  std::iota(pos.begin(), pos.end(), 0);
  Var x = ad::gather_rows(t.param("tok_emb"), ids) + ad::gather_rows(t.param("pos_emb"), pos);
  const Scalar att_scale = 1.0 / std::sqrt(static_cast<Scalar>(dims_.d));
  for (Index b = 0; b < dims_.blocks; ++b) {
    Var h = ad::rms_norm_rows(x, t.param(block_name(b, "ln1")), kNormEps);
    Var q = ad::matmul(h, t.param(block_name(b, "wq")));
    Var k = ad::matmul(h, t.param(block_name(b, "wk")));
    Var v = ad::matmul(h, t.param(block_name(b, "wv")));
    Var att = ad::causal_softmax(ad::scale(ad::matmul_nt(q, k), att_scale));
    x = x + ad::matmul(ad::matmul(att, v), t.param(block_name(b, "wo")));
    Var h2 = ad::rms_norm_rows(x, t.param(block_name(b, "ln2")), kNormEps);
    Var f = ad::gelu(ad::add_row(ad::matmul(h2, t.param(block_name(b, "w1"))),
                                 t.param(block_name(b, "b1"))));
    x = x + ad::add_row(ad::matmul(f, t.param(block_name(b, "w2"))), t.param(block_name(b, "b2")));
  }
  Var h = ad::rms_norm_rows(x, t.param("ln_f"), kNormEps);
  std::vector<bool> keep(n, false);
  std::vector<int> order;
  for (int p : positions) {
    check(p >= 0 && p < n, "lm: position out of range");
    keep[p] = true;
  }
  // masked_select keeps positions in sequence order; map back to the
  // requested order afterwards.
  Var sel = ad::masked_select_rows(h, keep);
  std::vector<int> rank(n, -1);
  int r = 0;
  for (Index i = 0; i < n; ++i) {
    if (keep[i]) rank[i] = r++;
  }
  bool in_order = static_cast<int>(positions.size()) == r;
  for (std::size_t i = 0; in_order && i < positions.size(); ++i) {
    in_order = rank[positions[i]] == static_cast<int>(i);
  }
  if (!in_order) {
    std::vector<int> rows;
    for (int p : positions) rows.push_back(rank[p]);
    sel = ad::gather_rows(sel, rows);
  }
  Var z = ad::matmul(sel, t.param("out_proj"));
  return ad::log_softmax_rows(ad::matmul_nt(z, t.param("tok_emb")));
}

Matrix LmModel::log_probs_all(const std::vector<int>& ids) const {
  Tape t(params_);
  std::vector<int> positions(ids.size());
  std::iota(positions.begin(), positions.end(), 0);
  return log_probs(t, ids, positions).value();
}

// ---- incremental decoding -------------------------------------------------------

Decoder::Decoder(const LmModel& model)
    : model_(model),
      keys_(model.dims().blocks, Matrix(0, model.dims().d)),
      values_(model.dims().blocks, Matrix(0, model.dims().d)) {}

RowVector Decoder::push(int token) {
  const auto& dims = model_.dims();
  const auto& p = model_.params();
  check(token >= 0 && token < dims.vocab, "decoder: token id out of range");
  check(static_cast<Index>(length_) < dims.max_len, "decoder: sequence exceeds max_len");
  Matrix x = p["tok_emb"].row(token) + p["pos_emb"].row(static_cast<Index>(length_));
  const Scalar att_scale = 1.0 / std::sqrt(static_cast<Scalar>(dims.d));
  for (Index b = 0; b < dims.blocks; ++b) {
    const Matrix h = rms_norm_plain(x, p[block_name(b, "ln1")]);
    const Matrix q = h * p[block_name(b, "wq")];
    Matrix& keys = keys_[b];
    Matrix& vals = values_[b];
    keys.conservativeResize(keys.rows() + 1, Eigen::NoChange);
    vals.conservativeResize(vals.rows() + 1, Eigen::NoChange);
    keys.row(keys.rows() - 1) = h * p[block_name(b, "wk")];
    vals.row(vals.rows() - 1) = h * p[block_name(b, "wv")];
    RowVector s = (q * keys.transpose()) * att_scale;
    const Scalar mx = s.maxCoeff();
    RowVector w = (s.array() - mx).exp();
    w /= w.sum();
    x += (w * vals) * p[block_name(b, "wo")];
    const Matrix h2 = rms_norm_plain(x, p[block_name(b, "ln2")]);
    Matrix f = h2 * p[block_name(b, "w1")];
    f += p[block_name(b, "b1")];
    x += gelu_plain(f) * p[block_name(b, "w2")] + p[block_name(b, "b2")];
  }
  const Matrix h = rms_norm_plain(x, p["ln_f"]);
  const RowVector logits = (h * p["out_proj"]) * p["tok_emb"].transpose();
  ++length_;
  return log_softmax_row(logits);
}

RowVector Decoder::push_all(const std::vector<int>& tokens) {
  check(!tokens.empty(), "decoder: no tokens");
  RowVector out;
  for (int t : tokens) out = push(t);
  return out;
}

// ---- loss ---------------------------------------------------------------------

Var sequence_loss(Tape& tape, const LmModel& model, const TrainingSequence& seq) {
  const auto ids = seq.tokens();
  check(seq.loss_mask.size() == ids.size(), "lm_loss: mask length differs from sequence length");
  std::vector<int> positions;
  std::vector<int> targets;
  for (std::size_t i = 1; i < ids.size(); ++i) {
    if (seq.loss_mask[i]) {
      positions.push_back(static_cast<int>(i - 1));
      targets.push_back(ids[i]);
    }
  }
  check(!positions.empty(), "lm_loss: sequence has no masked target position");
  // Everything after the last target is irrelevant under causal attention.
  const std::vector<int> prefix(ids.begin(), ids.begin() + positions.back() + 1);
  Var lp = model.log_probs(tape, prefix, positions);
  std::vector<int> rows(targets.size());
  std::iota(rows.begin(), rows.end(), 0);
  return ad::scale(ad::sum(ad::pick(lp, rows, targets)), -1.0 / static_cast<Scalar>(rows.size()));
}

std::vector<Var> lm_loss(Tape& tape, const LmModel& model, const std::vector<TrainingSequence>& batch) {
  std::vector<Var> out;
  out.reserve(batch.size());
  for (const auto& s : batch) out.push_back(sequence_loss(tape, model, s));
  return out;
}

// ---- training -------------------------------------------------------------------

void LmTrainConfig::validate() const {
  check(batch_size >= 1, "lm training: batch_size must be >= 1");
  check(max_input >= 2 && max_target >= 2, "lm training: max_input and max_target must be >= 2");
  optimizer.validate();
}

void to_json(nlohmann::json& j, const LmTrainConfig& c) {
  j = {{"epochs", c.epochs},         {"batch_size", c.batch_size}, {"optimizer", c.optimizer},
       {"max_input", c.max_input},   {"max_target", c.max_target}, {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, LmTrainConfig& c) {
  c = LmTrainConfig{};
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  if (j.contains("optimizer")) c.optimizer = j.at("optimizer").get<dp::OptimizerConfig>();
  c.max_input = j.value("max_input", c.max_input);
  c.max_target = j.value("max_target", c.max_target);
  c.seed = j.value("seed", c.seed);
}


TrainReport train_sequences(LmModel& model, const std::vector<TrainingSequence>& data,
                            const LmTrainConfig& config, const TrainMode& mode) {
  config.validate();
  check(!data.empty(), "lm training: empty training set");
  const std::size_t n = data.size();
  const std::size_t per_epoch = steps_per_epoch(n, config.batch_size);
  Rng rng(Rng::mix(config.seed ^ 0x1a7e5ULL));
  TrainReport report;

  if (!mode.is_private()) {
    dp::OptimizerState opt(model.params(), config.optimizer);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
      rng.shuffle(order);
      double total = 0.0;
      for (std::size_t s = 0; s < per_epoch; ++s) {
        const std::size_t lo = s * n / per_epoch;
        const std::size_t hi = (s + 1) * n / per_epoch;
        ad::Gradient g = ad::Gradient::zeros_like(model.params());
        {
          Tape tape(model.params());
          std::vector<Var> losses;
          for (std::size_t i = lo; i < hi; ++i) losses.push_back(sequence_loss(tape, model, data[order[i]]));
          Var loss = losses.front();
          for (std::size_t i = 1; i < losses.size(); ++i) loss = loss + losses[i];
          total += loss.item();
          tape.backward(ad::scale(loss, 1.0 / static_cast<Scalar>(losses.size())), g);
        }
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
  dpc.validate();
  const double q = std::min(1.0, static_cast<double>(config.batch_size) / static_cast<double>(n));
  dp::OptimizerState opt(model.params(), config.optimizer, /*private_only=*/true);
  dp::DpAggregator agg(model.params().layout_ptr(), dpc);
  Rng noise = rng.fork(dpc.seed ^ 0x90153ULL);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    double total = 0.0;
    std::size_t seen = 0;
    for (std::size_t s = 0; s < per_epoch; ++s) {
      const auto batch = dp::poisson_sample(n, q, rng);
      const auto losses = ad::for_each_example_grad(
          [&](Tape& tape, std::size_t i) { return sequence_loss(tape, model, data[batch[i]]); },
          batch.size(), model.params(), [&](std::size_t, const ad::Gradient& g) { agg.add(g); });
      for (double l : losses) total += l;
      seen += losses.size();
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

TrainReport train_lm(LmModel& model, const Tokenizer& tok, const Corpus& corpus,
                     const LmTrainConfig& config, const TrainMode& mode) {
  check(!corpus.empty(), "train_lm: empty corpus");
  check(static_cast<Index>(tok.size()) == model.dims().vocab, "train_lm: tokenizer/model vocab mismatch");
  std::vector<TrainingSequence> data;
  data.reserve(corpus.size());
  for (const auto& e : corpus.examples) {
    data.push_back(encode_pair(tok, e.document, e.query, config.max_input, config.max_target));
  }
  return train_sequences(model, data, config, mode);
}

TrainReport pretrain_lm(LmModel& model, const Tokenizer& tok, const Corpus& public_corpus,
                        const LmTrainConfig& config) {
  check(!public_corpus.empty(), "pretrain_lm: empty corpus");
  Rng rng(Rng::mix(config.seed ^ 0x9e7a1ULL));
  std::vector<TrainingSequence> data;
  for (const auto& [id, doc] : public_corpus.unique_documents()) {
    TrainingSequence s;
    s.input_ids = encode_prompt(tok, doc, config.max_input);
    const std::vector<int> body(s.input_ids.begin() + 3, s.input_ids.end() - 1);
    check(!body.empty(), "pretrain_lm: empty document");
    const std::size_t len = std::min<std::size_t>(body.size(), 2 + rng.below(5));
    const std::size_t start = rng.below(body.size() - len + 1);
    s.target_ids.assign(body.begin() + static_cast<long>(start),
                        body.begin() + static_cast<long>(start + len));
    s.target_ids.push_back(Tokenizer::kEos);
    s.loss_mask.assign(s.input_ids.size(), false);
    s.loss_mask.resize(s.input_ids.size() + s.target_ids.size(), true);
    data.push_back(std::move(s));
  }
  return train_sequences(model, data, config, TrainMode::non_private());
}

// ---- sampling -------------------------------------------------------------------

void SamplerConfig::validate() const {
  check(nucleus_p > 0.0 && nucleus_p <= 1.0, "sampler: nucleus_p must lie in (0, 1]");
  check(max_len >= 1, "sampler: max_len must be >= 1");
}

void to_json(nlohmann::json& j, const SamplerConfig& c) {
  j = {{"nucleus_p", c.nucleus_p}, {"max_len", c.max_len}, {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SamplerConfig& c) {
  c = SamplerConfig{};
  c.nucleus_p = j.value("nucleus_p", c.nucleus_p);
  c.max_len = j.value("max_len", c.max_len);
  c.seed = j.value("seed", c.seed);
}

int nucleus_pick(const RowVector& probs, double p, Rng& rng) {
  check(probs.size() >= 1, "nucleus_pick: empty distribution");
  const Index n = probs.size();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return probs[a] > probs[b]; });
  double mass = 0.0;
  Index keep = 0;
  while (keep < n) {
    mass += probs[order[keep]];
    ++keep;
    if (mass >= p) break;
  }
  const double u = rng.uniform() * mass;
  double acc = 0.0;
  for (Index i = 0; i < keep; ++i) {
    acc += probs[order[i]];
    if (u < acc) return order[i];
  }
  return order[keep - 1];
}

std::vector<int> nucleus_sample(const LmModel& model, const std::vector<int>& context,
                                const SamplerConfig& config, Rng& rng) {
  config.validate();
  check(!context.empty(), "nucleus_sample: empty context");
  Decoder dec(model);
  RowVector lp = dec.push_all(context);
  std::vector<int> out;
  while (out.size() < config.max_len) {
    const int next = nucleus_pick(lp.array().exp().matrix(), config.nucleus_p, rng);
    if (next == Tokenizer::kEos) break;
    out.push_back(next);
    if (out.size() == config.max_len ||
        static_cast<Index>(dec.length()) >= model.dims().max_len) {
      break;
    }
    lp = dec.push(next);
  }
  return out;
}

SynthesisResult synthesize_dataset(const LmModel& model, const Tokenizer& tok, const Corpus& docs,
                                   std::size_t per_doc, const SamplerConfig& config,
                                   std::size_t max_input) {
  check(per_doc >= 1, "synthesize: per_doc must be >= 1");
  config.validate();
  SynthesisResult r;
  r.corpus.provenance = Provenance::kSynthetic;
  Rng rng(Rng::mix(config.seed ^ 0x5e7ULL));
  for (const auto& [doc_id, doc] : docs.unique_documents()) {
    const auto prompt = encode_prompt(tok, doc, max_input);
    for (std::size_t k = 0; k < per_doc; ++k) {
      auto ids = nucleus_sample(model, prompt, config, rng);
      // Specials other than <unk> decode to nothing.
      std::string text = tok.decode(ids);
      if (text.empty()) {
        ++r.empty_generations;
        text = tok.token(Tokenizer::kUnk);
      }
      r.corpus.examples.push_back({"syn-" + doc_id + "-" + std::to_string(k), doc_id, text, doc});
    }
  }
  return r;
}

double sequence_log_prob(const LmModel& model, const std::vector<int>& context,
                         const std::vector<int>& continuation) {
  check(!context.empty(), "sequence_log_prob: empty context");
  check(!continuation.empty(), "sequence_log_prob: empty continuation");
  Decoder dec(model);
  RowVector lp = dec.push_all(context);
  double total = 0.0;
  for (std::size_t i = 0; i < continuation.size(); ++i) {
    check(continuation[i] >= 0 && continuation[i] < model.dims().vocab,
          "sequence_log_prob: token id out of range");
    total += lp[continuation[i]];
    if (i + 1 < continuation.size()) lp = dec.push(continuation[i]);
  }
  return total;
}

// ---- checkpoints -----------------------------------------------------------------

nlohmann::json lm_checkpoint(const LmModel& model, const Tokenizer& tok) {
  return make_checkpoint("lm", model.dims(), tok, model.params());
}

std::pair<LmModel, Tokenizer> lm_from_checkpoint(const nlohmann::json& j) {
  auto c = read_checkpoint(j, "lm");
  const LmDims dims = c.dims.get<LmDims>();
  check(static_cast<Index>(c.tokenizer.size()) == dims.vocab, "lm checkpoint: vocab size mismatch");
  return {make_lm(dims, std::move(c.params)), std::move(c.tokenizer)};
}

void save_lm(const std::filesystem::path& path, const LmModel& model, const Tokenizer& tok) {
  write_json_file(path, lm_checkpoint(model, tok));
}

std::pair<LmModel, Tokenizer> load_lm(const std::filesystem::path& path) {
  return lm_from_checkpoint(read_json_file(path));
}

}  // namespace qpriv::lm
