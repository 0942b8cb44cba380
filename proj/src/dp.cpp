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

#include "qpriv/dp.hpp"

#include <cmath>

namespace qpriv::dp {

void DpConfig::validate() const {
  check(clip_norm > 0.0 && std::isfinite(clip_norm), "clip_norm must be positive");
  check(noise_multiplier >= 0.0 && std::isfinite(noise_multiplier),
        "noise_multiplier must be nonnegative");
  check(expected_batch_size >= 1, "expected_batch_size must be >= 1");
  check(sensitivity_factor >= 1.0 && std::isfinite(sensitivity_factor),
        "sensitivity_factor must be >= 1");
}

void to_json(nlohmann::json& j, const DpConfig& c) {
  j = {{"clip_norm", c.clip_norm},
       {"noise_multiplier", c.noise_multiplier},
       {"expected_batch_size", c.expected_batch_size},
       {"seed", c.seed},
       {"sensitivity_factor", c.sensitivity_factor}};
}

void from_json(const nlohmann::json& j, DpConfig& c) {
  c = DpConfig{};
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.noise_multiplier = j.value("noise_multiplier", c.noise_multiplier);
  c.expected_batch_size = j.value("expected_batch_size", c.expected_batch_size);
  c.seed = j.value("seed", c.seed);
  c.sensitivity_factor = j.value("sensitivity_factor", c.sensitivity_factor);
}

ad::Gradient clip_gradient(const ad::Gradient& g, Scalar clip_norm) {
  check(clip_norm > 0.0, "clip_gradient: clip norm must be positive");
  ad::Gradient out = g;
  const Scalar norm = g.l2_norm();
  if (norm > clip_norm) out *= clip_norm / norm;
  return out;
}

DpAggregator::DpAggregator(std::shared_ptr<const ad::ParamLayout> layout, const DpConfig& config)
    : config_(config), sum_(std::move(layout)) {
  config_.validate();
}

void DpAggregator::add(const ad::Gradient& g) {
  check(g.layout() == sum_.layout(), "DpAggregator: gradient layout mismatch");
  const Scalar norm = g.l2_norm();
  const Scalar factor = norm > config_.clip_norm ? config_.clip_norm / norm : 1.0;
  sum_.flat() += factor * g.flat();
  ++count_;
}

PrivateGradient DpAggregator::finish(Rng& rng) {
  const Scalar stddev = config_.noise_multiplier * config_.clip_norm * config_.sensitivity_factor;
  Vector& v = sum_.flat();
  if (stddev > 0.0) {
    for (Index i = 0; i < v.size(); ++i) v[i] += stddev * rng.normal();
  }
  ad::Gradient out = sum_;
  out *= 1.0 / static_cast<Scalar>(config_.expected_batch_size);
  const std::size_t n = count_;
  sum_.set_zero();
  count_ = 0;
  return PrivateGradient(std::move(out), n);
}

PrivateGradient privatize_batch(const std::vector<ad::Gradient>& grads, const DpConfig& config,
                                Rng& rng) {
  check(!grads.empty(), "privatize_batch: empty gradient list");
  DpAggregator agg(grads.front().layout_ptr(), config);
  for (const auto& g : grads) agg.add(g);
  return agg.finish(rng);
}

std::string to_string(OptimizerKind k) { return k == OptimizerKind::kSgd ? "sgd" : "adam"; }

OptimizerKind optimizer_kind_from_string(const std::string& s) {
  if (s == "sgd") return OptimizerKind::kSgd;
  if (s == "adam") return OptimizerKind::kAdamLike;
  throw Error("unknown optimizer '" + s + "'");
}

void OptimizerConfig::validate() const {
  check(learning_rate >= 0.0 && std::isfinite(learning_rate), "learning_rate must be >= 0");
  check(beta1 >= 0.0 && beta1 < 1.0, "beta1 must lie in [0, 1)");
  check(beta2 >= 0.0 && beta2 < 1.0, "beta2 must lie in [0, 1)");
  check(epsilon > 0.0, "adam epsilon must be positive");
}

void to_json(nlohmann::json& j, const OptimizerConfig& c) {
  j = {{"kind", to_string(c.kind)},
       {"learning_rate", c.learning_rate},
       {"beta1", c.beta1},
       {"beta2", c.beta2},
       {"epsilon", c.epsilon}};
}

void from_json(const nlohmann::json& j, OptimizerConfig& c) {
  c = OptimizerConfig{};
  c.kind = optimizer_kind_from_string(j.value("kind", to_string(c.kind)));
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.epsilon = j.value("epsilon", c.epsilon);
}

OptimizerState::OptimizerState(const ad::ParamSet& params, const OptimizerConfig& config,
                               bool private_only)
    : config_(config), layout_(params.layout_ptr()), private_only_(private_only) {
  config_.validate();
  if (config_.kind == OptimizerKind::kAdamLike) {
    m_ = Vector::Zero(params.size());
    v_ = Vector::Zero(params.size());
  }
}

void OptimizerState::step(ad::ParamSet& params, const ad::Gradient& g) {
  check(!private_only_, "optimizer is private-only; raw gradients are rejected");
  check(g.layout() == *layout_, "optimizer step: gradient layout mismatch");
  apply(params, g.flat());
  ++raw_steps_;
}

void OptimizerState::step(ad::ParamSet& params, const PrivateGradient& g) {
  check(g.gradient().layout() == *layout_, "optimizer step: gradient layout mismatch");
  apply(params, g.gradient().flat());
  ++private_steps_;
}

void OptimizerState::apply(ad::ParamSet& params, const Vector& g) {
  check(params.layout() == *layout_, "optimizer step: parameter layout mismatch");
  ++step_count_;
  const Scalar lr = config_.learning_rate;
  if (config_.kind == OptimizerKind::kSgd) {
    params.flat() -= lr * g;
    return;
  }
  const Scalar b1 = config_.beta1;
  const Scalar b2 = config_.beta2;
  m_ = b1 * m_ + (1.0 - b1) * g;
  v_ = b2 * v_ + (1.0 - b2) * g.cwiseAbs2();
  const Scalar t = static_cast<Scalar>(step_count_);
  const Scalar c1 = 1.0 - std::pow(b1, t);
  const Scalar c2 = 1.0 - std::pow(b2, t);
  params.flat().array() -=
      lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + config_.epsilon);
}

std::vector<std::size_t> poisson_sample(std::size_t n, double q, Rng& rng) {
  check(q >= 0.0 && q <= 1.0, "poisson_sample: rate must lie in [0, 1]");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (rng.bernoulli(q)) out.push_back(i);
  }
  return out;
}

}  // namespace qpriv::dp
