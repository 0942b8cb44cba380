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


#ifndef QPRIV_DP_HPP_
#define QPRIV_DP_HPP_

// DP-SGD building blocks: per-example clipping, Gaussian noising of the
// clipped sum, and the optimizers that consume the result.

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "qpriv/autodiff.hpp"
#include "qpriv/rng.hpp"
#include "qpriv/types.hpp"

namespace qpriv::dp {

struct DpConfig {
  Scalar clip_norm = 0.1;
  Scalar noise_multiplier = 1.0;
  std::size_t expected_batch_size = 32;
  std::uint64_t seed = 0;
  // L2 sensitivity of the clipped sum in units of clip_norm. 1 when each
  // example only reaches its own term; larger for coupled losses.
  Scalar sensitivity_factor = 1.0;

  void validate() const;
};

void to_json(nlohmann::json& j, const DpConfig& c);
void from_json(const nlohmann::json& j, DpConfig& c);

// g * min(1, C / |g|).
ad::Gradient clip_gradient(const ad::Gradient& g, Scalar clip_norm);

// A gradient that has been clipped and noised. Only privatize_batch and
// DpAggregator can construct one, so code that holds a PrivateGradient has
// provably gone through the mechanism.
class PrivateGradient {
 public:
  const ad::Gradient& gradient() const { return g_; }
  // Number of per-example gradients that entered the clipped sum.
  std::size_t contributors() const { return contributors_; }

 private:
  friend class DpAggregator;
  PrivateGradient(ad::Gradient g, std::size_t contributors)
      : g_(std::move(g)), contributors_(contributors) {}
  ad::Gradient g_;
  std::size_t contributors_ = 0;
};

// Streaming form of privatize_batch: clip-and-add one example at a time, then
// noise once. Keeps memory at one gradient regardless of batch size.
class DpAggregator {
 public:
  DpAggregator(std::shared_ptr<const ad::ParamLayout> layout, const DpConfig& config);

  void add(const ad::Gradient& g);
  std::size_t count() const { return count_; }
  // (sum + N(0, sigma^2 (kC)^2 I)) / B, k the sensitivity factor and B the
  // expected batch size. Resets the accumulator.
  PrivateGradient finish(Rng& rng);

 private:
  DpConfig config_;
  ad::Gradient sum_;
  std::size_t count_ = 0;
};

// (1/B) (sum_i clip(g_i, C) + z), z ~ N(0, sigma^2 C^2 I), B the expected
// batch size. The noise draw consumes one normal per coordinate in flat
// order.
PrivateGradient privatize_batch(const std::vector<ad::Gradient>& grads, const DpConfig& config,
                                Rng& rng);

enum class OptimizerKind { kSgd, kAdamLike };

std::string to_string(OptimizerKind k);
OptimizerKind optimizer_kind_from_string(const std::string& s);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdamLike;
  Scalar learning_rate = 1e-3;
  Scalar beta1 = 0.9;
  Scalar beta2 = 0.999;
  Scalar epsilon = 1e-8;

  void validate() const;
};

void to_json(nlohmann::json& j, const OptimizerConfig& c);
void from_json(const nlohmann::json& j, OptimizerConfig& c);

class OptimizerState {
 public:
  // A private-only optimizer refuses raw gradients.
  OptimizerState(const ad::ParamSet& params, const OptimizerConfig& config,
                 bool private_only = false);

  void step(ad::ParamSet& params, const ad::Gradient& g);
  void step(ad::ParamSet& params, const PrivateGradient& g);

  const OptimizerConfig& config() const { return config_; }
  std::size_t step_count() const { return step_count_; }
  // Instrumentation: how many updates came from each gradient kind.
  std::size_t raw_steps() const { return raw_steps_; }
  std::size_t private_steps() const { return private_steps_; }
  const Vector& first_moment() const { return m_; }
  const Vector& second_moment() const { return v_; }

 private:
  void apply(ad::ParamSet& params, const Vector& g);

  OptimizerConfig config_;
  std::shared_ptr<const ad::ParamLayout> layout_;
  bool private_only_ = false;
  Vector m_;
  Vector v_;
  std::size_t step_count_ = 0;
  std::size_t raw_steps_ = 0;
  std::size_t private_steps_ = 0;
};

// Poisson subsampling: each of n indices is kept independently with
// probability q, in increasing order.
std::vector<std::size_t> poisson_sample(std::size_t n, double q, Rng& rng);

}  // namespace qpriv::dp

#endif  // QPRIV_DP_HPP_
