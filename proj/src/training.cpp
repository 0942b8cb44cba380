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

#include "qpriv/training.hpp"

#include <algorithm>
#include <cmath>

#include "qpriv/types.hpp"

namespace qpriv {

void to_json(nlohmann::json& j, const TrainReport& r) {
  j = {{"budget", r.budget},
       {"steps", r.steps},
       {"raw_steps", r.raw_steps},
       {"private_steps", r.private_steps},
       {"epoch_losses", r.epoch_losses}};
  if (!r.budget.is_infinite()) j["accountant"] = r.accountant;
}

std::size_t steps_per_epoch(std::size_t n, std::size_t batch) {
  check(batch >= 1, "batch size must be >= 1");
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(
                                      static_cast<double>(n) / static_cast<double>(batch))));
}

TrainMode mode_for_epsilon(double epsilon, std::size_t n, std::size_t batch, std::size_t epochs,
                           double clip_norm, std::uint64_t noise_seed) {
  if (std::isinf(epsilon)) return TrainMode::non_private();
  check(n >= 1 && epochs >= 1, "mode_for_epsilon: empty training run");
  const double q = std::min(1.0, static_cast<double>(batch) / static_cast<double>(n));
  const double delta = default_delta(n);
  const double sigma = calibrate_sigma({epsilon, delta}, q, epochs * steps_per_epoch(n, batch));
  return TrainMode::private_({.clip_norm = clip_norm,
                              .noise_multiplier = sigma,
                              .expected_batch_size = batch,
                              .seed = noise_seed},
                             delta);
}

}  // namespace qpriv
