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


#ifndef QPRIV_TRAINING_HPP_
#define QPRIV_TRAINING_HPP_

#include <cstddef>
#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "qpriv/accountant.hpp"
#include "qpriv/dp.hpp"

namespace qpriv {

struct TrainMode {
  enum class Kind { kNonPrivate, kDp } kind = Kind::kNonPrivate;
  dp::DpConfig dp;     // clip norm and noise multiplier
  double delta = 0.0;  // for reporting the realized budget

  static TrainMode non_private() { return {}; }
  static TrainMode private_(const dp::DpConfig& config, double delta) {
    return {Kind::kDp, config, delta};
  }
  bool is_private() const { return kind == Kind::kDp; }
};

struct TrainReport {
  PrivacyBudget budget;  // infinite for non-private training
  AccountantState accountant;
  std::size_t steps = 0;
  std::size_t raw_steps = 0;      // optimizer updates from raw gradients
  std::size_t private_steps = 0;  // updates from privatized gradients
  std::vector<double> epoch_losses;
};

void to_json(nlohmann::json& j, const TrainReport& r);

// round(n / batch), at least one. Shared by every trainer so that sigma can
// be calibrated for the exact step count before training starts.
std::size_t steps_per_epoch(std::size_t n, std::size_t batch);

// Infinite epsilon gives non-private training. Otherwise sigma is calibrated
// for q = batch / n, epochs * steps_per_epoch(n, batch) steps and
// delta = 1 / (2n).
TrainMode mode_for_epsilon(double epsilon, std::size_t n, std::size_t batch, std::size_t epochs,
                           double clip_norm, std::uint64_t noise_seed);

}  // namespace qpriv

#endif  // QPRIV_TRAINING_HPP_
