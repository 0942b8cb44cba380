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


#ifndef QPRIV_ACCOUNTANT_HPP_
#define QPRIV_ACCOUNTANT_HPP_

// Renyi-DP accounting for the Poisson-subsampled Gaussian mechanism with
// integer orders, composition over steps, and conversion to (epsilon, delta).

#include <cstddef>
#include <limits>
#include <vector>

#include <nlohmann/json.hpp>

namespace qpriv {

struct PrivacyBudget {
  double epsilon = std::numeric_limits<double>::infinity();
  double delta = 0.0;

  bool is_infinite() const { return !(epsilon < std::numeric_limits<double>::infinity()); }
  static PrivacyBudget infinite() { return {}; }
  // Finite budgets need epsilon > 0 and delta in (0, 1).
  void validate() const;
};

// Infinite epsilon is written as the string "inf".
nlohmann::json epsilon_to_json(double epsilon);
double epsilon_from_json(const nlohmann::json& j);

void to_json(nlohmann::json& j, const PrivacyBudget& b);
void from_json(const nlohmann::json& j, PrivacyBudget& b);

// 2..64, 128, 256.
std::vector<int> default_orders();

struct AccountantState {
  std::vector<int> orders = default_orders();
  double q = 1.0;
  double sigma = 1.0;
  std::size_t steps = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const AccountantState& s);

// (1/(alpha-1)) log sum_{k=0..alpha} C(alpha,k) (1-q)^(alpha-k) q^k
//     exp(k(k-1) / (2 sigma^2)),
// summed in log space.
double rdp_subsampled_gaussian(double q, double sigma, int alpha);

std::vector<double> rdp_per_step(double q, double sigma, const std::vector<int>& orders);
std::vector<double> compose(const std::vector<double>& rdp_per_step, std::size_t steps);

struct EpsilonResult {
  double epsilon = 0.0;
  int best_order = 0;
};

// eps = min_alpha rdp(alpha) + log(1/delta) / (alpha - 1).
EpsilonResult to_epsilon(const std::vector<double>& rdp_totals, const std::vector<int>& orders,
                         double delta);

EpsilonResult epsilon_for(const AccountantState& state, double delta);

// Smallest sigma (to within the bisection tolerance) whose epsilon does not
// exceed target.epsilon after `steps` steps at sampling rate q.
double calibrate_sigma(const PrivacyBudget& target, double q, std::size_t steps,
                       double tolerance = 1e-3,
                       const std::vector<int>& orders = default_orders());

// 1 / (2n).
double default_delta(std::size_t n);

}  // namespace qpriv

#endif  // QPRIV_ACCOUNTANT_HPP_
