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

#include "qpriv/accountant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qpriv/types.hpp"

namespace qpriv {

void PrivacyBudget::validate() const {
  if (is_infinite()) return;
  check(epsilon > 0.0, "epsilon must be positive");
  check(delta > 0.0 && delta < 1.0, "delta must lie in (0, 1)");
}

nlohmann::json epsilon_to_json(double epsilon) {
  if (std::isinf(epsilon)) return "inf";
  return epsilon;
}

double epsilon_from_json(const nlohmann::json& j) {
  if (j.is_string()) {
    check(j.get<std::string>() == "inf", "epsilon must be a number or \"inf\"");
    return std::numeric_limits<double>::infinity();
  }
  return j.get<double>();
}

void to_json(nlohmann::json& j, const PrivacyBudget& b) {
  j = {{"epsilon", epsilon_to_json(b.epsilon)}, {"delta", b.delta}};
}

void from_json(const nlohmann::json& j, PrivacyBudget& b) {
  b = PrivacyBudget{};
  b.epsilon = epsilon_from_json(j.at("epsilon"));
  b.delta = j.value("delta", 0.0);
}

std::vector<int> default_orders() {
  std::vector<int> orders;
  for (int a = 2; a <= 64; ++a) orders.push_back(a);
  orders.push_back(128);
  orders.push_back(256);
  return orders;
}

void AccountantState::validate() const {
  check(!orders.empty(), "accountant: no RDP orders");
  check(std::is_sorted(orders.begin(), orders.end()), "accountant: orders must be sorted");
  check(orders.front() >= 2, "accountant: orders must be integers >= 2");
  check(q > 0.0 && q <= 1.0, "accountant: sampling rate must lie in (0, 1]");
  check(sigma > 0.0, "accountant: sigma must be positive");
}

void to_json(nlohmann::json& j, const AccountantState& s) {
  j = {{"orders", s.orders}, {"q", s.q}, {"sigma", s.sigma}, {"steps", s.steps}};
}

double rdp_subsampled_gaussian(double q, double sigma, int alpha) {
  check(alpha >= 2, "rdp: order must be an integer >= 2");
  check(q >= 0.0 && q <= 1.0, "rdp: sampling rate must lie in [0, 1]");
  check(sigma > 0.0, "rdp: sigma = 0 gives unbounded privacy loss");
  if (q == 0.0) return 0.0;
  const double log_q = std::log(q);
  const double log_1mq = std::log1p(-q);
  const double a = alpha;
  const double lg_a = std::lgamma(a + 1.0);
  std::vector<double> terms;
  terms.reserve(alpha + 1);
  for (int k = 0; k <= alpha; ++k) {
    if (q == 1.0 && k < alpha) continue;  // (1 - q)^(alpha - k) = 0
    const double kd = k;
    double t = kd * (kd - 1.0) / (2.0 * sigma * sigma);
    if (k < alpha) t += (a - kd) * log_1mq;
    if (k > 0) t += kd * log_q;
    if (k > 0 && k < alpha) t += lg_a - std::lgamma(kd + 1.0) - std::lgamma(a - kd + 1.0);
    terms.push_back(t);
  }
  const double top = *std::max_element(terms.begin(), terms.end());
  double s = 0.0;
  for (double t : terms) s += std::exp(t - top);
  return std::max(0.0, (top + std::log(s)) / (a - 1.0));
}

std::vector<double> rdp_per_step(double q, double sigma, const std::vector<int>& orders) {
  std::vector<double> out;
  out.reserve(orders.size());
  for (int a : orders) out.push_back(rdp_subsampled_gaussian(q, sigma, a));
  return out;
}

std::vector<double> compose(const std::vector<double>& rdp_per_step, std::size_t steps) {
  std::vector<double> out(rdp_per_step.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = rdp_per_step[i] * static_cast<double>(steps);
  return out;
}

EpsilonResult to_epsilon(const std::vector<double>& rdp_totals, const std::vector<int>& orders,
                         double delta) {
  check(!orders.empty(), "to_epsilon: no RDP orders");
  check(rdp_totals.size() == orders.size(), "to_epsilon: one RDP value per order required");
  check(delta > 0.0 && delta < 1.0, "to_epsilon: delta must lie in (0, 1)");
  const double log_inv_delta = -std::log(delta);
  EpsilonResult best{std::numeric_limits<double>::infinity(), orders.front()};
  for (std::size_t i = 0; i < orders.size(); ++i) {
    const double eps = rdp_totals[i] + log_inv_delta / (orders[i] - 1.0);
    if (eps < best.epsilon) best = {eps, orders[i]};
  }
  return best;
}

EpsilonResult epsilon_for(const AccountantState& state, double delta) {
  state.validate();
  return to_epsilon(compose(rdp_per_step(state.q, state.sigma, state.orders), state.steps),
                    state.orders, delta);
}

double calibrate_sigma(const PrivacyBudget& target, double q, std::size_t steps, double tolerance,
                       const std::vector<int>& orders) {
  target.validate();
  check(!target.is_infinite(), "calibrate_sigma: target epsilon must be finite");
  check(tolerance > 0.0, "calibrate_sigma: tolerance must be positive");
  auto eps = [&](double sigma) {
    return epsilon_for({orders, q, sigma, steps}, target.delta).epsilon;
  };
  constexpr double kSigmaMax = 1e6;
  constexpr double kSigmaMin = 1e-3;
  double hi = 1.0;
  while (eps(hi) > target.epsilon) {
    hi *= 2.0;
    check(hi <= kSigmaMax, "calibrate_sigma: target epsilon unreachable with sigma <= 1e6");
  }
  double lo = hi / 2.0;
  while (eps(lo) <= target.epsilon) {
    hi = lo;
    lo /= 2.0;
    if (lo < kSigmaMin) return hi;
  }
  // Invariant: eps(lo) > target >= eps(hi).
  while (hi - lo >= 1e-6 && target.epsilon - eps(hi) >= tolerance) {
    const double mid = 0.5 * (lo + hi);
    (eps(mid) > target.epsilon ? lo : hi) = mid;
  }
  return hi;
}

double default_delta(std::size_t n) {
  check(n >= 1, "default_delta: n must be >= 1");
  return 1.0 / (2.0 * static_cast<double>(n));
}

}  // namespace qpriv
