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

#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

namespace qpriv::dp {
namespace {

ad::ParamSet two_coordinate_params() {
  ad::ParamSet p;
  p.add("w", Matrix::Zero(1, 2));
  return p;
}

ad::Gradient make_grad(const ad::ParamSet& p, std::initializer_list<Scalar> values) {
  ad::Gradient g = ad::Gradient::zeros_like(p);
  Index i = 0;
  for (Scalar v : values) g.flat()[i++] = v;
  return g;
}

ad::ParamSet random_params(Index n, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(1, n);
  for (Index i = 0; i < n; ++i) m(0, i) = rng.normal();
  ad::ParamSet p;
  p.add("w", m);
  return p;
}

ad::Gradient random_grad(const ad::ParamSet& p, Rng& rng, Scalar scale) {
  ad::Gradient g = ad::Gradient::zeros_like(p);
  for (Index i = 0; i < g.flat().size(); ++i) g.flat()[i] = scale * rng.normal();
  return g;
}

TEST(ClipTest, ScalesDown) {
  const auto p = two_coordinate_params();
  const auto c = clip_gradient(make_grad(p, {3, 4}), 1.0);
  EXPECT_DOUBLE_EQ(c.flat()[0], 0.6);
  EXPECT_DOUBLE_EQ(c.flat()[1], 0.8);
}

TEST(ClipTest, SmallGradientUnchanged) {
  const auto p = two_coordinate_params();
  const auto g = make_grad(p, {0.3, 0.4});
  EXPECT_EQ(clip_gradient(g, 1.0).flat(), g.flat());
}

TEST(ClipTest, ZeroStaysZero) {
  const auto p = two_coordinate_params();
  EXPECT_TRUE(clip_gradient(make_grad(p, {0, 0}), 1.0).flat().isZero());
}

TEST(ClipTest, NonPositiveNormIsAnError) {
  const auto p = two_coordinate_params();
  EXPECT_THROW(clip_gradient(make_grad(p, {1, 1}), 0.0), Error);
  EXPECT_THROW(clip_gradient(make_grad(p, {1, 1}), -1.0), Error);
}

TEST(ClipTest, NormBoundAndDirectionOnRandomInputs) {
  const auto p = random_params(17, 1);
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    const auto g = random_grad(p, rng, rng.uniform() * 3);
    const Scalar c = 0.1 + rng.uniform();
    const auto out = clip_gradient(g, c);
    EXPECT_LE(out.l2_norm(), c * (1 + 1e-12));
    if (g.l2_norm() <= c) {
      EXPECT_EQ(out.flat(), g.flat());
    } else {
      EXPECT_NEAR(out.flat().dot(g.flat()) / (out.l2_norm() * g.l2_norm()), 1.0, 1e-12);
    }
  }
}

TEST(PrivatizeTest, ZeroNoiseIsMeanOfClipped) {
  const auto p = two_coordinate_params();
  DpConfig config{.clip_norm = 1.0, .noise_multiplier = 0.0, .expected_batch_size = 2};
  Rng rng(0);
  const auto out = privatize_batch({make_grad(p, {3, 4}), make_grad(p, {0.2, 0.0})}, config, rng);
  EXPECT_NEAR(out.gradient().flat()[0], (0.6 + 0.2) / 2, 1e-15);
  EXPECT_NEAR(out.gradient().flat()[1], 0.8 / 2, 1e-15);
  EXPECT_EQ(out.contributors(), 2u);
}

TEST(PrivatizeTest, DividesByExpectedNotRealizedBatchSize) {
  const auto p = two_coordinate_params();
  DpConfig config{.clip_norm = 10.0, .noise_multiplier = 0.0, .expected_batch_size = 4};
  Rng rng(0);
  const auto out = privatize_batch({make_grad(p, {1, 2})}, config, rng);
  EXPECT_DOUBLE_EQ(out.gradient().flat()[0], 0.25);
  EXPECT_DOUBLE_EQ(out.gradient().flat()[1], 0.5);
}

TEST(PrivatizeTest, EmptyListIsAnError) {
  Rng rng(0);
  EXPECT_THROW(privatize_batch({}, DpConfig{}, rng), Error);
}

TEST(PrivatizeTest, ZeroNoisePermutationInvariant) {
  const auto p = random_params(9, 3);
  Rng rng(4);
  std::vector<ad::Gradient> grads;
  for (int i = 0; i < 6; ++i) grads.push_back(random_grad(p, rng, 1.0));
  DpConfig config{.clip_norm = 0.7, .noise_multiplier = 0.0, .expected_batch_size = 6};
  const auto a = privatize_batch(grads, config, rng);
  std::reverse(grads.begin(), grads.end());
  const auto b = privatize_batch(grads, config, rng);
  EXPECT_LT((a.gradient().flat() - b.gradient().flat()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(PrivatizeTest, DeterministicGivenSeed) {
  const auto p = random_params(5, 5);
  const auto g = make_grad(p, {1, 2, 3, 4, 5});
  DpConfig config{.clip_norm = 1.0, .noise_multiplier = 1.3, .expected_batch_size = 3};
  Rng a(77);
  Rng b(77);
  EXPECT_EQ(privatize_batch({g}, config, a).gradient().flat(),
            privatize_batch({g}, config, b).gradient().flat());
}

TEST(PrivatizeTest, SwappingOneExampleMovesSumByAtMostTwoC) {
  const auto p = random_params(11, 6);
  Rng rng(7);
  const Scalar c = 0.5;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<ad::Gradient> grads;
    for (int i = 0; i < 5; ++i) grads.push_back(random_grad(p, rng, 2.0));
    auto swapped = grads;
    swapped[rng.below(5)] = random_grad(p, rng, 2.0);
    DpConfig config{.clip_norm = c, .noise_multiplier = 0.0, .expected_batch_size = 1};
    const Vector a = privatize_batch(grads, config, rng).gradient().flat();
    const Vector b = privatize_batch(swapped, config, rng).gradient().flat();
    EXPECT_LE((a - b).norm(), 2 * c * (1 + 1e-12));
  }
}

TEST(PrivatizeTest, MonteCarloMomentsMatchMechanism) {
  const auto p = two_coordinate_params();
  const std::vector<ad::Gradient> grads = {make_grad(p, {3, 4}), make_grad(p, {0.1, -0.2})};
  DpConfig config{.clip_norm = 1.0, .noise_multiplier = 1.2, .expected_batch_size = 4};
  DpConfig noiseless = config;
  noiseless.noise_multiplier = 0.0;
  Rng rng(11);
  const Vector clean = privatize_batch(grads, noiseless, rng).gradient().flat();
  const int draws = 100000;
  Vector sum = Vector::Zero(2);
  Vector sum_sq = Vector::Zero(2);
  for (int i = 0; i < draws; ++i) {
    const Vector v = privatize_batch(grads, config, rng).gradient().flat();
    sum += v;
    sum_sq += v.cwiseAbs2();
  }
  const Scalar var_expected = std::pow(1.2 * 1.0 / 4, 2);
  for (Index k = 0; k < 2; ++k) {
    const Scalar mean = sum[k] / draws;
    const Scalar var = (sum_sq[k] - draws * mean * mean) / (draws - 1);
    EXPECT_NEAR(var, var_expected, 0.05 * var_expected);
    EXPECT_NEAR(mean, clean[k], 4 * std::sqrt(var_expected / draws));
  }
}

TEST(AggregatorTest, MatchesBatchForm) {
  const auto p = random_params(6, 8);
  Rng gen(9);
  std::vector<ad::Gradient> grads;
  for (int i = 0; i < 4; ++i) grads.push_back(random_grad(p, gen, 1.0));
  DpConfig config{.clip_norm = 0.5, .noise_multiplier = 0.9, .expected_batch_size = 4};
  Rng a(3);
  Rng b(3);
  DpAggregator agg(p.layout_ptr(), config);
  for (const auto& g : grads) agg.add(g);
  EXPECT_EQ(agg.finish(a).gradient().flat(), privatize_batch(grads, config, b).gradient().flat());
  EXPECT_EQ(agg.count(), 0u);
}

TEST(OptimizerTest, SgdArithmetic) {
  ad::ParamSet p;
  p.add("w", Matrix::Constant(1, 1, 1.0));
  OptimizerState opt(p, {.kind = OptimizerKind::kSgd, .learning_rate = 0.1});
  ad::Gradient g = ad::Gradient::zeros_like(p);
  g.flat()[0] = 2.0;
  opt.step(p, g);
  EXPECT_DOUBLE_EQ(p.flat()[0], 0.8);
  EXPECT_EQ(opt.step_count(), 1u);
}

TEST(OptimizerTest, ZeroGradientSgdLeavesParams) {
  auto p = random_params(4, 10);
  const Vector before = p.flat();
  OptimizerState opt(p, {.kind = OptimizerKind::kSgd, .learning_rate = 0.5});
  opt.step(p, ad::Gradient::zeros_like(p));
  EXPECT_EQ(p.flat(), before);
}

TEST(OptimizerTest, AdamFirstStepMagnitudeIsLearningRate) {
  ad::ParamSet p;
  p.add("w", Matrix::Constant(1, 1, 0.0));
  OptimizerState opt(p, {.kind = OptimizerKind::kAdamLike, .learning_rate = 0.001});
  ad::Gradient g = ad::Gradient::zeros_like(p);
  g.flat()[0] = 1.0;
  opt.step(p, g);
  // m_hat = 1, v_hat = 1, so the update is lr / (1 + 1e-8).
  EXPECT_NEAR(p.flat()[0], -0.001 / (1 + 1e-8), 1e-15);
  EXPECT_NEAR(opt.first_moment()[0], 0.1, 1e-15);
  EXPECT_NEAR(opt.second_moment()[0], 0.001, 1e-15);
}

TEST(OptimizerTest, AdamMatchesHandRecurrence) {
  ad::ParamSet p;
  p.add("w", Matrix::Constant(1, 1, 0.5));
  OptimizerState opt(p, {.kind = OptimizerKind::kAdamLike, .learning_rate = 0.01});
  double theta = 0.5, m = 0, v = 0;
  const double gs[] = {0.3, -1.2, 0.7};
  for (int t = 1; t <= 3; ++t) {
    ad::Gradient g = ad::Gradient::zeros_like(p);
    g.flat()[0] = gs[t - 1];
    opt.step(p, g);
    m = 0.9 * m + 0.1 * gs[t - 1];
    v = 0.999 * v + 0.001 * gs[t - 1] * gs[t - 1];
    theta -= 0.01 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
  }
  EXPECT_NEAR(p.flat()[0], theta, 1e-14);
}

TEST(OptimizerTest, ShapeMismatchIsAnError) {
  auto p = random_params(3, 11);
  auto other = random_params(4, 12);
  OptimizerState opt(p, {.kind = OptimizerKind::kSgd, .learning_rate = 0.1});
  EXPECT_THROW(opt.step(p, ad::Gradient::zeros_like(other)), Error);
}

TEST(OptimizerTest, PrivateOnlyRejectsRawGradientsAndCounts) {
  auto p = random_params(3, 13);
  OptimizerState opt(p, {.kind = OptimizerKind::kSgd, .learning_rate = 0.1}, true);
  EXPECT_THROW(opt.step(p, ad::Gradient::zeros_like(p)), Error);
  Rng rng(1);
  opt.step(p, privatize_batch({ad::Gradient::zeros_like(p)}, DpConfig{}, rng));
  EXPECT_EQ(opt.private_steps(), 1u);
  EXPECT_EQ(opt.raw_steps(), 0u);
}

TEST(PoissonSampleTest, RateAndOrder) {
  Rng rng(14);
  const auto s = poisson_sample(100000, 0.03, rng);
  EXPECT_NEAR(static_cast<double>(s.size()), 3000.0, 4 * std::sqrt(3000.0 * 0.97));
  EXPECT_TRUE(std::is_sorted(s.begin(), s.end()));
  EXPECT_TRUE(poisson_sample(10, 0.0, rng).empty());
  EXPECT_EQ(poisson_sample(10, 1.0, rng).size(), 10u);
}

}  // namespace
}  // namespace qpriv::dp
