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


#include "qpriv/pipeline.hpp"

#include <cmath>
#include <limits>

#include <gmock/gmock.h>
#include <gtest/gtest.h>

#include "qpriv/checkpoint.hpp"

namespace qpriv {
namespace {

using ::testing::ElementsAre;
using ::testing::HasSubstr;

constexpr double kInf = std::numeric_limits<double>::infinity();

RunConfig tiny_config() {
  RunConfig c;
  c.corpus.n_docs = 60;
  c.public_corpus.n_docs = 80;
  c.lm_dims.d = 16;
  c.lm_dims.ff = 32;
  c.lm_dims.blocks = 1;
  c.pretrain.epochs = 1;
  c.lm.epochs = 1;
  c.lm.batch_size = 16;
  c.encoder.d = 16;
  c.encoder.d_out = 16;
  c.retriever.epochs = 1;
  c.direct_dp_batch_size = 8;
  c.synthesis.sampler.max_len = 8;
  return c;
}

std::vector<std::string> arm_names(const PipelineReport& r) {
  std::vector<std::string> names;
  for (const auto& a : r.arms) names.push_back(a.name);
  return names;
}

TEST(PipelineTest, InfiniteOnlyRunsTwoArms) {
  RunConfig c = tiny_config();
  c.epsilons = {kInf};
  const auto r = run_pipeline(c, prepare(c));
  EXPECT_THAT(arm_names(r), ElementsAre("non_private/eps=inf", "dp_generator/eps=inf"));
  for (const auto& a : r.arms) {
    EXPECT_TRUE(a.ok()) << a.error;
    EXPECT_TRUE(a.realized_budget().is_infinite());
  }
}

TEST(PipelineTest, ArmsAndRealizedBudgets) {
  RunConfig c = tiny_config();
  c.epsilons = {kInf, 8.0};
  const auto r = run_pipeline(c, prepare(c));
  EXPECT_THAT(arm_names(r), ElementsAre("non_private/eps=inf", "direct_dp/eps=8", "direct_dp_per_pair/eps=8",
                                        "dp_generator/eps=inf", "dp_generator/eps=8"));
  for (const auto& a : r.arms) {
    ASSERT_TRUE(a.ok()) << a.name << ": " << a.error;
    ASSERT_TRUE(a.eval.has_value());
    EXPECT_EQ(a.eval->n_queries, r.eval_examples);
    if (std::isinf(a.target_epsilon)) continue;
    EXPECT_LE(a.realized_budget().epsilon, a.target_epsilon + 1e-3) << a.name;
    EXPECT_GT(a.realized_budget().epsilon, 0.9 * a.target_epsilon) << a.name;
    EXPECT_DOUBLE_EQ(a.realized_budget().delta, default_delta(r.train_examples));
  }
  EXPECT_FALSE(r.arm("direct_dp_per_pair/eps=8").guarantee_holds);
  EXPECT_TRUE(r.arm("direct_dp/eps=8").guarantee_holds);
  EXPECT_TRUE(r.arm("dp_generator/eps=8").bleu.has_value());
  EXPECT_EQ(r.arm("dp_generator/eps=8").synthetic_examples, r.train_examples);

  const std::string table = r.table();
  for (const char* col : {"Source", "eps", "NDCG@10", "Recall@10", "BLEU"}) EXPECT_THAT(table, HasSubstr(col));
  EXPECT_THAT(table, HasSubstr("(not valid)"));
}

TEST(PipelineTest, ReportIsDeterministic) {
  RunConfig c = tiny_config();
  c.epsilons = {kInf, 8.0};
  c.per_pair_direct_dp = false;
  const auto a = nlohmann::json(run_pipeline(c, prepare(c))).dump();
  const auto b = nlohmann::json(run_pipeline(c, prepare(c))).dump();
  EXPECT_EQ(a, b);
}

TEST(PipelineTest, FailingArmDoesNotAbortRun) {
  RunConfig c = tiny_config();
  c.epsilons = {kInf};
  PipelineContext ctx = prepare(c);
  lm::LmDims dims = lm_dims_for(c, ctx.tok);
  dims.max_len = 4;
  ctx.pretrained = lm::LmModel::init(dims, 1);
  const auto r = run_pipeline(c, ctx);
  ASSERT_EQ(r.arms.size(), 2u);
  EXPECT_TRUE(r.arms[0].ok());
  EXPECT_FALSE(r.arms[1].ok());
  EXPECT_FALSE(r.arms[1].error.empty());
  EXPECT_THAT(r.table(), HasSubstr("failed"));
  EXPECT_EQ(nlohmann::json(r)["arms"][1]["ok"], false);
}

TEST(PipelineTest, TrainAndEvalAreDisjoint) {
  const RunConfig c = tiny_config();
  const auto ctx = prepare(c);
  EXPECT_NO_THROW(check_disjoint_queries(ctx.train, ctx.eval));
  EXPECT_EQ(ctx.train.size() + ctx.eval.size(), c.corpus.n_docs * c.corpus.queries_per_doc);
}

TEST(PipelineTest, WarmStartCacheRoundTrip) {
  const RunConfig c = tiny_config();
  const auto dir = std::filesystem::temp_directory_path() / "qpriv-pipeline-test-cache";
  std::filesystem::remove_all(dir);
  const WarmStart first = warm_start(c, dir);
  const WarmStart second = warm_start(c, dir);
  EXPECT_FALSE(first.cached);
  EXPECT_TRUE(second.cached);
  EXPECT_EQ(params_to_json(first.model.params()), params_to_json(second.model.params()));
  EXPECT_EQ(first.report, second.report);
  std::filesystem::remove_all(dir);
}

TEST(RunConfigTest, JsonRoundTrip) {
  RunConfig c = tiny_config();
  c.epsilons = {kInf, 16.0, 8.0};
  c.seed = 42;
  c.run_audit = true;
  const nlohmann::json j = c;
  EXPECT_EQ(j["epsilons"][0], "inf");
  const RunConfig back = j.get<RunConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
}

TEST(RunConfigTest, RejectsBadValues) {
  nlohmann::json j = RunConfig();
  j["unknown_key"] = 1;
  EXPECT_THROW(j.get<RunConfig>(), Error);

  RunConfig c;
  c.epsilons = {8.0, 8.0};
  EXPECT_THROW(c.validate(), Error);
  c.epsilons = {};
  EXPECT_THROW(c.validate(), Error);
  c = RunConfig();
  c.schema_version = 99;
  EXPECT_THROW(c.validate(), Error);
}

TEST(RunConfigTest, DefaultsIncludeInfinityAndPrivateBudgets) {
  const RunConfig c;
  EXPECT_THAT(c.epsilons, ElementsAre(kInf, 16.0, 8.0));
  EXPECT_DOUBLE_EQ(c.clip_norm, 0.1);
  EXPECT_DOUBLE_EQ(c.lm.optimizer.learning_rate, 1e-3);
  EXPECT_NO_THROW(c.validate());
}

TEST(ArmNameTest, Format) {
  EXPECT_EQ(arm_name("direct_dp", 16.0), "direct_dp/eps=16");
  EXPECT_EQ(arm_name("dp_generator", kInf), "dp_generator/eps=inf");
  EXPECT_EQ(arm_name("direct_dp", 0.5), "direct_dp/eps=0.5");
}

}  // namespace
}  // namespace qpriv
