#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "t2t/errors.hpp"
#include "t2t/scalingkit.hpp"

namespace t2t {
namespace {

TEST(Preset, DocumentedSizes) {
  const auto base = preset("base");
  EXPECT_EQ(base.d_model, 768);
  EXPECT_EQ(base.d_ff, 3072);
  EXPECT_EQ(base.d_kv, 64);
  EXPECT_EQ(base.num_heads, 12);
  EXPECT_EQ(base.num_layers, 12);
  const auto small = preset("small");
  EXPECT_EQ(small.d_model, 512);
  EXPECT_EQ(small.d_ff, 2048);
  EXPECT_EQ(small.num_heads, 8);
  EXPECT_EQ(small.num_layers, 6);
  EXPECT_THROW(preset("medium"), ParameterError);

  auto in = [](const std::string& name, double lo, double hi) {
    const auto n = static_cast<double>(count_params(preset(name)));
    EXPECT_GE(n, lo) << name;
    EXPECT_LE(n, hi) << name;
  };
  in("small", 50e6, 70e6);     // about 60 million
  in("base", 200e6, 240e6);    // about 220 million
  in("large", 700e6, 800e6);   // around 770 million
  in("xl-3b-like", 2.6e9, 3.0e9);
  in("xxl-11b-like", 10e9, 12e9);
  for (const auto& n : preset_names()) EXPECT_NO_THROW(preset(n).validate());
}

TEST(Preset, DoubledLayersRoughlyDoubleParameters) {
  for (auto cfg : {preset("base")}) {
    auto twice = cfg;
    twice.num_layers *= 2;
    const double ratio = static_cast<double>(count_params(twice)) / static_cast<double>(count_params(cfg));
    EXPECT_GE(ratio, 1.8);
    EXPECT_LE(ratio, 2.2);
  }
  ModelConfig toy;
  toy.d_model = 32;
  toy.d_ff = 64;
  toy.d_kv = 8;
  toy.num_heads = 4;
  toy.num_layers = 2;
  toy.vocab_size = 100;
  auto twice = toy;
  twice.num_layers = 4;
  const double ratio = static_cast<double>(count_params(twice)) / static_cast<double>(count_params(toy));
  EXPECT_GE(ratio, 1.8);
  EXPECT_LE(ratio, 2.2);
}

TEST(Instantiate, LargeModelsNeedFlag) {
  EXPECT_THROW(instantiate<float>(preset("xl-3b-like"), 1), CapacityError);
  EXPECT_THROW(instantiate<float>(preset("xxl-11b-like"), 1), CapacityError);
  ModelConfig toy;
  toy.d_model = 8;
  toy.d_ff = 16;
  toy.d_kv = 4;
  toy.num_heads = 2;
  toy.num_layers = 1;
  toy.vocab_size = 20;
  const auto m = instantiate<double>(toy, 3);
  EXPECT_EQ(m->num_parameters(), count_params(toy));
}

struct PlanFixture : ::testing::Test {
  ModelConfig model = preset("small");
  TrainConfig pre, fine;
  void SetUp() override {
    pre.total_steps = 1000;
    pre.seed = 10;
    fine.total_steps = 200;
    fine.seed = 50;
  }
};

TEST_F(PlanFixture, SingleRunStrategies) {
  const auto steps = scaling_plan(model, pre, fine, 4, ScalingStrategy::kMoreSteps);
  ASSERT_EQ(steps.runs.size(), 1u);
  EXPECT_EQ(steps.runs[0].pretrain.total_steps, 4000);
  EXPECT_EQ(steps.runs[0].model, model);
  EXPECT_FALSE(steps.ensemble_eval);

  const auto identity = scaling_plan(model, pre, fine, 1, ScalingStrategy::kMoreSteps);
  EXPECT_EQ(identity.runs[0].pretrain.total_steps, pre.total_steps);
  EXPECT_EQ(identity.runs[0].model, model);

  const auto batch = scaling_plan(model, pre, fine, 4, ScalingStrategy::kBiggerBatch);
  EXPECT_EQ(batch.runs[0].pretrain.batch_token_budget, 4 * pre.batch_token_budget);
  EXPECT_EQ(batch.runs[0].pretrain.total_steps, pre.total_steps);

  const auto big = scaling_plan(model, pre, fine, 4, ScalingStrategy::kBiggerModel);
  EXPECT_EQ(big.runs[0].model.num_layers, 24);
  EXPECT_EQ(big.runs[0].pretrain.total_steps, pre.total_steps);

  const auto both = scaling_plan(model, pre, fine, 4, ScalingStrategy::kBiggerModelMoreSteps);
  EXPECT_EQ(both.runs[0].model.num_layers, 12);
  EXPECT_EQ(both.runs[0].pretrain.total_steps, 2000);

  EXPECT_THROW(scaling_plan(model, pre, fine, 3, ScalingStrategy::kBiggerModelMoreSteps), ParameterError);
  EXPECT_THROW(scaling_plan(model, pre, fine, 0, ScalingStrategy::kMoreSteps), ParameterError);
}

TEST_F(PlanFixture, EnsemblePlans) {
  const auto ens = scaling_plan(model, pre, fine, 4, ScalingStrategy::kEnsemble);
  ASSERT_EQ(ens.runs.size(), 4u);
  EXPECT_TRUE(ens.ensemble_eval);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(ens.runs[i].pretrain.seed, pre.seed + i);
    EXPECT_EQ(ens.runs[i].finetune.seed, fine.seed + i);
    EXPECT_EQ(ens.runs[i].pretrain_source, i);
    EXPECT_EQ(ens.runs[i].pretrain.total_steps, pre.total_steps);
  }
  const auto ft = scaling_plan(model, pre, fine, 4, ScalingStrategy::kEnsembleFinetuneOnly);
  ASSERT_EQ(ft.runs.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(ft.runs[i].pretrain_source, 0u);
    EXPECT_EQ(ft.runs[i].pretrain.seed, pre.seed);
    EXPECT_EQ(ft.runs[i].finetune.seed, fine.seed + i);
  }
  const auto manifest = nlohmann::json::parse(ens.manifest());
  EXPECT_EQ(manifest["strategy"], "ensemble");
  EXPECT_EQ(manifest["runs"].size(), 4u);
  EXPECT_EQ(manifest["runs"][2]["pretrain"]["seed"], pre.seed + 2);
  EXPECT_EQ(parse_scaling_strategy("ensemble_finetune_only"), ScalingStrategy::kEnsembleFinetuneOnly);
  EXPECT_THROW(parse_scaling_strategy("more_data"), ParameterError);
}

TEST(PlanDecode, SingleMemberEnsembleIsPlainDecoding) {
  ModelConfig c;
  c.d_model = 16;
  c.d_ff = 32;
  c.d_kv = 8;
  c.num_heads = 2;
  c.num_layers = 1;
  c.vocab_size = 25;
  c.num_rel_buckets = 8;
  c.rel_max_distance = 16;
  Transformer<double> m(c, 9);
  const TokenSequence input{3, 7, 11, 4};
  const auto plain = model_scorer(m, input);
  const auto single = ensemble_scorer<double>({&m}, input);
  const TokenSequence prefix{5, 6};
  const Eigen::VectorXd a = plain(prefix), b = single(prefix);
  for (Index i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
  const auto g = greedy_decode(m, input, 8), e = plan_greedy_decode<double>({&m}, input, 8);
  EXPECT_EQ(g.ids, e.ids);
  EXPECT_EQ(g.log_prob, e.log_prob);
}

}  // namespace
}  // namespace t2t
