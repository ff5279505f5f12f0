#pragma once

#include <memory>
#include <string>
#include <vector>

#include "t2t/decode.hpp"
#include "t2t/model.hpp"
#include "t2t/training.hpp"

namespace t2t {

/// small, base, large, xl-3b-like, xxl-11b-like. ParameterError otherwise.
ModelConfig preset(const std::string& name);
std::vector<std::string> preset_names();

/// Models above this many parameters need allow_large to be instantiated.
inline constexpr std::int64_t kLargeModelParams = 1'000'000'000;

/// CapacityError when count_params(cfg) exceeds kLargeModelParams and
/// allow_large is false.
template <typename Scalar>
std::unique_ptr<Transformer<Scalar>> instantiate(const ModelConfig& cfg, std::uint64_t seed, bool allow_large = false);

enum class ScalingStrategy {
  kMoreSteps,             // steps x m
  kBiggerBatch,           // batch x m
  kBiggerModel,           // layers x m
  kBiggerModelMoreSteps,  // layers x sqrt(m), steps x sqrt(m)
  kEnsemble,              // m independent pre-train + fine-tune runs
  kEnsembleFinetuneOnly,  // one pre-train run, m fine-tuning seeds
};

std::string_view to_string(ScalingStrategy s);
/// more_steps, bigger_batch, bigger_model, bigger_model_more_steps, ensemble,
/// ensemble_finetune_only. ParameterError otherwise.
ScalingStrategy parse_scaling_strategy(const std::string& name);

struct RunSpec {
  std::string name;
  ModelConfig model;
  TrainConfig pretrain;
  TrainConfig finetune;
  /// Index of the run whose pre-trained checkpoint this run fine-tunes from;
  /// equal to its own index when it pre-trains itself.
  std::size_t pretrain_source = 0;
};

struct ScalingPlan {
  ScalingStrategy strategy = ScalingStrategy::kMoreSteps;
  int multiplier = 1;
  std::vector<RunSpec> runs;
  /// Evaluate all runs as one logit-averaged ensemble.
  bool ensemble_eval = false;

  /// JSON manifest listing every run, its seeds and configs.
  std::string manifest() const;
};

/// ParameterError for multiplier < 1 or a bigger_model_more_steps multiplier
/// that is not a perfect square.
ScalingPlan scaling_plan(const ModelConfig& model, const TrainConfig& pretrain, const TrainConfig& finetune,
                         int multiplier, ScalingStrategy strategy);

/// Greedy decoding through ensemble_logits over every member (one member is
/// plain decoding).
template <typename Scalar>
DecodeResult plan_greedy_decode(const std::vector<const Transformer<Scalar>*>& members, const TokenSequence& input,
                                std::size_t max_len) {
  return greedy_decode(ensemble_scorer(members, input), max_len);
}

}  // namespace t2t
