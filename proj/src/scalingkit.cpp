#include "t2t/scalingkit.hpp"

#include <cmath>
#include <map>
#include <nlohmann/json.hpp>

#include "t2t/errors.hpp"

namespace t2t {
namespace {

ModelConfig sized(int d_model, int d_ff, int d_kv, int heads, int layers) {
  ModelConfig c;
  c.d_model = d_model;
  c.d_ff = d_ff;
  c.d_kv = d_kv;
  c.num_heads = heads;
  c.num_layers = layers;
  return c;
}

const std::map<std::string, ModelConfig>& presets() {
  static const std::map<std::string, ModelConfig> p{
      {"small", sized(512, 2048, 64, 8, 6)},
      {"base", sized(768, 3072, 64, 12, 12)},
      {"large", sized(1024, 4096, 64, 16, 24)},
      {"xl-3b-like", sized(1024, 16384, 128, 32, 24)},
      {"xxl-11b-like", sized(1024, 65536, 128, 128, 24)},
  };
  return p;
}

nlohmann::json train_json(const TrainConfig& t) {
  return {{"total_steps", t.total_steps},
          {"batch_token_budget", t.batch_token_budget},
          {"max_seq_len", t.max_seq_len},
          {"seed", t.seed},
          {"checkpoint_every", t.checkpoint_every}};
}

}  // namespace

ModelConfig preset(const std::string& name) {
  const auto it = presets().find(name);
  if (it == presets().end()) throw ParameterError("unknown preset '" + name + "'");
  return it->second;
}

std::vector<std::string> preset_names() { return {"small", "base", "large", "xl-3b-like", "xxl-11b-like"}; }

template <typename Scalar>
std::unique_ptr<Transformer<Scalar>> instantiate(const ModelConfig& cfg, std::uint64_t seed, bool allow_large) {
  const auto n = count_params(cfg);
  if (n > kLargeModelParams && !allow_large) {
    throw CapacityError("model has " + std::to_string(n) + " parameters; pass allow_large to instantiate it");
  }
  return std::make_unique<Transformer<Scalar>>(cfg, seed);
}

template std::unique_ptr<Transformer<float>> instantiate(const ModelConfig&, std::uint64_t, bool);
template std::unique_ptr<Transformer<double>> instantiate(const ModelConfig&, std::uint64_t, bool);

std::string_view to_string(ScalingStrategy s) {
  switch (s) {
    case ScalingStrategy::kMoreSteps: return "more_steps";
    case ScalingStrategy::kBiggerBatch: return "bigger_batch";
    case ScalingStrategy::kBiggerModel: return "bigger_model";
    case ScalingStrategy::kBiggerModelMoreSteps: return "bigger_model_more_steps";
    case ScalingStrategy::kEnsemble: return "ensemble";
    case ScalingStrategy::kEnsembleFinetuneOnly: return "ensemble_finetune_only";
  }
  return "unknown";
}

ScalingStrategy parse_scaling_strategy(const std::string& name) {
  for (auto s : {ScalingStrategy::kMoreSteps, ScalingStrategy::kBiggerBatch, ScalingStrategy::kBiggerModel,
                 ScalingStrategy::kBiggerModelMoreSteps, ScalingStrategy::kEnsemble,
                 ScalingStrategy::kEnsembleFinetuneOnly}) {
    if (to_string(s) == name) return s;
  }
  throw ParameterError("unknown scaling strategy '" + name + "'");
}

ScalingPlan scaling_plan(const ModelConfig& model, const TrainConfig& pretrain, const TrainConfig& finetune,
                         int multiplier, ScalingStrategy strategy) {
  if (multiplier < 1) throw ParameterError("scaling_plan: multiplier must be at least 1");
  ScalingPlan plan{strategy, multiplier, {}, false};
  RunSpec run{"run0", model, pretrain, finetune, 0};
  switch (strategy) {
    case ScalingStrategy::kMoreSteps: run.pretrain.total_steps *= multiplier; break;
    case ScalingStrategy::kBiggerBatch: run.pretrain.batch_token_budget *= multiplier; break;
    case ScalingStrategy::kBiggerModel: run.model.num_layers *= multiplier; break;
    case ScalingStrategy::kBiggerModelMoreSteps: {
      const int root = static_cast<int>(std::lround(std::sqrt(static_cast<double>(multiplier))));
      if (root * root != multiplier) {
        throw ParameterError("scaling_plan: bigger_model_more_steps needs a square multiplier, got " +
                             std::to_string(multiplier));
      }
      run.model.num_layers *= root;
      run.pretrain.total_steps *= root;
      break;
    }
    case ScalingStrategy::kEnsemble:
    case ScalingStrategy::kEnsembleFinetuneOnly:
      plan.ensemble_eval = multiplier > 1;
      for (int i = 0; i < multiplier; ++i) {
        RunSpec r = run;
        r.name = "member" + std::to_string(i);
        r.finetune.seed = finetune.seed + static_cast<std::uint64_t>(i);
        if (strategy == ScalingStrategy::kEnsemble) {
          r.pretrain.seed = pretrain.seed + static_cast<std::uint64_t>(i);
          r.pretrain_source = static_cast<std::size_t>(i);
        }
        plan.runs.push_back(std::move(r));
      }
      return plan;
  }
  plan.runs.push_back(std::move(run));
  return plan;
}

std::string ScalingPlan::manifest() const {
  nlohmann::json runs_json = nlohmann::json::array();
  for (const auto& r : runs) {
    runs_json.push_back({{"name", r.name},
                         {"model", r.model.canonical()},
                         {"model_fingerprint", r.model.fingerprint()},
                         {"parameters", count_params(r.model)},
                         {"pretrain", train_json(r.pretrain)},
                         {"finetune", train_json(r.finetune)},
                         {"pretrain_source", r.pretrain_source}});
  }
  const nlohmann::json j{{"strategy", to_string(strategy)},
                         {"multiplier", multiplier},
                         {"ensemble_eval", ensemble_eval},
                         {"runs", runs_json}};
  return j.dump(2);
}

}  // namespace t2t
