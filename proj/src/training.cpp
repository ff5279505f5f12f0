#include "t2t/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>
#include <regex>

#include <nlohmann/json.hpp>

namespace t2t {
namespace {

constexpr std::uint64_t kCorruptStream = 0xc0441;
constexpr std::uint64_t kDropoutStream = 0xd409;

}  // namespace

double learning_rate(const Schedule& schedule, std::int64_t step) {
  if (step < 0) throw ParameterError("learning_rate: negative step");
  if (schedule.kind == Schedule::Kind::kConstant) return schedule.value;
  return schedule.value / std::sqrt(static_cast<double>(std::max(step, schedule.warmup)));
}

std::size_t PackedEntry::num_target_tokens() const {
  return static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](TokenId t) { return t >= 0; }));
}

Packer::Packer(bool single_stack, std::int64_t budget, std::int64_t max_len)
    : single_stack_(single_stack),
      max_rows_(static_cast<std::size_t>(max_len > 0 ? budget / max_len : 0)),
      max_len_(static_cast<std::size_t>(max_len)) {
  if (max_len < 1 || budget < max_len) throw ParameterError("packing: need budget >= max_len >= 1");
}

bool Packer::add(const CorruptionPair& ex, std::size_t index) {
  const std::size_t enc = single_stack_ ? 0 : ex.input_ids.size();
  const std::size_t dec = single_stack_ ? ex.input_ids.size() + ex.target_ids.size() : ex.target_ids.size();
  if (enc > max_len_ || dec > max_len_) {
    throw ParameterError("packing: example " + std::to_string(index) + " is longer than max_len " +
                         std::to_string(max_len_));
  }
  auto fits = [&](const PackedEntry& e) {
    return e.encoder_ids.size() + enc <= max_len_ && e.decoder_ids.size() + dec <= max_len_;
  };
  auto it = std::find_if(entries_.begin(), entries_.end(), fits);
  if (it == entries_.end()) {
    if (entries_.size() >= max_rows_) return false;
    entries_.emplace_back();
    it = std::prev(entries_.end());
  }
  PackedEntry& e = *it;
  const int seg = static_cast<int>(e.examples.size());
  e.examples.push_back(index);
  for (std::size_t i = 0; i < enc; ++i) {
    e.encoder_ids.push_back(ex.input_ids[i]);
    e.encoder_segments.push_back(seg);
    e.encoder_positions.push_back(static_cast<int>(i));
  }
  TokenSequence seq;
  if (single_stack_) {
    seq = ex.input_ids;
    seq.insert(seq.end(), ex.target_ids.begin(), ex.target_ids.end());
    e.prefix_lens.push_back(static_cast<int>(ex.input_ids.size()) + 1);
  } else {
    seq = ex.target_ids;
  }
  const std::size_t loss_from = single_stack_ ? ex.input_ids.size() : 0;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    e.decoder_ids.push_back(i == 0 ? Vocabulary::kPadId : seq[i - 1]);
    e.labels.push_back(i >= loss_from ? seq[i] : -1);
    e.decoder_segments.push_back(seg);
    e.decoder_positions.push_back(static_cast<int>(i));
  }
  return true;
}

PackResult pack_batch(std::span<const CorruptionPair> examples, bool single_stack, std::int64_t budget,
                      std::int64_t max_len) {
  Packer packer(single_stack, budget, max_len);
  PackResult result;
  while (result.consumed < examples.size() && packer.add(examples[result.consumed], result.consumed)) {
    ++result.consumed;
  }
  result.entries = packer.take();
  return result;
}

CorruptionPair truncate_example(CorruptionPair ex, bool single_stack, std::int64_t max_len) {
  const auto cap = static_cast<std::size_t>(max_len);
  if (ex.target_ids.size() > cap) ex.target_ids.resize(cap);
  const std::size_t input_cap = single_stack ? cap - ex.target_ids.size() : cap;
  if (ex.input_ids.size() > input_cap) ex.input_ids.resize(input_cap);
  return ex;
}

BoolMatrix encoder_mask(const PackedEntry& e) {
  const auto n = static_cast<Index>(e.encoder_ids.size());
  return restrict_to_segments(BoolMatrix::Constant(n, n, true), e.encoder_segments, e.encoder_segments);
}

BoolMatrix cross_mask(const PackedEntry& e) {
  const auto n = static_cast<Index>(e.decoder_ids.size()), m = static_cast<Index>(e.encoder_ids.size());
  return restrict_to_segments(BoolMatrix::Constant(n, m, true), e.decoder_segments, e.encoder_segments);
}

BoolMatrix decoder_mask(const PackedEntry& e, bool prefix_visible) {
  const auto n = static_cast<Index>(e.decoder_ids.size());
  BoolMatrix m(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      const int seg = e.decoder_segments[static_cast<std::size_t>(i)];
      bool ok = seg == e.decoder_segments[static_cast<std::size_t>(j)] && j <= i;
      if (!ok && prefix_visible && seg == e.decoder_segments[static_cast<std::size_t>(j)]) {
        ok = e.decoder_positions[static_cast<std::size_t>(j)] < e.prefix_lens[static_cast<std::size_t>(seg)];
      }
      m(i, j) = ok;
    }
  }
  return m;
}

template <typename Scalar>
std::pair<Tensor<Scalar>, std::size_t> entry_loss(const Transformer<Scalar>& model, const PackedEntry& e,
                                                  const ForwardOptions& opts) {
  const bool prefix = model.config().architecture == Architecture::kPrefixLm;
  Tensor<Scalar> logits;
  if (model.has_encoder()) {
    const auto enc_mask = encoder_mask(e);
    const auto x_mask = cross_mask(e);
    auto enc = model.encoder_forward(e.encoder_ids, opts, &enc_mask, e.encoder_positions);
    logits = model.decoder_forward(e.decoder_ids, &enc, decoder_mask(e, false), opts, &x_mask, e.decoder_positions);
  } else {
    logits = model.decoder_forward(e.decoder_ids, nullptr, decoder_mask(e, prefix), opts, nullptr, e.decoder_positions);
  }
  return {cross_entropy(logits, std::span<const TokenId>(e.labels), -1), e.num_target_tokens()};
}

template <typename Scalar>
double mean_loss(const Transformer<Scalar>& model, std::span<const CorruptionPair> examples, std::int64_t max_len) {
  NoGradGuard guard;
  const bool single = !model.has_encoder();
  double total = 0;
  std::size_t tokens = 0;
  for (const auto& ex : examples) {
    Packer packer(single, max_len, max_len);
    packer.add(truncate_example(ex, single, max_len), 0);
    const auto& entry = packer.entries().front();
    const auto [loss, n] = entry_loss(model, entry, {});
    total += static_cast<double>(loss.item()) * static_cast<double>(n);
    tokens += n;
  }
  return tokens == 0 ? 0.0 : total / static_cast<double>(tokens);
}

template <typename Scalar>
bool Adam<Scalar>::step(const NamedParams<Scalar>& params, double lr) {
  double sq = 0;
  for (const auto& [name, p] : params) {
    if (!p.has_grad()) continue;
    for (Index i = 0; i < p.numel(); ++i) {
      const double g = static_cast<double>(p.grad()[i]);
      if (!std::isfinite(g)) {
        ++this->skipped_;
        return false;
      }
      sq += g * g;
    }
  }
  const double norm = std::sqrt(sq);
  const double clip = cfg_.clip_norm > 0 && norm > cfg_.clip_norm ? cfg_.clip_norm / norm : 1.0;
  for (const auto& [name, p] : params) {
    if (!p.has_grad()) continue;
    auto& s = state_[name];
    if (s.m.size() == 0) {
      s.m = Eigen::VectorXd::Zero(p.numel());
      s.v = Eigen::VectorXd::Zero(p.numel());
    }
    ++s.t;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(s.t));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(s.t));
    auto target = p;
    auto& values = target.mutable_values();
    for (Index i = 0; i < p.numel(); ++i) {
      const double g = static_cast<double>(p.grad()[i]) * clip;
      s.m[i] = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * g;
      s.v[i] = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * g * g;
      const double update = lr * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + cfg_.epsilon);
      values[i] = static_cast<Scalar>(static_cast<double>(values[i]) - update);
    }
  }
  return true;
}

template <typename Scalar>
void Adam<Scalar>::save(Checkpoint& ckpt) const {
  for (const auto& [name, s] : state_) {
    const Shape shape{static_cast<Index>(s.m.size())};
    ckpt.entries["adam/m/" + name] = {shape, DType::kF64, std::vector<double>(s.m.data(), s.m.data() + s.m.size())};
    ckpt.entries["adam/v/" + name] = {shape, DType::kF64, std::vector<double>(s.v.data(), s.v.data() + s.v.size())};
    ckpt.metadata["adam/t/" + name] = std::to_string(s.t);
  }
  ckpt.metadata["adam/skipped"] = std::to_string(this->skipped_);
}

template <typename Scalar>
void Adam<Scalar>::load(const Checkpoint& ckpt) {
  state_.clear();
  const std::string prefix = "adam/m/";
  for (const auto& [key, entry] : ckpt.entries) {
    if (key.rfind(prefix, 0) != 0) continue;
    const std::string name = key.substr(prefix.size());
    auto v = ckpt.entries.find("adam/v/" + name);
    auto t = ckpt.metadata.find("adam/t/" + name);
    if (v == ckpt.entries.end() || t == ckpt.metadata.end()) {
      throw DataError("checkpoint has incomplete optimizer state for " + name);
    }
    State s;
    s.m = Eigen::Map<const Eigen::VectorXd>(entry.values.data(), static_cast<Index>(entry.values.size()));
    s.v = Eigen::Map<const Eigen::VectorXd>(v->second.values.data(), static_cast<Index>(v->second.values.size()));
    s.t = std::stoll(t->second);
    state_.emplace(name, std::move(s));
  }
  auto skipped = ckpt.metadata.find("adam/skipped");
  this->skipped_ = skipped == ckpt.metadata.end() ? 0 : std::stoll(skipped->second);
}

void TrainConfig::validate() const {
  if (max_seq_len < 1) throw ConfigError("max_seq_len must be positive");
  if (batch_token_budget < max_seq_len) throw ConfigError("batch_token_budget must be at least max_seq_len");
  if (schedule.warmup < 1) throw ConfigError("schedule warmup must be at least 1");
  if (total_steps < 0) throw ConfigError("total_steps must be non-negative");
  if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be positive");
  objective.validate();
}

ExampleSource dataset_source(std::vector<CorruptionPair> examples, bool repeat) {
  return [examples = std::move(examples), repeat](std::uint64_t i) -> std::optional<CorruptionPair> {
    if (examples.empty() || (!repeat && i >= examples.size())) return std::nullopt;
    return examples[i % examples.size()];
  };
}

ExampleSource pretraining_source(std::vector<TokenSequence> documents, ObjectiveSpec objective, Vocabulary vocab,
                                 std::uint64_t seed, bool repeat) {
  objective.validate();
  return [docs = std::move(documents), objective, vocab = std::move(vocab), seed,
          repeat](std::uint64_t i) -> std::optional<CorruptionPair> {
    if (docs.empty() || (!repeat && i >= docs.size())) return std::nullopt;
    Rng rng(seed, Rng::derive_stream(kCorruptStream, i));
    return apply_objective(objective, docs[i % docs.size()], rng, vocab);
  };
}

bool adapter_trainable(const std::string& name) {
  if (name.find("/adapter/") != std::string::npos) return true;
  return name.size() >= 5 && name.compare(name.size() - 5, 5, "_norm") == 0;
}

UnfreezeSchedule::UnfreezeSchedule(int num_layers, std::int64_t total_steps) : layers_(num_layers), total_(total_steps) {
  if (num_layers < 1) throw ParameterError("unfreezing needs at least one layer");
  if (total_steps < num_layers) {
    throw ParameterError("unfreezing needs at least one step per layer: " + std::to_string(total_steps) + " steps for " +
                         std::to_string(num_layers) + " layers");
  }
}

int UnfreezeSchedule::episode(std::int64_t step) const {
  if (step < 0) throw ParameterError("unfreezing: negative step");
  return static_cast<int>(std::min<std::int64_t>(step / episode_length() + 1, layers_));
}

int UnfreezeSchedule::lowest_trainable_layer(std::int64_t step) const { return layers_ - episode(step); }

bool UnfreezeSchedule::trainable(const std::string& name, std::int64_t step) const {
  static const std::regex block(R"(/block_(\d+)/)");
  std::smatch m;
  if (!std::regex_search(name, m, block)) return true;
  return std::stoi(m[1].str()) >= lowest_trainable_layer(step);
}

UnfreezeSchedule gradual_unfreeze_schedule(int num_layers, std::int64_t total_steps) {
  return UnfreezeSchedule(num_layers, total_steps);
}

template <typename Scalar>
Trainer<Scalar>::Trainer(Transformer<Scalar>& model, ExampleSource source, TrainConfig cfg)
    : model_(model), source_(std::move(source)), cfg_(std::move(cfg)), optimizer_(cfg_.adam) {
  cfg_.validate();
}

template <typename Scalar>
StepRecord Trainer<Scalar>::step() {
  const auto start = std::chrono::steady_clock::now();
  const bool single = !model_.has_encoder();
  Packer packer(single, cfg_.batch_token_budget, cfg_.max_seq_len);
  std::uint64_t index = next_example_;
  std::int64_t tokens = 0;
  while (true) {
    auto ex = source_(index);
    if (!ex) break;
    auto cut = truncate_example(std::move(*ex), single, cfg_.max_seq_len);
    const auto n = static_cast<std::int64_t>(cut.input_ids.size() + cut.target_ids.size());
    if (!packer.add(cut, index)) break;
    tokens += n;
    ++index;
  }
  if (index == next_example_) {
    throw DataError("training data exhausted after " + std::to_string(next_example_) + " examples");
  }

  NamedParams<Scalar> params;
  for (const auto& [name, t] : model_.parameters()) {
    auto p = t;
    p.clear_grad();
    p.set_requires_grad(!trainable_ || trainable_(name, step_));
    params.emplace_back(name, p);
  }

  const auto entries = packer.take();
  std::size_t total_targets = 0;
  for (const auto& e : entries) total_targets += e.num_target_tokens();
  Rng rng(cfg_.seed, Rng::derive_stream(kDropoutStream, static_cast<std::uint64_t>(step_)));
  const ForwardOptions opts{&rng, true};
  double loss_sum = 0;
  for (const auto& e : entries) {
    if (e.num_target_tokens() == 0) continue;
    auto [loss, n] = entry_loss(model_, e, opts);
    const double w = static_cast<double>(n) / static_cast<double>(total_targets);
    loss_sum += static_cast<double>(loss.item()) * w;
    backward(scale(loss, static_cast<Scalar>(w)));
  }

  StepRecord rec;
  rec.lr = learning_rate(cfg_.schedule, step_);
  rec.skipped = !optimizer_.step(params, rec.lr);
  for (auto& [name, p] : params) {
    p.clear_grad();
    p.set_requires_grad(true);
  }
  ++step_;
  next_example_ = index;
  tokens_seen_ += tokens;
  rec.step = step_;
  rec.loss = loss_sum;
  rec.tokens_seen = tokens_seen_;
  rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  if (log_) {
    nlohmann::json j{{"step", rec.step}, {"loss", rec.loss}, {"lr", rec.lr}, {"tokens_seen", rec.tokens_seen},
                     {"wall_ms", rec.wall_ms}};
    if (rec.skipped) j["skipped"] = true;
    *log_ << j.dump() << '\n';
  }
  return rec;
}

template <typename Scalar>
Checkpoint Trainer<Scalar>::checkpoint() const {
  auto ckpt = capture(model_, step_);
  optimizer_.save(ckpt);
  ckpt.metadata["next_example"] = std::to_string(next_example_);
  ckpt.metadata["tokens_seen"] = std::to_string(tokens_seen_);
  return ckpt;
}

template <typename Scalar>
void Trainer<Scalar>::restore(const Checkpoint& ckpt) {
  t2t::restore(model_, ckpt);
  optimizer_.load(ckpt);
  step_ = ckpt.step;
  auto get = [&](const char* key) {
    auto it = ckpt.metadata.find(key);
    return it == ckpt.metadata.end() ? std::int64_t{0} : std::stoll(it->second);
  };
  next_example_ = static_cast<std::uint64_t>(get("next_example"));
  tokens_seen_ = get("tokens_seen");
}

template <typename Scalar>
std::vector<Checkpoint> train(Transformer<Scalar>& model, ExampleSource source, const TrainConfig& cfg,
                              const TrainablePredicate& trainable, std::ostream* log) {
  Trainer<Scalar> trainer(model, std::move(source), cfg);
  trainer.set_trainable(trainable);
  trainer.set_log(log);
  std::vector<Checkpoint> out{trainer.checkpoint()};
  while (trainer.current_step() < cfg.total_steps) {
    trainer.step();
    if (trainer.current_step() % cfg.checkpoint_every == 0 || trainer.current_step() == cfg.total_steps) {
      out.push_back(trainer.checkpoint());
    }
  }
  return out;
}

std::map<std::string, std::int64_t> select_best_checkpoint(const std::vector<std::int64_t>& steps,
                                                           const std::map<std::string, std::vector<double>>& metrics) {
  if (steps.empty()) throw ParameterError("select_best_checkpoint: no checkpoints");
  std::map<std::string, std::int64_t> best;
  for (const auto& [task, values] : metrics) {
    if (values.size() != steps.size()) {
      throw ParameterError("select_best_checkpoint: task " + task + " has " + std::to_string(values.size()) +
                           " values for " + std::to_string(steps.size()) + " checkpoints");
    }
    std::size_t arg = 0;
    for (std::size_t i = 1; i < steps.size(); ++i) {
      if (values[i] > values[arg] || (values[i] == values[arg] && steps[i] < steps[arg])) arg = i;
    }
    best[task] = steps[arg];
  }
  return best;
}

template std::pair<Tensor<float>, std::size_t> entry_loss(const Transformer<float>&, const PackedEntry&,
                                                          const ForwardOptions&);
template std::pair<Tensor<double>, std::size_t> entry_loss(const Transformer<double>&, const PackedEntry&,
                                                           const ForwardOptions&);
template double mean_loss(const Transformer<float>&, std::span<const CorruptionPair>, std::int64_t);
template double mean_loss(const Transformer<double>&, std::span<const CorruptionPair>, std::int64_t);
template class Adam<float>;
template class Adam<double>;
template class Trainer<float>;
template class Trainer<double>;
template std::vector<Checkpoint> train(Transformer<float>&, ExampleSource, const TrainConfig&,
                                       const TrainablePredicate&, std::ostream*);
template std::vector<Checkpoint> train(Transformer<double>&, ExampleSource, const TrainConfig&,
                                       const TrainablePredicate&, std::ostream*);

}  // namespace t2t
