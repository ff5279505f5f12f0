#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "t2t/checkpoint.hpp"
#include "t2t/corruption.hpp"
#include "t2t/model.hpp"
#include "t2t/vocab.hpp"

namespace t2t {

struct Schedule {
  enum class Kind { kInverseSqrt, kConstant };
  Kind kind = Kind::kInverseSqrt;
  std::int64_t warmup = 10000;
  /// Constant rate, or the numerator of the inverse square root.
  double value = 1.0;

  static Schedule inverse_sqrt(std::int64_t warmup, double scale = 1.0) { return {Kind::kInverseSqrt, warmup, scale}; }
  static Schedule constant(double lr = 0.001) { return {Kind::kConstant, 1, lr}; }
};

/// inverse_sqrt: value / sqrt(max(step, warmup)); constant: value.
double learning_rate(const Schedule& schedule, std::int64_t step);

/// One batch row holding several examples back to back. Encoder-decoder
/// rows keep inputs in the encoder sequence and targets in the decoder
/// sequence; single-stack rows hold [pad] + (input ++ target)[:-1] with loss
/// on target positions only. Positions restart at 0 in every segment.
struct PackedEntry {
  TokenSequence encoder_ids;
  std::vector<int> encoder_segments, encoder_positions;
  TokenSequence decoder_ids;
  TokenSequence labels;  // -1 where no loss is taken
  std::vector<int> decoder_segments, decoder_positions;
  std::vector<int> prefix_lens;  // per segment, single-stack only
  std::vector<std::size_t> examples;

  std::size_t num_target_tokens() const;
};

/// Greedy first-fit packer. Examples arrive in order; an example goes into
/// the first row with room, or opens a new row while fewer than
/// budget / max_len rows exist.
class Packer {
 public:
  Packer(bool single_stack, std::int64_t budget, std::int64_t max_len);

  /// False when the example fits nowhere; the batch is then full.
  bool add(const CorruptionPair& example, std::size_t index);
  const std::vector<PackedEntry>& entries() const { return entries_; }
  std::vector<PackedEntry> take() { return std::move(entries_); }

 private:
  bool single_stack_;
  std::size_t max_rows_;
  std::size_t max_len_;
  std::vector<PackedEntry> entries_;
};

struct PackResult {
  std::vector<PackedEntry> entries;
  std::size_t consumed = 0;  // leading examples packed
};

/// Packs examples until the first one that no longer fits. ParameterError
/// for an example longer than max_len.
PackResult pack_batch(std::span<const CorruptionPair> examples, bool single_stack, std::int64_t budget,
                      std::int64_t max_len);

/// Truncates input and target so the example fits in max_len.
CorruptionPair truncate_example(CorruptionPair example, bool single_stack, std::int64_t max_len);

BoolMatrix encoder_mask(const PackedEntry& entry);
BoolMatrix cross_mask(const PackedEntry& entry);
/// Causal within each segment; with `prefix_visible` the first prefix_lens[s]
/// positions of segment s are visible to the whole segment.
BoolMatrix decoder_mask(const PackedEntry& entry, bool prefix_visible);

/// Mean token cross-entropy of one packed row and the number of target tokens.
template <typename Scalar>
std::pair<Tensor<Scalar>, std::size_t> entry_loss(const Transformer<Scalar>& model, const PackedEntry& entry,
                                                  const ForwardOptions& opts);

/// Mean per-token loss over examples in eval mode.
template <typename Scalar>
double mean_loss(const Transformer<Scalar>& model, std::span<const CorruptionPair> examples, std::int64_t max_len);

template <typename Scalar>
using NamedParams = std::vector<std::pair<std::string, Tensor<Scalar>>>;

/// Optimizer interface. step() returns false and leaves parameters untouched
/// when any gradient is non-finite.
template <typename Scalar>
class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual bool step(const NamedParams<Scalar>& params, double lr) = 0;
  virtual void save(Checkpoint& ckpt) const = 0;
  virtual void load(const Checkpoint& ckpt) = 0;
  std::int64_t skipped_steps() const { return skipped_; }

 protected:
  std::int64_t skipped_ = 0;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Global gradient-norm clip; 0 disables.
  double clip_norm = 0.0;
};

/// Adam with bias correction. Parameters without a gradient are left alone,
/// and each parameter keeps its own update count.
template <typename Scalar>
class Adam final : public Optimizer<Scalar> {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}
  bool step(const NamedParams<Scalar>& params, double lr) override;
  void save(Checkpoint& ckpt) const override;
  void load(const Checkpoint& ckpt) override;

 private:
  struct State {
    Eigen::VectorXd m, v;
    std::int64_t t = 0;
  };
  AdamConfig cfg_;
  std::map<std::string, State> state_;
};

struct TrainConfig {
  std::int64_t total_steps = 0;
  std::int64_t batch_token_budget = 65536;
  std::int64_t max_seq_len = 512;
  Schedule schedule = Schedule::inverse_sqrt(10000);
  std::int64_t checkpoint_every = 5000;
  ObjectiveSpec objective;
  std::uint64_t seed = 0;
  AdamConfig adam;

  /// ConfigError unless budget >= max_seq_len and warmup >= 1.
  void validate() const;
};

/// Example i of a stream; nullopt once a finite stream is exhausted.
using ExampleSource = std::function<std::optional<CorruptionPair>(std::uint64_t index)>;

ExampleSource dataset_source(std::vector<CorruptionPair> examples, bool repeat);

/// Document index mod N, corrupted with its own (seed, index) stream.
ExampleSource pretraining_source(std::vector<TokenSequence> documents, ObjectiveSpec objective, Vocabulary vocab,
                                 std::uint64_t seed, bool repeat);

/// Decides which parameters train at a given step.
using TrainablePredicate = std::function<bool(const std::string& name, std::int64_t step)>;

/// Adapter fine-tuning: adapters and layer-norm gains only.
bool adapter_trainable(const std::string& name);

/// Layers unfreeze from the top in `num_layers` equal episodes; the last
/// episode absorbs the remainder of total_steps / num_layers.
class UnfreezeSchedule {
 public:
  UnfreezeSchedule(int num_layers, std::int64_t total_steps);

  int num_layers() const { return layers_; }
  std::int64_t episode_length() const { return total_ / layers_; }
  /// 1-based episode of a 0-based step.
  int episode(std::int64_t step) const;
  /// Lowest 0-based block index trainable at `step`.
  int lowest_trainable_layer(std::int64_t step) const;
  /// Blocks at or above the lowest trainable layer, in both stacks; everything
  /// outside the blocks (embedding, final norms, bias tables) always trains.
  bool trainable(const std::string& name, std::int64_t step) const;

 private:
  int layers_;
  std::int64_t total_;
};

/// ParameterError when total_steps < num_layers.
UnfreezeSchedule gradual_unfreeze_schedule(int num_layers, std::int64_t total_steps);

struct StepRecord {
  std::int64_t step = 0;  // 1-based index of the completed step
  double loss = 0;
  double lr = 0;
  std::int64_t tokens_seen = 0;
  double wall_ms = 0;
  bool skipped = false;
};

template <typename Scalar>
class Trainer {
 public:
  Trainer(Transformer<Scalar>& model, ExampleSource source, TrainConfig cfg);

  void set_trainable(TrainablePredicate pred) { trainable_ = std::move(pred); }
  /// Newline-delimited JSON records {step, loss, lr, tokens_seen, wall_ms}.
  void set_log(std::ostream* log) { log_ = log; }

  /// One optimizer step. DataError when the source has no example left.
  StepRecord step();
  std::int64_t current_step() const { return step_; }

  /// Parameters, optimizer state and stream position.
  Checkpoint checkpoint() const;
  void restore(const Checkpoint& ckpt);

 private:
  Transformer<Scalar>& model_;
  ExampleSource source_;
  TrainConfig cfg_;
  Adam<Scalar> optimizer_;
  TrainablePredicate trainable_;
  std::ostream* log_ = nullptr;
  std::int64_t step_ = 0;
  std::uint64_t next_example_ = 0;
  std::int64_t tokens_seen_ = 0;
};

/// Runs cfg.total_steps steps. Returns the step-0 checkpoint, one every
/// checkpoint_every steps, and the final one.
template <typename Scalar>
std::vector<Checkpoint> train(Transformer<Scalar>& model, ExampleSource source, const TrainConfig& cfg,
                              const TrainablePredicate& trainable = {}, std::ostream* log = nullptr);

/// Per-task argmax over checkpoints, ties to the earliest step. `metrics`
/// maps task name to one value per entry of `steps`.
std::map<std::string, std::int64_t> select_best_checkpoint(const std::vector<std::int64_t>& steps,
                                                           const std::map<std::string, std::vector<double>>& metrics);

extern template class Trainer<float>;
extern template class Trainer<double>;

}  // namespace t2t
