#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "t2t/rng.hpp"
#include "t2t/training.hpp"

namespace t2t {

enum class MixingStrategy { kExamplesProportional, kTemperature, kEqual };

struct MixtureTask {
  std::string name;
  std::uint64_t examples = 1;  // e_n, or an artificial size for unlabeled data
};

struct MixtureSpec {
  static constexpr double kDefaultLimit = 2097152.0;  // 2^21

  std::vector<MixtureTask> tasks;
  MixingStrategy strategy = MixingStrategy::kExamplesProportional;
  double limit = kDefaultLimit;  // K
  double temperature = 1.0;      // T

  static MixtureSpec examples_proportional(std::vector<MixtureTask> tasks, double limit = kDefaultLimit);
  static MixtureSpec temperature_scaled(std::vector<MixtureTask> tasks, double temperature,
                                        double limit = kDefaultLimit);
  static MixtureSpec equal(std::vector<MixtureTask> tasks);

  /// ParameterError unless tasks is nonempty with e_n >= 1, K >= 1, T >= 1
  /// and names are unique.
  void validate() const;
};

/// r_m = min(e_m, K) / sum_n min(e_n, K); temperature raises these to 1/T
/// and renormalizes; equal is 1/N.
std::vector<double> mixing_rates(const MixtureSpec& spec);

/// Index drawn from mixing_rates(spec).
std::size_t sample_task(const MixtureSpec& spec, Rng& rng);
std::size_t sample_index(const std::vector<double>& rates, Rng& rng);

/// ParameterError for an unknown task.
MixtureSpec leave_one_out(const MixtureSpec& spec, const std::string& excluded);

/// Cycles through `examples` forever, reshuffling each epoch with a
/// permutation drawn from Rng(seed, derive_stream(stream, epoch)).
ExampleSource shuffled_cycle(std::vector<CorruptionPair> examples, std::uint64_t seed, std::uint64_t stream);

/// Example i comes from task sample_index(rates, Rng(seed, derive_stream(., i)));
/// within a task, examples are consumed in order from its source. Exhausted
/// when the chosen task's source is.
ExampleSource mixture_source(const MixtureSpec& spec, std::vector<ExampleSource> task_sources, std::uint64_t seed);

}  // namespace t2t
