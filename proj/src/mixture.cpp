#include "t2t/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <set>

#include "t2t/errors.hpp"

namespace t2t {
namespace {

constexpr std::uint64_t kMixturePurpose = 0x313c7;
constexpr std::uint64_t kEpochPurpose = 0xe90c;

}  // namespace

MixtureSpec MixtureSpec::examples_proportional(std::vector<MixtureTask> tasks, double limit) {
  return {std::move(tasks), MixingStrategy::kExamplesProportional, limit, 1.0};
}

MixtureSpec MixtureSpec::temperature_scaled(std::vector<MixtureTask> tasks, double temperature, double limit) {
  return {std::move(tasks), MixingStrategy::kTemperature, limit, temperature};
}

MixtureSpec MixtureSpec::equal(std::vector<MixtureTask> tasks) {
  return {std::move(tasks), MixingStrategy::kEqual, kDefaultLimit, 1.0};
}

void MixtureSpec::validate() const {
  if (tasks.empty()) throw ParameterError("mixture: no tasks");
  std::set<std::string> names;
  for (const auto& t : tasks) {
    if (t.examples < 1) throw ParameterError("mixture: task '" + t.name + "' has no examples");
    if (!names.insert(t.name).second) throw ParameterError("mixture: duplicate task '" + t.name + "'");
  }
  if (!(limit >= 1)) throw ParameterError("mixture: limit K must be at least 1");
  if (!(temperature >= 1)) throw ParameterError("mixture: temperature T must be at least 1");
}

std::vector<double> mixing_rates(const MixtureSpec& spec) {
  spec.validate();
  const std::size_t n = spec.tasks.size();
  std::vector<double> rates(n, 1.0 / static_cast<double>(n));
  if (spec.strategy == MixingStrategy::kEqual) return rates;
  for (std::size_t i = 0; i < n; ++i) rates[i] = std::min(static_cast<double>(spec.tasks[i].examples), spec.limit);
  if (spec.strategy == MixingStrategy::kTemperature) {
    const double total = std::accumulate(rates.begin(), rates.end(), 0.0);
    for (auto& r : rates) r = std::pow(r / total, 1.0 / spec.temperature);
  }
  const double total = std::accumulate(rates.begin(), rates.end(), 0.0);
  for (auto& r : rates) r /= total;
  return rates;
}

std::size_t sample_index(const std::vector<double>& rates, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0;
  for (std::size_t i = 0; i < rates.size(); ++i) {
    acc += rates[i];
    if (u < acc) return i;
  }
  // Rounding can leave the cumulative sum a hair under 1.
  for (std::size_t i = rates.size(); i-- > 0;) {
    if (rates[i] > 0) return i;
  }
  return 0;
}

std::size_t sample_task(const MixtureSpec& spec, Rng& rng) { return sample_index(mixing_rates(spec), rng); }

MixtureSpec leave_one_out(const MixtureSpec& spec, const std::string& excluded) {
  MixtureSpec out = spec;
  const auto it = std::find_if(out.tasks.begin(), out.tasks.end(), [&](const auto& t) { return t.name == excluded; });
  if (it == out.tasks.end()) throw ParameterError("mixture: unknown task '" + excluded + "'");
  out.tasks.erase(it);
  out.validate();
  return out;
}

ExampleSource shuffled_cycle(std::vector<CorruptionPair> examples, std::uint64_t seed, std::uint64_t stream) {
  if (examples.empty()) throw DataError("shuffled_cycle: no examples");
  struct State {
    std::vector<CorruptionPair> examples;
    std::vector<std::size_t> order;
    std::uint64_t epoch = ~std::uint64_t{0};
  };
  auto st = std::make_shared<State>();
  st->examples = std::move(examples);
  return [st, seed, stream](std::uint64_t k) -> std::optional<CorruptionPair> {
    const std::uint64_t n = st->examples.size();
    const std::uint64_t epoch = k / n;
    if (epoch != st->epoch) {
      st->order.resize(n);
      std::iota(st->order.begin(), st->order.end(), std::size_t{0});
      Rng rng(seed, Rng::derive_stream(stream ^ kEpochPurpose, epoch));
      rng.shuffle(std::span(st->order));
      st->epoch = epoch;
    }
    return st->examples[st->order[k % n]];
  };
}

ExampleSource mixture_source(const MixtureSpec& spec, std::vector<ExampleSource> task_sources, std::uint64_t seed) {
  if (task_sources.size() != spec.tasks.size()) {
    throw ConfigError("mixture: " + std::to_string(task_sources.size()) + " sources for " +
                      std::to_string(spec.tasks.size()) + " tasks");
  }
  struct State {
    std::vector<double> rates;
    std::vector<ExampleSource> sources;
    std::vector<std::size_t> task_of;       // task drawn for example i
    std::vector<std::uint64_t> within;      // its index within that task
    std::vector<std::uint64_t> counts;
  };
  auto st = std::make_shared<State>();
  st->rates = mixing_rates(spec);
  st->sources = std::move(task_sources);
  st->counts.assign(st->sources.size(), 0);
  return [st, seed](std::uint64_t i) -> std::optional<CorruptionPair> {
    while (st->task_of.size() <= i) {
      Rng rng(seed, Rng::derive_stream(kMixturePurpose, st->task_of.size()));
      const auto t = sample_index(st->rates, rng);
      st->task_of.push_back(t);
      st->within.push_back(st->counts[t]++);
    }
    return st->sources[st->task_of[i]](st->within[i]);
  };
}

}  // namespace t2t
