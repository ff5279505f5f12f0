#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "t2t/rng.hpp"
#include "t2t/vocab.hpp"

namespace t2t {

struct CorruptionPair {
  TokenSequence input_ids;
  TokenSequence target_ids;

  bool operator==(const CorruptionPair&) const = default;
};

enum class ObjectiveKind {
  kPrefixLm,
  kBertStyle,
  kMassStyle,
  kIidReplaceSpans,
  kIidDropTokens,
  kRandomSpans,
  kDeshuffle,
  kFullLm,
};

std::string to_string(ObjectiveKind kind);
/// Accepts the snake_case names ("random_spans", "bert_style", ...).
ObjectiveKind parse_objective_kind(const std::string& name);

struct ObjectiveSpec {
  ObjectiveKind kind = ObjectiveKind::kRandomSpans;
  double corruption_rate = 0.15;
  double mean_span_length = 3.0;

  /// Throws ParameterError unless rate is in (0,1) and mean span length >= 1.
  void validate() const;
};

/// Token-wise replacement: replacement[i] < 0 keeps x[i], otherwise x[i] is
/// replaced by that id. The target is the original sequence.
CorruptionPair substitute_tokens(std::span<const TokenId> x, std::span<const TokenId> replacement);

/// Collapses each maximal run of corrupted positions into the next sentinel.
/// Target is (sentinel_k, span_k...) for each span followed by one final sentinel.
CorruptionPair replace_spans(std::span<const TokenId> x, const std::vector<bool>& corrupted,
                             const Vocabulary& vocab);

/// Input keeps the uncorrupted tokens, target lists the corrupted ones in order.
CorruptionPair drop_tokens(std::span<const TokenId> x, const std::vector<bool>& corrupted);

CorruptionPair prefix_lm_split_at(std::span<const TokenId> x, std::size_t split);

CorruptionPair prefix_lm_split(std::span<const TokenId> x, Rng& rng);
CorruptionPair bert_style(std::span<const TokenId> x, double rate, Rng& rng, const Vocabulary& vocab);
CorruptionPair mass_style(std::span<const TokenId> x, double rate, Rng& rng, const Vocabulary& vocab);
CorruptionPair iid_replace_spans(std::span<const TokenId> x, double rate, Rng& rng, const Vocabulary& vocab);
CorruptionPair iid_drop_tokens(std::span<const TokenId> x, double rate, Rng& rng);
CorruptionPair random_spans(std::span<const TokenId> x, double rate, double mean_span_length, Rng& rng,
                            const Vocabulary& vocab);
CorruptionPair deshuffle(std::span<const TokenId> x, Rng& rng);

struct SpanCounts {
  std::size_t num_corrupted = 0;
  std::size_t num_spans = 0;
};

/// Corrupted-token and span counts used by random_spans for a sequence of `length`.
SpanCounts span_counts(std::size_t length, double rate, double mean_span_length);

/// Corruption mask for random_spans: span lengths and gaps drawn uniformly
/// among compositions of the totals from span_counts. Interior gaps are >= 1.
std::vector<bool> random_span_mask(std::size_t length, double rate, double mean_span_length, Rng& rng);

/// Uniform composition of `total` into `parts` positive integers.
std::vector<std::size_t> random_composition(std::size_t total, std::size_t parts, Rng& rng);

/// Dispatches on spec.kind. kFullLm yields an empty input and the whole sequence as target.
CorruptionPair apply_objective(const ObjectiveSpec& spec, std::span<const TokenId> x, Rng& rng,
                               const Vocabulary& vocab);

struct LmSequence {
  TokenSequence ids;
  std::size_t prefix_len = 0;
};

/// Concatenates input and target for single-stack models; the prefix is the
/// input plus the optional separator.
LmSequence to_lm_concat(const CorruptionPair& pair, std::optional<TokenId> separator = std::nullopt);

}  // namespace t2t
