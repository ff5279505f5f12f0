#include "t2t/corruption.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace t2t {

namespace {

void check_rate(double rate, const char* op) {
  if (!(rate > 0.0 && rate < 1.0)) {
    throw ParameterError(std::string(op) + ": corruption rate " + std::to_string(rate) + " not in (0,1)");
  }
}

std::vector<bool> iid_mask(std::size_t n, double rate, Rng& rng) {
  std::vector<bool> mask(n);
  for (std::size_t i = 0; i < n; ++i) mask[i] = rng.bernoulli(rate);
  return mask;
}

TokenId random_natural_id(const Vocabulary& vocab, Rng& rng) {
  const auto count = static_cast<std::uint64_t>(vocab.first_sentinel_id() - Vocabulary::kFirstByteId);
  return Vocabulary::kFirstByteId + static_cast<TokenId>(rng.uniform_int(count));
}

}  // namespace

std::string to_string(ObjectiveKind kind) {
  switch (kind) {
    case ObjectiveKind::kPrefixLm: return "prefix_lm";
    case ObjectiveKind::kBertStyle: return "bert_style";
    case ObjectiveKind::kMassStyle: return "mass_style";
    case ObjectiveKind::kIidReplaceSpans: return "iid_replace_spans";
    case ObjectiveKind::kIidDropTokens: return "iid_drop_tokens";
    case ObjectiveKind::kRandomSpans: return "random_spans";
    case ObjectiveKind::kDeshuffle: return "deshuffle";
    case ObjectiveKind::kFullLm: return "full_lm";
  }
  return "unknown";
}

ObjectiveKind parse_objective_kind(const std::string& name) {
  for (auto k : {ObjectiveKind::kPrefixLm, ObjectiveKind::kBertStyle, ObjectiveKind::kMassStyle,
                 ObjectiveKind::kIidReplaceSpans, ObjectiveKind::kIidDropTokens, ObjectiveKind::kRandomSpans,
                 ObjectiveKind::kDeshuffle, ObjectiveKind::kFullLm}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown objective '" + name + "'");
}

void ObjectiveSpec::validate() const {
  check_rate(corruption_rate, "objective");
  if (!(mean_span_length >= 1.0)) {
    throw ParameterError("objective: mean span length " + std::to_string(mean_span_length) + " is below 1");
  }
}

CorruptionPair substitute_tokens(std::span<const TokenId> x, std::span<const TokenId> replacement) {
  if (replacement.size() != x.size()) throw ShapeError("substitute_tokens: replacement length mismatch");
  CorruptionPair pair;
  pair.target_ids.assign(x.begin(), x.end());
  pair.input_ids.reserve(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) pair.input_ids.push_back(replacement[i] < 0 ? x[i] : replacement[i]);
  return pair;
}

CorruptionPair replace_spans(std::span<const TokenId> x, const std::vector<bool>& corrupted,
                             const Vocabulary& vocab) {
  if (corrupted.size() != x.size()) throw ShapeError("replace_spans: mask length mismatch");
  int spans = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (corrupted[i] && (i == 0 || !corrupted[i - 1])) ++spans;
  }
  if (spans + 1 > vocab.num_sentinels()) {
    throw CapacityError("replace_spans: " + std::to_string(spans) + " spans plus a final sentinel need " +
                        std::to_string(spans + 1) + " sentinels, vocabulary has " +
                        std::to_string(vocab.num_sentinels()));
  }
  CorruptionPair pair;
  int next = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!corrupted[i]) {
      pair.input_ids.push_back(x[i]);
      continue;
    }
    if (i == 0 || !corrupted[i - 1]) {
      const TokenId s = vocab.sentinel_id(next++);
      pair.input_ids.push_back(s);
      pair.target_ids.push_back(s);
    }
    pair.target_ids.push_back(x[i]);
  }
  pair.target_ids.push_back(vocab.sentinel_id(next));
  return pair;
}

CorruptionPair drop_tokens(std::span<const TokenId> x, const std::vector<bool>& corrupted) {
  if (corrupted.size() != x.size()) throw ShapeError("drop_tokens: mask length mismatch");
  CorruptionPair pair;
  for (std::size_t i = 0; i < x.size(); ++i) (corrupted[i] ? pair.target_ids : pair.input_ids).push_back(x[i]);
  return pair;
}

CorruptionPair prefix_lm_split_at(std::span<const TokenId> x, std::size_t split) {
  if (split < 1 || split >= x.size()) {
    throw ParameterError("prefix_lm_split: split " + std::to_string(split) + " outside [1, " +
                         std::to_string(x.size()) + ")");
  }
  return {TokenSequence(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(split)),
          TokenSequence(x.begin() + static_cast<std::ptrdiff_t>(split), x.end())};
}

CorruptionPair prefix_lm_split(std::span<const TokenId> x, Rng& rng) {
  if (x.size() < 2) throw DataError("prefix_lm_split: sequence of length " + std::to_string(x.size()) + " < 2");
  return prefix_lm_split_at(x, 1 + static_cast<std::size_t>(rng.uniform_int(x.size() - 1)));
}

CorruptionPair bert_style(std::span<const TokenId> x, double rate, Rng& rng, const Vocabulary& vocab) {
  check_rate(rate, "bert_style");
  std::vector<TokenId> replacement(x.size(), -1);
  for (auto& r : replacement) {
    if (!rng.bernoulli(rate)) continue;
    r = rng.bernoulli(0.9) ? Vocabulary::kMaskId : random_natural_id(vocab, rng);
  }
  return substitute_tokens(x, replacement);
}

CorruptionPair mass_style(std::span<const TokenId> x, double rate, Rng& rng, const Vocabulary& vocab) {
  (void)vocab;
  check_rate(rate, "mass_style");
  std::vector<TokenId> replacement(x.size(), -1);
  for (auto& r : replacement) {
    if (rng.bernoulli(rate)) r = Vocabulary::kMaskId;
  }
  return substitute_tokens(x, replacement);
}

CorruptionPair iid_replace_spans(std::span<const TokenId> x, double rate, Rng& rng, const Vocabulary& vocab) {
  check_rate(rate, "iid_replace_spans");
  return replace_spans(x, iid_mask(x.size(), rate, rng), vocab);
}

CorruptionPair iid_drop_tokens(std::span<const TokenId> x, double rate, Rng& rng) {
  check_rate(rate, "iid_drop_tokens");
  return drop_tokens(x, iid_mask(x.size(), rate, rng));
}

SpanCounts span_counts(std::size_t length, double rate, double mean_span_length) {
  check_rate(rate, "random_spans");
  if (!(mean_span_length >= 1.0)) throw ParameterError("random_spans: mean span length below 1");
  if (rate * static_cast<double>(length) < 1.0) {
    throw ParameterError("random_spans: rate*length = " + std::to_string(rate * static_cast<double>(length)) +
                         " is below 1");
  }
  SpanCounts c;
  c.num_corrupted = static_cast<std::size_t>(std::llround(rate * static_cast<double>(length)));
  c.num_corrupted = std::clamp<std::size_t>(c.num_corrupted, 1, length);
  const std::size_t clean = length - c.num_corrupted;
  c.num_spans = static_cast<std::size_t>(std::llround(static_cast<double>(c.num_corrupted) / mean_span_length));
  c.num_spans = std::clamp<std::size_t>(c.num_spans, 1, c.num_corrupted);
  // Spans must be separated by at least one clean token.
  c.num_spans = std::min(c.num_spans, clean + 1);
  return c;
}

std::vector<std::size_t> random_composition(std::size_t total, std::size_t parts, Rng& rng) {
  if (parts == 0 || parts > total) {
    throw ParameterError("random_composition: cannot split " + std::to_string(total) + " into " +
                         std::to_string(parts) + " positive parts");
  }
  // Choose parts-1 distinct cut points from 1..total-1 via partial shuffle.
  std::vector<std::size_t> cuts(total - 1);
  std::iota(cuts.begin(), cuts.end(), std::size_t{1});
  for (std::size_t i = 0; i + 1 < parts; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.uniform_int(cuts.size() - i));
    std::swap(cuts[i], cuts[j]);
  }
  cuts.resize(parts - 1);
  std::sort(cuts.begin(), cuts.end());
  std::vector<std::size_t> out;
  out.reserve(parts);
  std::size_t prev = 0;
  for (std::size_t c : cuts) {
    out.push_back(c - prev);
    prev = c;
  }
  out.push_back(total - prev);
  return out;
}

std::vector<bool> random_span_mask(std::size_t length, double rate, double mean_span_length, Rng& rng) {
  const SpanCounts c = span_counts(length, rate, mean_span_length);
  const std::size_t clean = length - c.num_corrupted;
  const auto spans = random_composition(c.num_corrupted, c.num_spans, rng);
  // num_spans+1 gaps: interior >= 1, ends >= 0. Shift to a positive composition.
  const std::size_t gap_parts = c.num_spans + 1;
  auto gaps = random_composition(clean + 2, gap_parts, rng);
  gaps.front() -= 1;
  gaps.back() -= 1;
  std::vector<bool> mask;
  mask.reserve(length);
  for (std::size_t s = 0; s < c.num_spans; ++s) {
    mask.insert(mask.end(), gaps[s], false);
    mask.insert(mask.end(), spans[s], true);
  }
  mask.insert(mask.end(), gaps.back(), false);
  return mask;
}

CorruptionPair random_spans(std::span<const TokenId> x, double rate, double mean_span_length, Rng& rng,
                            const Vocabulary& vocab) {
  return replace_spans(x, random_span_mask(x.size(), rate, mean_span_length, rng), vocab);
}

CorruptionPair deshuffle(std::span<const TokenId> x, Rng& rng) {
  CorruptionPair pair{TokenSequence(x.begin(), x.end()), TokenSequence(x.begin(), x.end())};
  rng.shuffle(std::span<TokenId>(pair.input_ids));
  return pair;
}

CorruptionPair apply_objective(const ObjectiveSpec& spec, std::span<const TokenId> x, Rng& rng,
                               const Vocabulary& vocab) {
  switch (spec.kind) {
    case ObjectiveKind::kPrefixLm: return prefix_lm_split(x, rng);
    case ObjectiveKind::kBertStyle: return bert_style(x, spec.corruption_rate, rng, vocab);
    case ObjectiveKind::kMassStyle: return mass_style(x, spec.corruption_rate, rng, vocab);
    case ObjectiveKind::kIidReplaceSpans: return iid_replace_spans(x, spec.corruption_rate, rng, vocab);
    case ObjectiveKind::kIidDropTokens: return iid_drop_tokens(x, spec.corruption_rate, rng);
    case ObjectiveKind::kRandomSpans:
      return random_spans(x, spec.corruption_rate, spec.mean_span_length, rng, vocab);
    case ObjectiveKind::kDeshuffle: return deshuffle(x, rng);
    case ObjectiveKind::kFullLm: return {TokenSequence{}, TokenSequence(x.begin(), x.end())};
  }
  throw ConfigError("apply_objective: unknown objective");
}

LmSequence to_lm_concat(const CorruptionPair& pair, std::optional<TokenId> separator) {
  LmSequence out;
  out.ids = pair.input_ids;
  if (separator) out.ids.push_back(*separator);
  out.prefix_len = out.ids.size();
  out.ids.insert(out.ids.end(), pair.target_ids.begin(), pair.target_ids.end());
  return out;
}

}  // namespace t2t
