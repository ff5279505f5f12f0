#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "t2t/corruption.hpp"
#include "t2t/rng.hpp"
#include "t2t/vocab.hpp"

namespace t2t {

enum class SyntheticTask { kCopy, kReverse, kArithmetic };

std::string to_string(SyntheticTask task);
/// copy, reverse, arithmetic. ParameterError otherwise.
SyntheticTask parse_synthetic_task(const std::string& name);

/// A toy language over a fixed-size vocabulary for desk-scale experiments.
///
/// Learned pieces are the task words "copy:", "reverse:", "add:" followed by
/// filler words "w0", "w1", ... up to the requested size. Words follow a
/// Zipf distribution. Each document has a small topic vocabulary that most of
/// its words come from, and otherwise each word prefers a handful of
/// successors. Some sentences repeat earlier ones, some echo a phrase
/// ("a b c : a b c") or mirror it ("a b c ~ c b a"), and some are sums written
/// with digit tokens ("12+7=19").
class SyntheticLanguage {
 public:
  /// ParameterError unless vocab_size leaves room for at least 16 words.
  explicit SyntheticLanguage(int vocab_size = 5000, int num_sentinels = 100, std::uint64_t seed = 0);

  const Vocabulary& vocab() const { return vocab_; }
  int num_words() const { return static_cast<int>(words_.size()); }

  TokenId word(Rng& rng) const;
  /// `len` words, mostly drawn from `topic` when it is given, otherwise from
  /// the successor chain.
  TokenSequence phrase(Rng& rng, std::size_t len, std::span<const TokenId> topic = {}) const;
  /// Decimal digits of n as byte tokens.
  TokenSequence number(int n) const;
  /// Sentences until at least `min_len` tokens.
  TokenSequence document(Rng& rng, std::size_t min_len) const;
  std::vector<TokenSequence> corpus(std::size_t num_documents, std::size_t min_len, std::uint64_t seed) const;

  /// copy: 3-6 words -> the same words; reverse: the words reversed;
  /// arithmetic: "add:" a "+" b with a, b < 50 -> the digits of a + b.
  /// Targets end with end-of-sequence.
  CorruptionPair example(SyntheticTask task, Rng& rng) const;
  /// Example i of a task, drawn from its own stream.
  CorruptionPair example(SyntheticTask task, std::uint64_t seed, std::uint64_t index) const;

 private:
  Vocabulary vocab_;
  std::vector<TokenId> words_;
  std::vector<double> zipf_cdf_;
  std::vector<std::vector<TokenId>> successors_;
  TokenId copy_id_, reverse_id_, add_id_, plus_id_, equals_id_;
};

}  // namespace t2t
