#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "t2t/corruption.hpp"
#include "word_vocab.hpp"

namespace t2t {
namespace {

using testing::word_vocab;
using testing::words_to_ids;

const std::string kSentence = "Thank you for inviting me to your party last week .";

struct Fixture {
  Vocabulary vocab = word_vocab(kSentence + " apple", 100);
  TokenSequence x = words_to_ids(vocab, kSentence);
  std::string render(const TokenSequence& ids) const { return vocab.render(ids); }
};

std::vector<bool> mask_at(std::size_t n, std::initializer_list<std::size_t> positions) {
  std::vector<bool> m(n, false);
  for (auto p : positions) m[p] = true;
  return m;
}

// Inverse of the sentinel objectives: splice each target span back over its sentinel.
TokenSequence reconstruct(const CorruptionPair& pair, const Vocabulary& vocab) {
  std::map<TokenId, TokenSequence> spans;
  TokenId current = -1;
  for (TokenId t : pair.target_ids) {
    if (vocab.is_sentinel(t)) {
      current = t;
      spans[t];
    } else {
      spans[current].push_back(t);
    }
  }
  TokenSequence out;
  for (TokenId t : pair.input_ids) {
    if (vocab.is_sentinel(t)) {
      out.insert(out.end(), spans[t].begin(), spans[t].end());
    } else {
      out.push_back(t);
    }
  }
  return out;
}

void expect_sentinel_ordering(const CorruptionPair& pair, const Vocabulary& vocab) {
  TokenSequence in_s, out_s;
  for (TokenId t : pair.input_ids)
    if (vocab.is_sentinel(t)) in_s.push_back(t);
  for (TokenId t : pair.target_ids)
    if (vocab.is_sentinel(t)) out_s.push_back(t);
  ASSERT_EQ(out_s.size(), in_s.size() + 1);
  for (std::size_t i = 0; i < out_s.size(); ++i) EXPECT_EQ(out_s[i], vocab.sentinel_id(static_cast<int>(i)));
  EXPECT_TRUE(std::equal(in_s.begin(), in_s.end(), out_s.begin()));
  EXPECT_TRUE(vocab.is_sentinel(pair.target_ids.back()));
}

TEST(PrefixLm, WorkedExample) {
  Fixture f;
  const auto pair = prefix_lm_split_at(f.x, 4);
  EXPECT_EQ(f.render(pair.input_ids), "Thank you for inviting");
  EXPECT_EQ(f.render(pair.target_ids), "me to your party last week .");
}

TEST(PrefixLm, LengthTwoAndErrors) {
  Rng rng(1);
  const TokenSequence two{10, 11};
  for (int i = 0; i < 20; ++i) {
    const auto p = prefix_lm_split(two, rng);
    EXPECT_EQ(p.input_ids, TokenSequence{10});
    EXPECT_EQ(p.target_ids, TokenSequence{11});
  }
  const TokenSequence one{10};
  EXPECT_THROW(prefix_lm_split(one, rng), DataError);
}

TEST(PrefixLm, SplitPointIsUniform) {
  Rng rng(2);
  const TokenSequence x{4, 5, 6, 7, 8, 9, 10, 11, 12, 13};
  std::map<std::size_t, int> counts;
  const int n = 10000;
  for (int i = 0; i < n; ++i) ++counts[prefix_lm_split(x, rng).input_ids.size()];
  const double p = 1.0 / 9.0;
  const double sigma = std::sqrt(n * p * (1 - p));
  ASSERT_EQ(counts.size(), 9u);
  for (const auto& [s, c] : counts) {
    EXPECT_GE(s, 1u);
    EXPECT_LE(s, 9u);
    EXPECT_NEAR(c, n * p, 3 * sigma) << "split " << s;
  }
}

TEST(BertStyle, WorkedExamplePattern) {
  Fixture f;
  std::vector<TokenId> repl(f.x.size(), -1);
  repl[2] = repl[3] = Vocabulary::kMaskId;
  repl[8] = *f.vocab.find("apple");
  const auto pair = substitute_tokens(f.x, repl);
  EXPECT_EQ(f.render(pair.input_ids), "Thank you <M> <M> me to your party apple week .");
  EXPECT_EQ(pair.target_ids, f.x);
}

TEST(BertStyle, NoCorruptionIsIdentity) {
  Fixture f;
  const std::vector<TokenId> none(f.x.size(), -1);
  const auto pair = substitute_tokens(f.x, none);
  EXPECT_EQ(pair.input_ids, f.x);
  EXPECT_EQ(pair.target_ids, f.x);
}

TEST(BertStyle, RatesOverAMillionTokens) {
  const auto vocab = Vocabulary({"tok"}, 100);
  const TokenSequence x(1'000'000, *vocab.find("tok"));
  Rng rng(3);
  const auto pair = bert_style(x, 0.15, rng, vocab);
  EXPECT_EQ(pair.target_ids, x);
  std::size_t masked = 0, random = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const TokenId t = pair.input_ids[i];
    if (t == Vocabulary::kMaskId) {
      ++masked;
    } else if (t != x[i]) {
      ++random;
      EXPECT_TRUE(vocab.is_natural(t));
    }
  }
  const double corrupted = static_cast<double>(masked + random) / 1e6;
  EXPECT_GE(corrupted, 0.149);
  EXPECT_LE(corrupted, 0.151);
  const double n = static_cast<double>(masked + random);
  const double sigma = std::sqrt(n * 0.1 * 0.9);
  EXPECT_NEAR(static_cast<double>(random), 0.1 * n, 3 * sigma);
}

TEST(BertStyle, RejectsBadRate) {
  Fixture f;
  Rng rng(4);
  EXPECT_THROW(bert_style(f.x, 0.0, rng, f.vocab), ParameterError);
  EXPECT_THROW(bert_style(f.x, 1.0, rng, f.vocab), ParameterError);
}

TEST(MassStyle, WorkedExamplePatternAndStatistics) {
  Fixture f;
  std::vector<TokenId> repl(f.x.size(), -1);
  repl[2] = repl[3] = repl[8] = Vocabulary::kMaskId;
  EXPECT_EQ(f.render(substitute_tokens(f.x, repl).input_ids), "Thank you <M> <M> me to your party <M> week .");

  const TokenSequence x(1'000'000, *f.vocab.find("me"));
  Rng rng(5);
  const auto pair = mass_style(x, 0.15, rng, f.vocab);
  std::size_t masked = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (pair.input_ids[i] == Vocabulary::kMaskId) {
      ++masked;
    } else {
      EXPECT_EQ(pair.input_ids[i], x[i]);
    }
  }
  EXPECT_GE(masked / 1e6, 0.149);
  EXPECT_LE(masked / 1e6, 0.151);
  EXPECT_EQ(pair.target_ids, x);
}

TEST(IidReplaceSpans, WorkedExample) {
  Fixture f;
  const auto pair = replace_spans(f.x, mask_at(f.x.size(), {2, 3, 8}), f.vocab);
  EXPECT_EQ(f.render(pair.input_ids), "Thank you <X> me to your party <Y> week .");
  EXPECT_EQ(f.render(pair.target_ids), "<X> for inviting <Y> last <Z>");
}

TEST(IidReplaceSpans, NothingCorruptedKeepsFinalSentinel) {
  Fixture f;
  const auto pair = replace_spans(f.x, std::vector<bool>(f.x.size(), false), f.vocab);
  EXPECT_EQ(pair.input_ids, f.x);
  EXPECT_EQ(pair.target_ids, TokenSequence{f.vocab.sentinel_id(0)});
}

TEST(IidReplaceSpans, CapacityError) {
  const auto vocab = word_vocab(kSentence, 2);
  const auto x = words_to_ids(vocab, kSentence);
  EXPECT_NO_THROW(replace_spans(x, mask_at(x.size(), {2, 3}), vocab));
  EXPECT_THROW(replace_spans(x, mask_at(x.size(), {2, 8}), vocab), CapacityError);
}

TEST(IidReplaceSpans, ReconstructionOracle) {
  Fixture f;
  Rng rng(6);
  for (int i = 0; i < 10000; ++i) {
    TokenSequence x(1 + rng.uniform_int(40));
    for (auto& t : x) t = Vocabulary::kFirstByteId + static_cast<TokenId>(rng.uniform_int(200));
    const double rate = 0.05 + 0.9 * rng.uniform();
    const auto vocab = Vocabulary({}, 64);
    const auto pair = iid_replace_spans(x, rate, rng, vocab);
    ASSERT_EQ(reconstruct(pair, vocab), x);
    expect_sentinel_ordering(pair, vocab);
  }
}

TEST(IidDropTokens, WorkedExampleAndMergeOracle) {
  Fixture f;
  const auto pair = drop_tokens(f.x, mask_at(f.x.size(), {2, 3, 8}));
  EXPECT_EQ(f.render(pair.input_ids), "Thank you me to your party week .");
  EXPECT_EQ(f.render(pair.target_ids), "for inviting last");
  const auto none = drop_tokens(f.x, std::vector<bool>(f.x.size(), false));
  EXPECT_EQ(none.input_ids, f.x);
  EXPECT_TRUE(none.target_ids.empty());

  Rng rng(7);
  for (int i = 0; i < 10000; ++i) {
    // Position-tagged tokens: value encodes the original index, so merging by value restores order.
    TokenSequence x(1 + rng.uniform_int(30));
    for (std::size_t k = 0; k < x.size(); ++k) x[k] = static_cast<TokenId>(k);
    const auto p = iid_drop_tokens(x, 0.05 + 0.9 * rng.uniform(), rng);
    TokenSequence merged;
    std::merge(p.input_ids.begin(), p.input_ids.end(), p.target_ids.begin(), p.target_ids.end(),
               std::back_inserter(merged));
    ASSERT_EQ(merged, x);
  }
}

TEST(RandomSpans, PaperCounts) {
  const auto c = span_counts(500, 0.15, 3.0);
  EXPECT_EQ(c.num_corrupted, 75u);
  EXPECT_EQ(c.num_spans, 25u);
}

TEST(RandomSpans, WorkedExampleShape) {
  Fixture f;
  const auto pair = replace_spans(f.x, mask_at(f.x.size(), {2, 3, 4, 6, 7, 8}), f.vocab);
  EXPECT_EQ(f.render(pair.input_ids), "Thank you <X> to <Y> week .");
  EXPECT_EQ(f.render(pair.target_ids), "<X> for inviting me <Y> your party last <Z>");
}

TEST(RandomSpans, SamplingStatistics) {
  const auto vocab = Vocabulary({}, 100);
  TokenSequence x(512);
  for (std::size_t k = 0; k < x.size(); ++k) x[k] = Vocabulary::kFirstByteId + static_cast<TokenId>(k % 256);
  Rng rng(8);
  double spans = 0, corrupted = 0;
  std::vector<int> starts(512, 0);
  for (int i = 0; i < 10000; ++i) {
    const auto mask = random_span_mask(x.size(), 0.15, 3.0, rng);
    ASSERT_EQ(mask.size(), x.size());
    for (std::size_t k = 0; k < mask.size(); ++k) {
      corrupted += mask[k];
      if (mask[k] && (k == 0 || !mask[k - 1])) {
        ++spans;
        ++starts[k];
      }
    }
  }
  const double mean_span = corrupted / spans;
  EXPECT_GE(mean_span, 2.85);
  EXPECT_LE(mean_span, 3.15);
  const double frac = corrupted / (10000.0 * 512);
  EXPECT_GE(frac, 0.147);
  EXPECT_LE(frac, 0.153);
  // The first and last positions are reachable: no positional exclusions.
  EXPECT_GT(starts.front(), 0);
  Rng rng2(9);
  bool last_corrupted = false;
  for (int i = 0; i < 1000 && !last_corrupted; ++i) last_corrupted = random_span_mask(512, 0.15, 3.0, rng2).back();
  EXPECT_TRUE(last_corrupted);
}

TEST(RandomSpans, SpansNonAdjacentAndInvertible) {
  Rng rng(10);
  const auto vocab = Vocabulary({}, 200);
  for (int i = 0; i < 10000; ++i) {
    const std::size_t len = 2 + rng.uniform_int(60);
    const double rate = 0.1 + 0.5 * rng.uniform();
    if (rate * static_cast<double>(len) < 1.0) continue;
    const double mean = 1.0 + 4.0 * rng.uniform();
    TokenSequence x(len);
    for (auto& t : x) t = Vocabulary::kFirstByteId + static_cast<TokenId>(rng.uniform_int(256));
    const auto mask = random_span_mask(len, rate, mean, rng);
    const auto c = span_counts(len, rate, mean);
    std::size_t corrupted = 0, runs = 0;
    for (std::size_t k = 0; k < len; ++k) {
      corrupted += mask[k];
      runs += mask[k] && (k == 0 || !mask[k - 1]);
    }
    ASSERT_EQ(corrupted, c.num_corrupted);
    ASSERT_EQ(runs, c.num_spans);
    const auto pair = replace_spans(x, mask, vocab);
    ASSERT_EQ(reconstruct(pair, vocab), x);
    expect_sentinel_ordering(pair, vocab);
  }
}

TEST(RandomSpans, MeanOneMatchesIidCountStructure) {
  for (std::size_t len : {10u, 64u, 512u}) {
    for (double rate : {0.1, 0.15, 0.3, 0.5}) {
      if (rate * static_cast<double>(len) < 1.0) continue;
      const auto c = span_counts(len, rate, 1.0);
      EXPECT_EQ(c.num_spans, c.num_corrupted);
    }
  }
}

TEST(RandomSpans, ErrorsAndCompositions) {
  Rng rng(11);
  EXPECT_THROW(span_counts(5, 0.1, 3.0), ParameterError);
  EXPECT_THROW(span_counts(100, 0.1, 0.5), ParameterError);
  const auto few = Vocabulary({}, 3);
  TokenSequence x(100, Vocabulary::kFirstByteId);
  EXPECT_THROW(random_spans(x, 0.5, 2.0, rng, few), CapacityError);
  // Uniform over the C(4,2)=6 compositions of 5 into 3 parts.
  std::map<std::vector<std::size_t>, int> counts;
  for (int i = 0; i < 6000; ++i) ++counts[random_composition(5, 3, rng)];
  EXPECT_EQ(counts.size(), 6u);
  for (const auto& [comp, n] : counts) EXPECT_NEAR(n, 1000, 4 * std::sqrt(1000 * 5.0 / 6.0));
}

TEST(Deshuffle, PermutationInvariantAndUniform) {
  Rng rng(12);
  const TokenSequence one{7};
  EXPECT_EQ(deshuffle(one, rng).input_ids, one);
  const TokenSequence x{10, 11, 12, 13, 14};
  std::map<TokenSequence, int> counts;
  for (int i = 0; i < 10000; ++i) {
    const auto pair = deshuffle(x, rng);
    EXPECT_EQ(pair.target_ids, x);
    auto sorted = pair.input_ids;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(sorted, x);
    ++counts[pair.input_ids];
  }
  ASSERT_EQ(counts.size(), 120u);
  const double p = 1.0 / 120.0;
  const double sigma = std::sqrt(10000 * p * (1 - p));
  for (const auto& [perm, n] : counts) EXPECT_NEAR(n, 10000 * p, 4 * sigma);
}

TEST(ToLmConcat, PrefixBoundaryAndRoundTrip) {
  const CorruptionPair p{{4, 5}, {6}};
  const auto lm = to_lm_concat(p);
  EXPECT_EQ(lm.ids, (TokenSequence{4, 5, 6}));
  EXPECT_EQ(lm.prefix_len, 2u);
  const CorruptionPair no_target{{4, 5, 6}, {}};
  EXPECT_EQ(to_lm_concat(no_target).prefix_len, 3u);
  const auto sep = to_lm_concat(p, Vocabulary::kEosId);
  EXPECT_EQ(sep.ids, (TokenSequence{4, 5, 1, 6}));
  EXPECT_EQ(sep.prefix_len, 3u);
  const TokenSequence in(lm.ids.begin(), lm.ids.begin() + static_cast<std::ptrdiff_t>(lm.prefix_len));
  const TokenSequence out(lm.ids.begin() + static_cast<std::ptrdiff_t>(lm.prefix_len), lm.ids.end());
  EXPECT_EQ((CorruptionPair{in, out}), p);
}

TEST(Objectives, TargetEconomyAgainstBertStyle) {
  const auto vocab = Vocabulary({}, 100);
  const TokenSequence x(100, Vocabulary::kFirstByteId + 1);
  for (double rate : {0.1, 0.15, 0.25, 0.5, 0.75, 0.8}) {
    Rng rng(13);
    double spans_len = 0, bert_len = 0;
    for (int i = 0; i < 500; ++i) {
      spans_len += static_cast<double>(iid_replace_spans(x, rate, rng, vocab).target_ids.size());
      bert_len += static_cast<double>(bert_style(x, rate, rng, vocab).target_ids.size());
    }
    EXPECT_LT(spans_len, bert_len) << "rate " << rate;
  }
}

TEST(Objectives, SpecValidationAndDispatch) {
  ObjectiveSpec spec;
  EXPECT_NO_THROW(spec.validate());
  spec.corruption_rate = 1.0;
  EXPECT_THROW(spec.validate(), ParameterError);
  spec = ObjectiveSpec{ObjectiveKind::kRandomSpans, 0.15, 0.5};
  EXPECT_THROW(spec.validate(), ParameterError);
  EXPECT_EQ(parse_objective_kind("iid_drop_tokens"), ObjectiveKind::kIidDropTokens);
  EXPECT_THROW(parse_objective_kind("nope"), ConfigError);
  Fixture f;
  Rng rng(14);
  const auto lm = apply_objective({ObjectiveKind::kFullLm, 0.15, 3}, f.x, rng, f.vocab);
  EXPECT_TRUE(lm.input_ids.empty());
  EXPECT_EQ(lm.target_ids, f.x);
}

}  // namespace
}  // namespace t2t
