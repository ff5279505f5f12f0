#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "t2t/rng.hpp"
#include "t2t/vocab.hpp"

namespace t2t {
namespace {

std::string random_bytes(Rng& rng, std::size_t max_len) {
  std::string s(rng.uniform_int(max_len + 1), '\0');
  for (auto& c : s) c = static_cast<char>(rng.uniform_int(256));
  return s;
}

std::vector<std::string> small_corpus() {
  return {"the cat sat on the mat", "the dog sat on the log", "a cat and a dog", "these thematic themes",
          "on and on and on", "a quick brown fox jumps over the lazy dog",
          "pack my box with five dozen liquor jugs", "sphinx of black quartz, judge my vow",
          "how vexingly quick daft zebras jump", "the five boxing wizards jump quickly"};
}

TEST(TrainVocab, ToyCorpusMergesRepeatedLetterBeforeSpace) {
  // Hand run over chunks "aaaa" and " aaaa": (a,a) occurs 6 times, (' ',a) once.
  const std::vector<std::string> corpus{"aaaa aaaa"};
  const auto merges = learn_merges(corpus, 3);
  ASSERT_EQ(merges.size(), 3u);
  EXPECT_EQ(merges[0], std::make_pair(std::string("a"), std::string("a")));
  EXPECT_EQ(merges[1], std::make_pair(std::string("aa"), std::string("aa")));
  EXPECT_EQ(merges[2], std::make_pair(std::string(" "), std::string("aaaa")));
  const auto v = train_vocab(corpus, Vocabulary::kFirstLearnedId + 3, 0);
  EXPECT_EQ(v.size(), 263);
  EXPECT_EQ(v.piece(260), "aa");
  EXPECT_EQ(v.piece(261), "aaaa");
  EXPECT_EQ(v.piece(262), " aaaa");
}

TEST(TrainVocab, TiesPreferLexicographicallySmallerPair) {
  const std::vector<std::string> corpus{"ab cd"};
  const auto merges = learn_merges(corpus, 3);
  EXPECT_EQ(merges[0].first + merges[0].second, " c");
  EXPECT_EQ(merges[1].first + merges[1].second, " cd");
  EXPECT_EQ(merges[2].first + merges[2].second, "ab");
}

TEST(TrainVocab, ExactSizeAndSentinelLayout) {
  const auto corpus = small_corpus();
  const auto v = train_vocab(corpus, 300, 100 - 75);
  EXPECT_EQ(v.size(), 300);
  const auto big = Vocabulary({"the", "cat"}, 100);
  EXPECT_EQ(big.sentinel_id(0), big.size() - 100);
  EXPECT_EQ(big.sentinel_id(1), big.size() - 99);
  std::set<TokenId> ids;
  for (int k = 0; k < 100; ++k) {
    ids.insert(big.sentinel_id(k));
    EXPECT_TRUE(big.is_sentinel(big.sentinel_id(k)));
    EXPECT_EQ(big.sentinel_index(big.sentinel_id(k)), k);
  }
  EXPECT_EQ(ids.size(), 100u);
  EXPECT_EQ(*ids.rbegin(), big.size() - 1);
  EXPECT_THROW(big.sentinel_id(100), ParameterError);
  EXPECT_THROW(big.sentinel_id(-1), ParameterError);
}

TEST(TrainVocab, Errors) {
  const std::vector<std::string> empty;
  EXPECT_THROW(train_vocab(empty, 300, 3), DataError);
  const std::vector<std::string> blank{""};
  EXPECT_THROW(train_vocab(blank, 300, 3), DataError);
  const auto corpus = small_corpus();
  EXPECT_THROW(train_vocab(corpus, 260 + 3, 3), ParameterError);
  const std::vector<std::string> tiny{"ab"};
  EXPECT_THROW(train_vocab(tiny, 270, 0), DataError);
}

TEST(TrainVocab, DeterministicAndShardOrderInsensitive) {
  auto corpus = small_corpus();
  const auto a = train_vocab(corpus, 290, 5);
  std::reverse(corpus.begin(), corpus.end());
  const auto b = train_vocab(corpus, 290, 5);
  EXPECT_EQ(a.pieces(), b.pieces());
}

TEST(Encode, EmptyAndSinglePiece) {
  const auto v = train_vocab(small_corpus(), 300, 3);
  EXPECT_TRUE(v.encode("").empty());
  for (TokenId id = Vocabulary::kFirstLearnedId; id < v.first_sentinel_id(); ++id) {
    const auto ids = v.encode(v.piece(id));
    ASSERT_EQ(ids.size(), 1u) << v.piece(id);
    EXPECT_EQ(ids[0], id);
  }
}

TEST(Encode, RoundTripOnRandomBytesAndNoSentinels) {
  const auto v = train_vocab(small_corpus(), 400, 100);
  Rng rng(17);
  for (int i = 0; i < 1000; ++i) {
    const auto s = random_bytes(rng, 40);
    const auto ids = v.encode(s);
    EXPECT_EQ(v.decode(ids), s);
    for (TokenId id : ids) {
      EXPECT_TRUE(v.is_natural(id));
      EXPECT_FALSE(v.is_sentinel(id));
    }
  }
}

TEST(Encode, ReencodingDecodeIsFixedPoint) {
  const auto v = train_vocab(small_corpus(), 320, 10);
  Rng rng(18);
  const std::string alphabet = "the cat dog on and a themes";
  for (int i = 0; i < 500; ++i) {
    std::string s;
    const auto n = rng.uniform_int(30);
    for (std::uint64_t k = 0; k < n; ++k) s.push_back(alphabet[rng.uniform_int(alphabet.size())]);
    const auto ids = v.encode(s);
    EXPECT_EQ(v.encode(v.decode(ids)), ids);
  }
}

TEST(Encode, SentinelStringsEncodeAsNaturalText) {
  const auto v = Vocabulary({"<e", "xtra"}, 4);
  const auto ids = v.encode(v.piece(v.sentinel_id(0)));
  for (TokenId id : ids) EXPECT_TRUE(v.is_natural(id));
  EXPECT_EQ(v.decode(ids), v.piece(v.sentinel_id(0)));
}

TEST(VocabFile, SaveLoadRoundTrip) {
  const auto v = train_vocab(small_corpus(), 320, 7);
  std::stringstream buf;
  v.save(buf);
  const auto w = Vocabulary::load(buf);
  EXPECT_EQ(v.pieces(), w.pieces());
  EXPECT_EQ(w.num_sentinels(), 7);
}

TEST(VocabFile, RejectsCorruptHeaderAndCounts) {
  std::stringstream bad("not-a-vocab\n");
  EXPECT_THROW(Vocabulary::load(bad), DataError);
  const auto v = Vocabulary({"ab"}, 1);
  std::stringstream buf;
  v.save(buf);
  std::string text = buf.str();
  text.resize(text.rfind('\n', text.size() - 2) + 1);
  std::stringstream truncated(text);
  EXPECT_THROW(Vocabulary::load(truncated), DataError);
}

TEST(Vocabulary, RejectsDuplicatePieces) {
  EXPECT_THROW(Vocabulary({"ab", "ab"}, 0), DataError);
  EXPECT_THROW(Vocabulary({"a"}, 0), DataError);
}

TEST(Vocabulary, RenderUsesSentinelGlyphs) {
  const auto v = Vocabulary({"Thank", "you"}, 5);
  const TokenSequence ids{*v.find("Thank"), v.sentinel_id(0), *v.find("you"), v.sentinel_id(1),
                          v.sentinel_id(2), v.sentinel_id(3), Vocabulary::kMaskId};
  EXPECT_EQ(v.render(ids), "Thank <X> you <Y> <Z> <S3> <M>");
}

}  // namespace
}  // namespace t2t
