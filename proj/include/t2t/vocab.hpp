#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "t2t/errors.hpp"

namespace t2t {

using TokenId = std::int32_t;
using TokenSequence = std::vector<TokenId>;

/// Byte-level subword vocabulary.
///
/// Id layout (dense, 0..size-1):
///   0..3                       pad, end-of-sequence, unknown, mask
///   4..259                     the 256 single-byte pieces
///   260..size-num_sentinels-1  learned multi-byte pieces
///   size-num_sentinels..size-1 sentinels (<X>, <Y>, <Z>, ...)
///
/// Sentinels and specials never take part in encoding, so natural text can
/// never produce them.
class Vocabulary {
 public:
  static constexpr TokenId kPadId = 0;
  static constexpr TokenId kEosId = 1;
  static constexpr TokenId kUnkId = 2;
  static constexpr TokenId kMaskId = 3;
  static constexpr int kNumSpecials = 4;
  static constexpr TokenId kFirstByteId = kNumSpecials;
  static constexpr TokenId kFirstLearnedId = kFirstByteId + 256;

  /// `learned` are the multi-byte pieces in id order. Duplicates and pieces
  /// shorter than two bytes are rejected.
  Vocabulary(std::vector<std::string> learned, int num_sentinels);

  int size() const { return static_cast<int>(pieces_.size()); }
  int num_sentinels() const { return num_sentinels_; }
  int num_learned() const { return size() - kFirstLearnedId - num_sentinels_; }
  TokenId first_sentinel_id() const { return size() - num_sentinels_; }

  const std::string& piece(TokenId id) const;
  std::optional<TokenId> find(std::string_view piece) const;

  bool is_special(TokenId id) const { return id >= 0 && id < kNumSpecials; }
  bool is_sentinel(TokenId id) const { return id >= first_sentinel_id() && id < size(); }
  /// Ids that encode() can emit: byte and learned pieces.
  bool is_natural(TokenId id) const { return id >= kFirstByteId && id < first_sentinel_id(); }

  /// Id of the k-th sentinel (k=0 is <X>).
  TokenId sentinel_id(int k) const;
  /// Inverse of sentinel_id; -1 for non-sentinels.
  int sentinel_index(TokenId id) const { return is_sentinel(id) ? id - first_sentinel_id() : -1; }

  /// Greedy longest-match segmentation over natural pieces. Every byte has a
  /// piece, so unknown input is impossible.
  TokenSequence encode(std::string_view text) const;

  /// Concatenates natural pieces; pad and end-of-sequence are dropped, other
  /// specials and sentinels render as their piece strings.
  std::string decode(std::span<const TokenId> ids) const;

  /// Space-separated rendering with sentinel glyphs <X>, <Y>, <Z>, <S3>, ...
  /// and <M> for the mask token. Natural pieces are trimmed of surrounding spaces.
  std::string render(std::span<const TokenId> ids) const;

  static std::string sentinel_glyph(int k);

  void save(std::ostream& out) const;
  static Vocabulary load(std::istream& in);
  void save_file(const std::string& path) const;
  static Vocabulary load_file(const std::string& path);

  const std::vector<std::string>& pieces() const { return pieces_; }

 private:
  struct TrieNode {
    std::unordered_map<unsigned char, int> children;
    TokenId id = -1;
  };

  void build_index();

  std::vector<std::string> pieces_;
  int num_sentinels_;
  std::unordered_map<std::string, TokenId> piece_to_id_;
  std::vector<TrieNode> trie_;
};

/// Learns a byte-pair-merge vocabulary of exactly `target_size` entries.
///
/// Text is split into chunks at each whitespace byte that follows a
/// non-whitespace byte ("aaaa aaaa" -> "aaaa", " aaaa"); merges never cross
/// chunk boundaries. The most frequent adjacent pair is merged first; ties go
/// to the lexicographically smaller (left, right) piece pair.
Vocabulary train_vocab(std::span<const std::string> corpus, int target_size, int num_sentinels);

/// Merge pairs in the order train_vocab learned them, for inspection and tests.
std::vector<std::pair<std::string, std::string>> learn_merges(std::span<const std::string> corpus,
                                                              int num_new_pieces);

}  // namespace t2t
