#include "t2t/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>
#include <unordered_set>

namespace t2t {

namespace {

const char* const kSpecialPieces[Vocabulary::kNumSpecials] = {"<pad>", "</s>", "<unk>", "<mask>"};
constexpr std::string_view kFileMagic = "t2t-vocab";
constexpr int kFileVersion = 1;

std::string escape_piece(const std::string& piece) {
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned char c : piece) {
    if (c > 0x20 && c < 0x7f && c != '\\') {
      out.push_back(static_cast<char>(c));
    } else {
      out += "\\x";
      out.push_back(hex[c >> 4]);
      out.push_back(hex[c & 15]);
    }
  }
  return out;
}

std::string unescape_piece(const std::string& text) {
  std::string out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '\\') {
      if (i + 3 >= text.size()) {
        throw DataError("vocab file: truncated escape in '" + text + "'");
      }
      if (text[i + 1] != 'x') throw DataError("vocab file: bad escape in '" + text + "'");
      out.push_back(static_cast<char>(std::stoi(text.substr(i + 2, 2), nullptr, 16)));
      i += 3;
    } else {
      out.push_back(text[i]);
    }
  }
  return out;
}

bool is_space(unsigned char c) { return std::isspace(c) != 0; }

std::vector<std::string> split_chunks(const std::string& text) {
  std::vector<std::string> chunks;
  std::string current;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (is_space(c) && i > 0 && !is_space(static_cast<unsigned char>(text[i - 1])) && !current.empty()) {
      chunks.push_back(std::move(current));
      current.clear();
    }
    current.push_back(static_cast<char>(c));
  }
  if (!current.empty()) chunks.push_back(std::move(current));
  return chunks;
}

// Incremental byte-pair-merge learner over a table of unique chunks.
class MergeLearner {
 public:
  explicit MergeLearner(std::span<const std::string> corpus) {
    std::map<std::string, std::int64_t> counts;
    for (const auto& doc : corpus) {
      for (auto& chunk : split_chunks(doc)) ++counts[chunk];
    }
    symbols_.reserve(256);
    for (int b = 0; b < 256; ++b) symbols_.emplace_back(1, static_cast<char>(b));
    for (const auto& [chunk, count] : counts) {
      Word w;
      w.count = count;
      for (unsigned char c : chunk) w.symbols.push_back(c);
      words_.push_back(std::move(w));
    }
    for (std::size_t i = 0; i < words_.size(); ++i) add_word_pairs(i, +1);
  }

  bool empty_corpus() const { return words_.empty(); }

  // Performs the next merge; returns the (left, right) piece strings or
  // nullopt when no adjacent pair remains.
  std::optional<std::pair<std::string, std::string>> step() {
    if (ranking_.empty()) return std::nullopt;
    const auto [neg_count, left_str, right_str, pair] = *ranking_.begin();
    (void)neg_count;
    const std::string merged = left_str + right_str;
    int new_symbol;
    if (auto it = symbol_ids_.find(merged); it != symbol_ids_.end()) {
      new_symbol = it->second;
    } else {
      new_symbol = static_cast<int>(symbols_.size());
      symbols_.push_back(merged);
      symbol_ids_.emplace(merged, new_symbol);
    }
    const std::vector<std::size_t> affected(where_[pair].begin(), where_[pair].end());
    for (std::size_t wi : affected) {
      add_word_pairs(wi, -1);
      auto& syms = words_[wi].symbols;
      std::vector<int> next;
      next.reserve(syms.size());
      for (std::size_t i = 0; i < syms.size(); ++i) {
        if (i + 1 < syms.size() && syms[i] == pair.first && syms[i + 1] == pair.second) {
          next.push_back(new_symbol);
          ++i;
        } else {
          next.push_back(syms[i]);
        }
      }
      syms = std::move(next);
      add_word_pairs(wi, +1);
    }
    return std::make_pair(left_str, right_str);
  }

  const std::string& symbol(int id) const { return symbols_[static_cast<std::size_t>(id)]; }

 private:
  using Pair = std::pair<int, int>;
  struct Word {
    std::vector<int> symbols;
    std::int64_t count = 0;
  };
  using RankKey = std::tuple<std::int64_t, std::string, std::string, Pair>;

  void add_word_pairs(std::size_t wi, int sign) {
    const auto& w = words_[wi];
    for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i) {
      const Pair p{w.symbols[i], w.symbols[i + 1]};
      bump(p, sign * w.count);
      if (sign > 0) {
        where_[p].insert(wi);
      }
    }
    if (sign < 0) {
      for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i) {
        const Pair p{w.symbols[i], w.symbols[i + 1]};
        auto it = where_.find(p);
        if (it != where_.end()) it->second.erase(wi);
      }
    }
  }

  void bump(const Pair& p, std::int64_t delta) {
    std::int64_t& c = pair_counts_[p];
    if (c > 0) ranking_.erase(RankKey{-c, symbol(p.first), symbol(p.second), p});
    c += delta;
    if (c > 0) {
      ranking_.insert(RankKey{-c, symbol(p.first), symbol(p.second), p});
    } else {
      pair_counts_.erase(p);
    }
  }

  std::vector<std::string> symbols_;
  std::map<std::string, int> symbol_ids_;
  std::vector<Word> words_;
  std::map<Pair, std::int64_t> pair_counts_;
  std::map<Pair, std::set<std::size_t>> where_;
  std::set<RankKey> ranking_;
};

}  // namespace

Vocabulary::Vocabulary(std::vector<std::string> learned, int num_sentinels) : num_sentinels_(num_sentinels) {
  if (num_sentinels < 0) throw ParameterError("vocab: negative sentinel count");
  pieces_.reserve(kFirstLearnedId + learned.size() + static_cast<std::size_t>(num_sentinels));
  for (const char* s : kSpecialPieces) pieces_.emplace_back(s);
  for (int b = 0; b < 256; ++b) pieces_.emplace_back(1, static_cast<char>(b));
  for (auto& p : learned) {
    if (p.size() < 2) throw DataError("vocab: learned piece '" + escape_piece(p) + "' is shorter than two bytes");
    pieces_.push_back(std::move(p));
  }
  for (int k = 0; k < num_sentinels; ++k) pieces_.push_back("<extra_id_" + std::to_string(k) + ">");
  build_index();
}

void Vocabulary::build_index() {
  piece_to_id_.clear();
  trie_.assign(1, TrieNode{});
  for (TokenId id = kFirstByteId; id < first_sentinel_id(); ++id) {
    const std::string& p = pieces_[static_cast<std::size_t>(id)];
    if (!piece_to_id_.emplace(p, id).second) {
      throw DataError("vocab: duplicate piece '" + escape_piece(p) + "'");
    }
    int node = 0;
    for (unsigned char c : p) {
      auto it = trie_[static_cast<std::size_t>(node)].children.find(c);
      if (it == trie_[static_cast<std::size_t>(node)].children.end()) {
        trie_.push_back(TrieNode{});
        const int child = static_cast<int>(trie_.size()) - 1;
        trie_[static_cast<std::size_t>(node)].children.emplace(c, child);
        node = child;
      } else {
        node = it->second;
      }
    }
    trie_[static_cast<std::size_t>(node)].id = id;
  }
}

const std::string& Vocabulary::piece(TokenId id) const {
  if (id < 0 || id >= size()) {
    throw IndexError("vocab: id " + std::to_string(id) + " outside vocabulary of " + std::to_string(size()));
  }
  return pieces_[static_cast<std::size_t>(id)];
}

std::optional<TokenId> Vocabulary::find(std::string_view piece) const {
  auto it = piece_to_id_.find(std::string(piece));
  if (it == piece_to_id_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocabulary::sentinel_id(int k) const {
  if (k < 0 || k >= num_sentinels_) {
    throw ParameterError("vocab: sentinel " + std::to_string(k) + " out of range (have " +
                         std::to_string(num_sentinels_) + ")");
  }
  return first_sentinel_id() + k;
}

TokenSequence Vocabulary::encode(std::string_view text) const {
  TokenSequence out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    int node = 0;
    TokenId best = -1;
    std::size_t best_len = 0;
    for (std::size_t i = pos; i < text.size(); ++i) {
      const auto& children = trie_[static_cast<std::size_t>(node)].children;
      auto it = children.find(static_cast<unsigned char>(text[i]));
      if (it == children.end()) break;
      node = it->second;
      if (trie_[static_cast<std::size_t>(node)].id >= 0) {
        best = trie_[static_cast<std::size_t>(node)].id;
        best_len = i - pos + 1;
      }
    }
    // Single bytes are always present, so best is set.
    out.push_back(best);
    pos += best_len;
  }
  return out;
}

std::string Vocabulary::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (id == kPadId || id == kEosId) continue;
    out += piece(id);
  }
  return out;
}

std::string Vocabulary::sentinel_glyph(int k) {
  static const char* named[] = {"<X>", "<Y>", "<Z>"};
  if (k >= 0 && k < 3) return named[k];
  return "<S" + std::to_string(k) + ">";
}

std::string Vocabulary::render(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    std::string text;
    if (id == kMaskId) {
      text = "<M>";
    } else if (is_sentinel(id)) {
      text = sentinel_glyph(sentinel_index(id));
    } else if (is_special(id)) {
      text = piece(id);
    } else {
      text = piece(id);
      const auto b = text.find_first_not_of(' ');
      const auto e = text.find_last_not_of(' ');
      text = b == std::string::npos ? std::string() : text.substr(b, e - b + 1);
    }
    if (!out.empty()) out.push_back(' ');
    out += text;
  }
  return out;
}

void Vocabulary::save(std::ostream& out) const {
  out << kFileMagic << " v" << kFileVersion << " size=" << size() << " specials=" << kNumSpecials
      << " learned=" << num_learned() << " sentinels=" << num_sentinels_ << '\n';
  for (const auto& p : pieces_) out << escape_piece(p) << '\n';
}

Vocabulary Vocabulary::load(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw DataError("vocab file: missing header");
  std::istringstream hs(header);
  std::string magic, version;
  hs >> magic >> version;
  if (magic != kFileMagic || version != "v" + std::to_string(kFileVersion)) {
    throw DataError("vocab file: unrecognized header '" + header + "'");
  }
  std::map<std::string, int> fields;
  std::string kv;
  while (hs >> kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw DataError("vocab file: bad header field '" + kv + "'");
    fields[kv.substr(0, eq)] = std::stoi(kv.substr(eq + 1));
  }
  for (const char* key : {"size", "specials", "learned", "sentinels"}) {
    if (!fields.count(key)) throw DataError(std::string("vocab file: header lacks ") + key);
  }
  if (fields["specials"] != kNumSpecials ||
      fields["size"] != kFirstLearnedId + fields["learned"] + fields["sentinels"]) {
    throw DataError("vocab file: inconsistent header counts");
  }
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(unescape_piece(line));
  if (static_cast<int>(lines.size()) != fields["size"]) {
    throw DataError("vocab file: expected " + std::to_string(fields["size"]) + " pieces, found " +
                    std::to_string(lines.size()));
  }
  for (int b = 0; b < 256; ++b) {
    if (lines[static_cast<std::size_t>(kFirstByteId + b)] != std::string(1, static_cast<char>(b))) {
      throw DataError("vocab file: byte piece " + std::to_string(b) + " is corrupt");
    }
  }
  std::vector<std::string> learned(lines.begin() + kFirstLearnedId,
                                   lines.begin() + kFirstLearnedId + fields["learned"]);
  return Vocabulary(std::move(learned), fields["sentinels"]);
}

void Vocabulary::save_file(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("vocab: cannot write '" + path + "'");
  save(out);
}

Vocabulary Vocabulary::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("vocab: cannot read '" + path + "'");
  return load(in);
}

std::vector<std::pair<std::string, std::string>> learn_merges(std::span<const std::string> corpus,
                                                              int num_new_pieces) {
  MergeLearner learner(corpus);
  if (learner.empty_corpus()) throw DataError("train_vocab: empty corpus");
  std::vector<std::pair<std::string, std::string>> merges;
  std::unordered_set<std::string> seen;
  while (static_cast<int>(seen.size()) < num_new_pieces) {
    auto merge = learner.step();
    if (!merge) {
      throw DataError("train_vocab: corpus supports only " + std::to_string(seen.size()) + " of " +
                      std::to_string(num_new_pieces) + " learned pieces");
    }
    seen.insert(merge->first + merge->second);
    merges.push_back(std::move(*merge));
  }
  return merges;
}

Vocabulary train_vocab(std::span<const std::string> corpus, int target_size, int num_sentinels) {
  const int fixed = Vocabulary::kFirstLearnedId + num_sentinels;
  if (num_sentinels < 0 || target_size <= fixed) {
    throw ParameterError("train_vocab: target size " + std::to_string(target_size) + " must exceed " +
                         std::to_string(fixed) + " (specials + bytes + sentinels)");
  }
  bool any = false;
  for (const auto& doc : corpus) any = any || !doc.empty();
  if (!any) throw DataError("train_vocab: empty corpus");
  const auto merges = learn_merges(corpus, target_size - fixed);
  std::vector<std::string> learned;
  std::unordered_set<std::string> seen;
  for (const auto& [l, r] : merges) {
    if (seen.insert(l + r).second) learned.push_back(l + r);
  }
  return Vocabulary(std::move(learned), num_sentinels);
}

}  // namespace t2t
