#include "t2t/synthetic.hpp"

#include <algorithm>

#include "t2t/errors.hpp"

namespace t2t {
namespace {

constexpr int kSuccessors = 6;
constexpr int kTopicWords = 8;
constexpr double kTopicRate = 0.9;
constexpr std::uint64_t kSuccessorPurpose = 0x5ecc;
constexpr std::uint64_t kCorpusPurpose = 0xc0de;
constexpr std::uint64_t kExamplePurpose = 0xe8a3;

std::vector<std::string> synthetic_pieces(int vocab_size, int num_sentinels) {
  const int learned = vocab_size - Vocabulary::kFirstLearnedId - num_sentinels;
  if (learned < 19) throw ParameterError("synthetic: vocab_size " + std::to_string(vocab_size) + " is too small");
  std::vector<std::string> pieces{"copy:", "reverse:", "add:"};
  for (int i = 0; pieces.size() < static_cast<std::size_t>(learned); ++i) pieces.push_back("w" + std::to_string(i));
  return pieces;
}

TokenId byte_id(char c) { return Vocabulary::kFirstByteId + static_cast<unsigned char>(c); }

}  // namespace

std::string to_string(SyntheticTask task) {
  switch (task) {
    case SyntheticTask::kCopy: return "copy";
    case SyntheticTask::kReverse: return "reverse";
    case SyntheticTask::kArithmetic: return "arithmetic";
  }
  return "unknown";
}

SyntheticTask parse_synthetic_task(const std::string& name) {
  for (auto t : {SyntheticTask::kCopy, SyntheticTask::kReverse, SyntheticTask::kArithmetic}) {
    if (to_string(t) == name) return t;
  }
  throw ParameterError("synthetic: unknown task '" + name + "'");
}

SyntheticLanguage::SyntheticLanguage(int vocab_size, int num_sentinels, std::uint64_t seed)
    : vocab_(synthetic_pieces(vocab_size, num_sentinels), num_sentinels) {
  copy_id_ = *vocab_.find("copy:");
  reverse_id_ = *vocab_.find("reverse:");
  add_id_ = *vocab_.find("add:");
  plus_id_ = byte_id('+');
  equals_id_ = byte_id('=');
  for (TokenId id = add_id_ + 1; id < vocab_.first_sentinel_id(); ++id) words_.push_back(id);
  double total = 0;
  for (std::size_t r = 0; r < words_.size(); ++r) {
    total += 1.0 / static_cast<double>(r + 1);
    zipf_cdf_.push_back(total);
  }
  for (auto& c : zipf_cdf_) c /= total;
  Rng rng(seed, kSuccessorPurpose);
  successors_.resize(words_.size());
  for (auto& s : successors_) {
    for (int k = 0; k < kSuccessors; ++k) s.push_back(word(rng));
  }
}

TokenId SyntheticLanguage::word(Rng& rng) const {
  const auto it = std::upper_bound(zipf_cdf_.begin(), zipf_cdf_.end(), rng.uniform());
  const auto r = std::min<std::size_t>(static_cast<std::size_t>(it - zipf_cdf_.begin()), words_.size() - 1);
  return words_[r];
}

TokenSequence SyntheticLanguage::number(int n) const {
  TokenSequence out;
  for (char c : std::to_string(n)) out.push_back(byte_id(c));
  return out;
}

TokenSequence SyntheticLanguage::phrase(Rng& rng, std::size_t len, std::span<const TokenId> topic) const {
  TokenSequence s;
  while (s.size() < len) {
    if (!topic.empty() && rng.bernoulli(kTopicRate)) {
      s.push_back(topic[rng.uniform_int(topic.size())]);
    } else if (!s.empty() && rng.bernoulli(0.7)) {
      s.push_back(successors_[static_cast<std::size_t>(s.back() - words_.front())][rng.uniform_int(kSuccessors)]);
    } else {
      s.push_back(word(rng));
    }
  }
  return s;
}

TokenSequence SyntheticLanguage::document(Rng& rng, std::size_t min_len) const {
  TokenSequence doc, topic;
  for (int i = 0; i < kTopicWords; ++i) topic.push_back(word(rng));
  std::vector<TokenSequence> sentences;
  while (doc.size() < min_len) {
    TokenSequence s;
    const double kind = rng.uniform();
    if (kind < 0.15 && !sentences.empty()) {
      s = sentences[rng.uniform_int(sentences.size())];
    } else if (kind < 0.35) {
      const int a = static_cast<int>(rng.uniform_int(50)), b = static_cast<int>(rng.uniform_int(50));
      s = number(a);
      s.push_back(plus_id_);
      for (auto t : number(b)) s.push_back(t);
      s.push_back(equals_id_);
      for (auto t : number(a + b)) s.push_back(t);
    } else {
      s = phrase(rng, 3 + rng.uniform_int(5), topic);
      const double echo = rng.uniform();
      if (echo < 0.3) {
        const TokenSequence copy = s;
        s.push_back(byte_id(':'));
        s.insert(s.end(), copy.begin(), copy.end());
      } else if (echo < 0.55) {
        const TokenSequence copy = s;
        s.push_back(byte_id('~'));
        s.insert(s.end(), copy.rbegin(), copy.rend());
      }
    }
    s.push_back(byte_id('.'));
    doc.insert(doc.end(), s.begin(), s.end());
    sentences.push_back(std::move(s));
  }
  return doc;
}

std::vector<TokenSequence> SyntheticLanguage::corpus(std::size_t num_documents, std::size_t min_len,
                                                     std::uint64_t seed) const {
  std::vector<TokenSequence> docs;
  docs.reserve(num_documents);
  for (std::size_t i = 0; i < num_documents; ++i) {
    Rng rng(seed, Rng::derive_stream(kCorpusPurpose, i));
    docs.push_back(document(rng, min_len));
  }
  return docs;
}

CorruptionPair SyntheticLanguage::example(SyntheticTask task, Rng& rng) const {
  CorruptionPair out;
  if (task == SyntheticTask::kArithmetic) {
    const int a = static_cast<int>(rng.uniform_int(50)), b = static_cast<int>(rng.uniform_int(50));
    out.input_ids.push_back(add_id_);
    for (auto t : number(a)) out.input_ids.push_back(t);
    out.input_ids.push_back(plus_id_);
    for (auto t : number(b)) out.input_ids.push_back(t);
    out.target_ids = number(a + b);
    out.target_ids.push_back(Vocabulary::kEosId);
    return out;
  }
  const auto len = 3 + rng.uniform_int(4);
  for (std::uint64_t i = 0; i < len; ++i) out.target_ids.push_back(word(rng));
  out.input_ids.push_back(task == SyntheticTask::kCopy ? copy_id_ : reverse_id_);
  out.input_ids.insert(out.input_ids.end(), out.target_ids.begin(), out.target_ids.end());
  if (task == SyntheticTask::kReverse) std::reverse(out.target_ids.begin(), out.target_ids.end());
  out.target_ids.push_back(Vocabulary::kEosId);
  return out;
}

CorruptionPair SyntheticLanguage::example(SyntheticTask task, std::uint64_t seed, std::uint64_t index) const {
  Rng rng(seed, Rng::derive_stream(kExamplePurpose + static_cast<std::uint64_t>(task), index));
  return example(task, rng);
}

}  // namespace t2t
