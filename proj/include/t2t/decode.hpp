#pragma once

#include <Eigen/Dense>

#include <functional>
#include <span>
#include <vector>

#include "t2t/model.hpp"
#include "t2t/vocab.hpp"

namespace t2t {

/// Next-token logits given the tokens decoded so far.
using Scorer = std::function<Eigen::VectorXd(std::span<const TokenId> prefix)>;

struct BeamHypothesis {
  TokenSequence ids;  // ends with eos when finished
  double log_prob = 0;
  bool finished = false;
};

struct DecodeResult {
  TokenSequence ids;  // without the final eos
  double log_prob = 0;
  double score = 0;
  /// False when no hypothesis emitted eos within max_len.
  bool finished = false;
};

/// ((5 + len) / 6)^alpha.
double length_penalty(std::size_t len, double alpha);

/// Argmax each step (ties to the lowest id) until eos or max_len tokens.
DecodeResult greedy_decode(const Scorer& scorer, std::size_t max_len, TokenId eos = Vocabulary::kEosId);

/// Beam search ranked by log_prob / length_penalty(len), len counting the
/// eos. Every step scores the eos completion of each alive hypothesis as a
/// finished candidate and keeps the top beam_width non-eos expansions alive.
/// Search stops when no alive hypothesis can still beat the best finished
/// score, or at max_len. A width-1 beam is greedy decoding.
DecodeResult beam_decode(const Scorer& scorer, std::size_t beam_width, double alpha, std::size_t max_len,
                         TokenId eos = Vocabulary::kEosId);

/// Mean of the members' logits. ConfigError when sizes differ.
Eigen::VectorXd ensemble_logits(std::span<const Scorer> members, std::span<const TokenId> prefix);
Scorer ensemble(std::vector<Scorer> members);

/// Scores continuations of `input` with a full forward pass per call.
/// Encoder architectures encode `input` once; single-stack models see
/// [pad] + input + prefix with the input as a visible prefix (prefix_lm) or
/// causally (decoder_lm).
template <typename Scalar>
Scorer model_scorer(const Transformer<Scalar>& model, TokenSequence input);

/// ConfigError unless every model has the same vocabulary size.
template <typename Scalar>
Scorer ensemble_scorer(const std::vector<const Transformer<Scalar>*>& models, const TokenSequence& input);

template <typename Scalar>
DecodeResult greedy_decode(const Transformer<Scalar>& model, const TokenSequence& input, std::size_t max_len) {
  return greedy_decode(model_scorer(model, input), max_len);
}

template <typename Scalar>
DecodeResult beam_decode(const Transformer<Scalar>& model, const TokenSequence& input, std::size_t beam_width,
                         double alpha, std::size_t max_len) {
  return beam_decode(model_scorer(model, input), beam_width, alpha, max_len);
}

}  // namespace t2t
