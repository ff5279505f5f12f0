#include "t2t/decode.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <memory>

namespace t2t {
namespace {

Eigen::VectorXd log_softmax(const Eigen::VectorXd& logits) {
  const double mx = logits.maxCoeff();
  const double lse = mx + std::log((logits.array() - mx).exp().sum());
  return logits.array() - lse;
}

}  // namespace

double length_penalty(std::size_t len, double alpha) {
  return std::pow((5.0 + static_cast<double>(len)) / 6.0, alpha);
}

DecodeResult greedy_decode(const Scorer& scorer, std::size_t max_len, TokenId eos) {
  if (max_len < 1) throw ParameterError("greedy_decode: max_len must be at least 1");
  DecodeResult out;
  TokenSequence prefix;
  for (std::size_t step = 0; step < max_len; ++step) {
    const auto lp = log_softmax(scorer(prefix));
    Index best = 0;
    lp.maxCoeff(&best);
    out.log_prob += lp[best];
    if (static_cast<TokenId>(best) == eos) {
      out.finished = true;
      out.ids = prefix;
      out.score = out.log_prob;
      return out;
    }
    prefix.push_back(static_cast<TokenId>(best));
  }
  out.ids = prefix;
  out.score = out.log_prob;
  return out;
}

DecodeResult beam_decode(const Scorer& scorer, std::size_t beam_width, double alpha, std::size_t max_len,
                         TokenId eos) {
  if (beam_width < 1) throw ParameterError("beam_decode: beam_width must be at least 1");
  if (max_len < 1) throw ParameterError("beam_decode: max_len must be at least 1");
  if (beam_width == 1) return greedy_decode(scorer, max_len, eos);
  struct Candidate {
    double log_prob;
    std::size_t parent;
    TokenId token;
  };
  std::vector<BeamHypothesis> alive{BeamHypothesis{}};
  std::vector<BeamHypothesis> finished;
  double best_finished = -std::numeric_limits<double>::infinity();
  auto score = [&](const BeamHypothesis& h) { return h.log_prob / length_penalty(h.ids.size(), alpha); };

  for (std::size_t step = 0; step < max_len && !alive.empty(); ++step) {
    std::vector<Candidate> cands;
    for (std::size_t b = 0; b < alive.size(); ++b) {
      const auto lp = log_softmax(scorer(alive[b].ids));
      for (Index t = 0; t < lp.size(); ++t) {
        const Candidate c{alive[b].log_prob + lp[t], b, static_cast<TokenId>(t)};
        if (c.token != eos) {
          cands.push_back(c);
          continue;
        }
        BeamHypothesis h{alive[b].ids, c.log_prob, true};
        h.ids.push_back(eos);
        best_finished = std::max(best_finished, score(h));
        finished.push_back(std::move(h));
      }
    }
    const std::size_t keep = std::min(beam_width, cands.size());
    // Higher log-prob first, then earlier parent, then lower id.
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
                        if (a.parent != b.parent) return a.parent < b.parent;
                        return a.token < b.token;
                      });
    std::vector<BeamHypothesis> next;
    for (std::size_t i = 0; i < keep; ++i) {
      BeamHypothesis h{alive[cands[i].parent].ids, cands[i].log_prob, false};
      h.ids.push_back(cands[i].token);
      next.push_back(std::move(h));
    }
    alive = std::move(next);
    if (!finished.empty() && !alive.empty()) {
      // Log-probs only fall as tokens append and the penalty grows with
      // length, so max_len bounds every alive hypothesis from above.
      const double bound =
          alpha >= 0 ? alive.front().log_prob / length_penalty(max_len, alpha) : alive.front().log_prob;
      if (bound < best_finished) break;
    }
  }

  const auto& pool = finished.empty() ? alive : finished;
  const BeamHypothesis* best = nullptr;
  for (const auto& h : pool) {
    if (!best || score(h) > score(*best)) best = &h;
  }
  assert(best);
  for ([[maybe_unused]] const auto& h : finished) assert(score(*best) >= score(h));
  DecodeResult out;
  out.finished = best->finished;
  out.ids = best->ids;
  if (out.finished) out.ids.pop_back();
  out.log_prob = best->log_prob;
  out.score = score(*best);
  return out;
}

Eigen::VectorXd ensemble_logits(std::span<const Scorer> members, std::span<const TokenId> prefix) {
  if (members.empty()) throw ParameterError("ensemble: no members");
  Eigen::VectorXd total = members[0](prefix);
  for (std::size_t i = 1; i < members.size(); ++i) {
    const auto l = members[i](prefix);
    if (l.size() != total.size()) {
      throw ConfigError("ensemble: member " + std::to_string(i) + " has vocabulary size " + std::to_string(l.size()) +
                        ", expected " + std::to_string(total.size()));
    }
    total += l;
  }
  return total / static_cast<double>(members.size());
}

Scorer ensemble(std::vector<Scorer> members) {
  auto shared = std::make_shared<std::vector<Scorer>>(std::move(members));
  return [shared](std::span<const TokenId> prefix) { return ensemble_logits(*shared, prefix); };
}

template <typename Scalar>
Scorer model_scorer(const Transformer<Scalar>& model, TokenSequence input) {
  Tensor<Scalar> memory;
  if (model.has_encoder()) {
    NoGradGuard guard;
    memory = model.encoder_forward(input, {});
  }
  return [&model, input = std::move(input), memory](std::span<const TokenId> prefix) {
    NoGradGuard guard;
    TokenSequence ids{Vocabulary::kPadId};
    Index visible = 0;
    if (!model.has_encoder()) {
      ids.insert(ids.end(), input.begin(), input.end());
      if (model.config().architecture == Architecture::kPrefixLm) visible = static_cast<Index>(ids.size());
    }
    ids.insert(ids.end(), prefix.begin(), prefix.end());
    const auto n = static_cast<Index>(ids.size());
    const auto mask = build_mask({visible > 0 ? MaskKind::kCausalWithPrefix : MaskKind::kCausal, visible}, n);
    const auto logits = model.decoder_forward(ids, model.has_encoder() ? &memory : nullptr, mask, {});
    const Index v = logits.size(1);
    Eigen::VectorXd last(v);
    for (Index j = 0; j < v; ++j) last[j] = static_cast<double>(logits[(n - 1) * v + j]);
    return last;
  };
}

template <typename Scalar>
Scorer ensemble_scorer(const std::vector<const Transformer<Scalar>*>& models, const TokenSequence& input) {
  if (models.empty()) throw ParameterError("ensemble: no members");
  std::vector<Scorer> members;
  for (const auto* m : models) {
    if (m->config().vocab_size != models.front()->config().vocab_size) {
      throw ConfigError("ensemble: vocabulary sizes differ (" + std::to_string(m->config().vocab_size) + " vs " +
                        std::to_string(models.front()->config().vocab_size) + ")");
    }
    members.push_back(model_scorer(*m, input));
  }
  return ensemble(std::move(members));
}

template Scorer model_scorer(const Transformer<float>&, TokenSequence);
template Scorer model_scorer(const Transformer<double>&, TokenSequence);
template Scorer ensemble_scorer(const std::vector<const Transformer<float>*>&, const TokenSequence&);
template Scorer ensemble_scorer(const std::vector<const Transformer<double>*>&, const TokenSequence&);

}  // namespace t2t
