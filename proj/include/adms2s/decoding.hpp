#pragma once

#include <any>
#include <cstddef>
#include <utility>
#include <vector>

#include "adms2s/errors.hpp"

namespace adms2s {

// Partial target sequence under beam search. log_prob is the exact sum of
// the chosen per-step log-probabilities; a finished hypothesis (one that
// emitted the end sentinel) is never extended again.
struct BeamHypothesis {
  std::vector<int> tokens;  // generated tokens, end sentinel included when finished
  double log_prob = 0.0;
  std::any state;  // decoder state after consuming all tokens
  bool finished = false;
  double normalized_score() const {
    return tokens.empty() ? 0.0 : log_prob / static_cast<double>(tokens.size());
  }
};

// One-step decoder abstraction: begin() yields the state before any target
// token; step() consumes the previous token and returns the next-token
// log-probabilities together with the advanced state.
class BeamScorer {
 public:
  virtual ~BeamScorer() = default;
  virtual std::size_t vocab_size() const = 0;
  virtual std::any begin() const = 0;
  virtual std::pair<std::vector<double>, std::any> step(const std::any& state,
                                                        int prev_token) const = 0;
};

struct BeamResult {
  BeamHypothesis best;
  std::vector<BeamHypothesis> beam;  // final beam, best first
};

// Standard beam search ranked by length-normalized score. Finished
// hypotheses stay in the beam and compete with live ones; ties resolve to
// the lexicographically smaller token sequence (lower token index first,
// then the shorter sequence). Returns the best finished hypothesis when one
// exists, the best unfinished one otherwise.
BeamResult beam_decode(const BeamScorer& scorer, int bos, int eos, std::size_t beam_width,
                       std::size_t max_len);

}  // namespace adms2s
