#include "adms2s/decoding.hpp"

#include <algorithm>

namespace adms2s {

namespace {

// Higher normalized score first; on exact ties, the lexicographically
// smaller token sequence (a prefix sorts before its extensions).
bool better(const BeamHypothesis& a, const BeamHypothesis& b) {
  const double sa = a.normalized_score(), sb = b.normalized_score();
  if (sa != sb) return sa > sb;
  return std::lexicographical_compare(a.tokens.begin(), a.tokens.end(), b.tokens.begin(),
                                      b.tokens.end());
}

}  // namespace

BeamResult beam_decode(const BeamScorer& scorer, int bos, int eos, std::size_t beam_width,
                       std::size_t max_len) {
  if (beam_width < 1) throw ConfigError("beam_decode: beam_width must be at least 1");
  if (max_len < 1) throw ConfigError("beam_decode: max_len must be at least 1");
  const std::size_t vocab = scorer.vocab_size();

  BeamHypothesis root;
  root.state = scorer.begin();
  std::vector<BeamHypothesis> beam = {root};

  for (std::size_t step = 0; step < max_len; ++step) {
    bool any_live = false;
    std::vector<BeamHypothesis> pool;
    for (const BeamHypothesis& hyp : beam) {
      if (hyp.finished) {
        pool.push_back(hyp);
        continue;
      }
      any_live = true;
      const int prev = hyp.tokens.empty() ? bos : hyp.tokens.back();
      auto [log_probs, next_state] = scorer.step(hyp.state, prev);
      for (std::size_t v = 0; v < vocab; ++v) {
        BeamHypothesis ext;
        ext.tokens = hyp.tokens;
        ext.tokens.push_back(static_cast<int>(v));
        ext.log_prob = hyp.log_prob + log_probs[v];
        ext.state = next_state;
        ext.finished = static_cast<int>(v) == eos;
        pool.push_back(std::move(ext));
      }
    }
    if (!any_live) break;
    std::sort(pool.begin(), pool.end(), better);
    if (pool.size() > beam_width) pool.resize(beam_width);
    beam = std::move(pool);
  }

  std::sort(beam.begin(), beam.end(), better);
  BeamResult result;
  result.beam = beam;
  result.best = beam.front();
  for (const BeamHypothesis& hyp : beam) {
    if (hyp.finished) {
      result.best = hyp;
      break;
    }
  }
  return result;
}

}  // namespace adms2s
