#pragma once

#include <string>
#include <vector>

#include "adms2s/errors.hpp"

namespace adms2s {

enum class BleuSmoothing { kOff, kAddOne };
BleuSmoothing bleu_smoothing_from_string(const std::string& name);

struct BleuReport {
  double bleu = 0.0;  // 0..100
  std::vector<double> precisions;  // modified n-gram precisions, order 1..max_order
  double brevity_penalty = 1.0;
  std::size_t hyp_tokens = 0;
  std::size_t ref_tokens = 0;
  std::size_t max_order = 4;
  BleuSmoothing smoothing = BleuSmoothing::kOff;

  std::string table() const;
  std::string fields() const;
};

// Corpus-level BLEU with clipped modified precisions, geometric mean over
// orders 1..max_order and the standard brevity penalty. One reference per
// hypothesis. With smoothing off, any vanished precision zeroes the score;
// add_one smoothing perturbs the counts of orders above 1.
BleuReport corpus_bleu(const std::vector<std::vector<std::string>>& hypotheses,
                       const std::vector<std::vector<std::string>>& references,
                       std::size_t max_order = 4, BleuSmoothing smoothing = BleuSmoothing::kOff);
BleuReport corpus_bleu_lines(const std::vector<std::string>& hypothesis_lines,
                             const std::vector<std::string>& reference_lines,
                             std::size_t max_order = 4,
                             BleuSmoothing smoothing = BleuSmoothing::kOff);

struct FrequencyBand {
  double low_pct = 0.0;   // exclusive
  double high_pct = 0.0;  // inclusive
  double reference_pct = 0.0;
  double model_pct = 0.0;
  double deviation_pct = 0.0;  // positive = model over-represents band words
  bool defined = false;        // false when the band has no reference tokens
  std::size_t band_types = 0;  // word types whose training frequency falls in the band
};

struct FrequencyDeviationReport {
  std::vector<FrequencyBand> bands;
  std::string table() const;
  std::string fields() const;
};

// Token-weighted representation of training-frequency bands in references
// vs model outputs. A word type belongs to band (low, high] when its
// relative frequency in the training target corpus, in percent, falls in
// that interval; types unseen in training belong to no band.
FrequencyDeviationReport frequency_deviation(const std::vector<std::string>& training_target_lines,
                                             const std::vector<std::string>& reference_lines,
                                             const std::vector<std::string>& model_output_lines,
                                             const std::vector<std::pair<double, double>>& bands);

inline std::vector<std::pair<double, double>> default_frequency_bands() { return {{0.0, 30.0}}; }

}  // namespace adms2s
