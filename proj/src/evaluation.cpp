#include "adms2s/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_map>

#include "adms2s/corpus.hpp"

namespace adms2s {

namespace {

// n-grams keyed as tokens joined with an unlikely separator byte.
std::unordered_map<std::string, std::size_t> ngram_counts(const std::vector<std::string>& tokens,
                                                          std::size_t order) {
  std::unordered_map<std::string, std::size_t> counts;
  if (tokens.size() < order) return counts;
  for (std::size_t i = 0; i + order <= tokens.size(); ++i) {
    std::string key = tokens[i];
    for (std::size_t j = 1; j < order; ++j) {
      key += '\x1f';
      key += tokens[i + j];
    }
    ++counts[key];
  }
  return counts;
}

std::string format2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string format6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

BleuSmoothing bleu_smoothing_from_string(const std::string& name) {
  if (name == "off") return BleuSmoothing::kOff;
  if (name == "add_one") return BleuSmoothing::kAddOne;
  throw ConfigError("unknown smoothing '" + name + "' (expected off or add_one)");
}

BleuReport corpus_bleu(const std::vector<std::vector<std::string>>& hypotheses,
                       const std::vector<std::vector<std::string>>& references,
                       std::size_t max_order, BleuSmoothing smoothing) {
  if (hypotheses.size() != references.size()) {
    throw DataError("corpus_bleu: " + std::to_string(hypotheses.size()) + " hypotheses vs " +
                    std::to_string(references.size()) + " references");
  }
  if (max_order == 0) throw ConfigError("corpus_bleu: max_order must be positive");

  BleuReport report;
  report.max_order = max_order;
  report.smoothing = smoothing;
  std::vector<std::size_t> matched(max_order, 0), total(max_order, 0);
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    report.hyp_tokens += hypotheses[s].size();
    report.ref_tokens += references[s].size();
    for (std::size_t n = 1; n <= max_order; ++n) {
      auto hyp_counts = ngram_counts(hypotheses[s], n);
      auto ref_counts = ngram_counts(references[s], n);
      for (const auto& [gram, count] : hyp_counts) {
        total[n - 1] += count;
        auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) matched[n - 1] += std::min(count, it->second);
      }
    }
  }

  report.precisions.resize(max_order, 0.0);
  double log_sum = 0.0;
  bool degenerate = false;
  for (std::size_t n = 1; n <= max_order; ++n) {
    double num = static_cast<double>(matched[n - 1]);
    double den = static_cast<double>(total[n - 1]);
    if (smoothing == BleuSmoothing::kAddOne && n > 1) {
      num += 1.0;
      den += 1.0;
    }
    const double p = den > 0.0 ? num / den : 0.0;
    report.precisions[n - 1] = p;
    if (p <= 0.0) {
      degenerate = true;
    } else {
      log_sum += std::log(p);
    }
  }

  const double h = static_cast<double>(report.hyp_tokens);
  const double r = static_cast<double>(report.ref_tokens);
  report.brevity_penalty = h < r ? std::exp(1.0 - r / std::max(h, 1.0)) : 1.0;
  report.bleu = degenerate
                    ? 0.0
                    : 100.0 * report.brevity_penalty *
                          std::exp(log_sum / static_cast<double>(max_order));
  return report;
}

BleuReport corpus_bleu_lines(const std::vector<std::string>& hypothesis_lines,
                             const std::vector<std::string>& reference_lines,
                             std::size_t max_order, BleuSmoothing smoothing) {
  std::vector<std::vector<std::string>> hyps, refs;
  hyps.reserve(hypothesis_lines.size());
  refs.reserve(reference_lines.size());
  for (const std::string& line : hypothesis_lines) hyps.push_back(tokenize(line));
  for (const std::string& line : reference_lines) refs.push_back(tokenize(line));
  return corpus_bleu(hyps, refs, max_order, smoothing);
}

std::string BleuReport::table() const {
  std::string out = "BLEU = " + format2(bleu) + "\n";
  for (std::size_t n = 1; n <= max_order; ++n) {
    out += "p" + std::to_string(n) + " = " + format6(precisions[n - 1]) + "\n";
  }
  out += "brevity_penalty = " + format6(brevity_penalty) + "\n";
  out += "hyp_tokens = " + std::to_string(hyp_tokens) + "\n";
  out += "ref_tokens = " + std::to_string(ref_tokens) + "\n";
  out += std::string("smoothing = ") + (smoothing == BleuSmoothing::kOff ? "off" : "add_one") +
         "\n";
  return out;
}

std::string BleuReport::fields() const {
  std::string out = "bleu=" + format2(bleu);
  for (std::size_t n = 1; n <= max_order; ++n) {
    out += " p" + std::to_string(n) + "=" + format6(precisions[n - 1]);
  }
  out += " brevity_penalty=" + format6(brevity_penalty);
  out += " hyp_tokens=" + std::to_string(hyp_tokens);
  out += " ref_tokens=" + std::to_string(ref_tokens);
  out += std::string(" smoothing=") + (smoothing == BleuSmoothing::kOff ? "off" : "add_one");
  out += "\n";
  return out;
}

FrequencyDeviationReport frequency_deviation(
    const std::vector<std::string>& training_target_lines,
    const std::vector<std::string>& reference_lines,
    const std::vector<std::string>& model_output_lines,
    const std::vector<std::pair<double, double>>& bands) {
  if (training_target_lines.empty() || reference_lines.empty() || model_output_lines.empty()) {
    throw EmptyInputError("frequency_deviation: empty input");
  }
  if (bands.empty()) throw ConfigError("frequency_deviation: no bands configured");
  for (const auto& [lo, hi] : bands) {
    if (lo < 0.0 || hi <= lo) throw ConfigError("frequency_deviation: bad band bounds");
  }

  std::unordered_map<std::string, long long> train_counts;
  long long train_total = 0;
  for (const std::string& line : training_target_lines) {
    for (const std::string& tok : tokenize(line)) {
      ++train_counts[tok];
      ++train_total;
    }
  }
  if (train_total == 0) throw EmptyInputError("frequency_deviation: training corpus has no tokens");

  // band index per word type, -1 = outside every band
  std::unordered_map<std::string, int> type_band;
  std::vector<std::size_t> band_types(bands.size(), 0);
  for (const auto& [tok, cnt] : train_counts) {
    const double pct = 100.0 * static_cast<double>(cnt) / static_cast<double>(train_total);
    int band = -1;
    for (std::size_t b = 0; b < bands.size(); ++b) {
      if (pct > bands[b].first && pct <= bands[b].second) {
        band = static_cast<int>(b);
        break;
      }
    }
    type_band[tok] = band;
    if (band >= 0) ++band_types[static_cast<std::size_t>(band)];
  }

  auto band_token_share = [&](const std::vector<std::string>& lines,
                              std::vector<double>& shares) -> void {
    std::vector<long long> in_band(bands.size(), 0);
    long long total = 0;
    for (const std::string& line : lines) {
      for (const std::string& tok : tokenize(line)) {
        ++total;
        auto it = type_band.find(tok);
        if (it != type_band.end() && it->second >= 0) {
          ++in_band[static_cast<std::size_t>(it->second)];
        }
      }
    }
    shares.assign(bands.size(), 0.0);
    if (total == 0) return;
    for (std::size_t b = 0; b < bands.size(); ++b) {
      shares[b] = 100.0 * static_cast<double>(in_band[b]) / static_cast<double>(total);
    }
  };

  std::vector<double> ref_share, model_share;
  band_token_share(reference_lines, ref_share);
  band_token_share(model_output_lines, model_share);

  FrequencyDeviationReport report;
  for (std::size_t b = 0; b < bands.size(); ++b) {
    FrequencyBand band;
    band.low_pct = bands[b].first;
    band.high_pct = bands[b].second;
    band.reference_pct = ref_share[b];
    band.model_pct = model_share[b];
    band.band_types = band_types[b];
    if (ref_share[b] > 0.0) {
      band.defined = true;
      band.deviation_pct = 100.0 * (model_share[b] - ref_share[b]) / ref_share[b];
    }
    report.bands.push_back(band);
  }
  return report;
}

std::string FrequencyDeviationReport::table() const {
  std::string out = "band_low%  band_high%  types  reference%  model%      deviation%\n";
  for (const FrequencyBand& band : bands) {
    char buf[160];
    if (band.defined) {
      std::snprintf(buf, sizeof(buf), "%-9.2f  %-10.2f  %-5zu  %-10.6f  %-10.6f  %.6f\n",
                    band.low_pct, band.high_pct, band.band_types, band.reference_pct,
                    band.model_pct, band.deviation_pct);
    } else {
      std::snprintf(buf, sizeof(buf), "%-9.2f  %-10.2f  %-5zu  %-10.6f  %-10.6f  undefined\n",
                    band.low_pct, band.high_pct, band.band_types, band.reference_pct,
                    band.model_pct);
    }
    out += buf;
  }
  return out;
}

std::string FrequencyDeviationReport::fields() const {
  std::string out;
  for (const FrequencyBand& band : bands) {
    out += "band_low=" + format2(band.low_pct);
    out += " band_high=" + format2(band.high_pct);
    out += " types=" + std::to_string(band.band_types);
    out += " reference=" + format6(band.reference_pct);
    out += " model=" + format6(band.model_pct);
    out += " deviation=" + (band.defined ? format6(band.deviation_pct) : std::string("undefined"));
    out += "\n";
  }
  return out;
}

}  // namespace adms2s
