#include "adms2s/attention.hpp"

#include <cmath>

namespace adms2s {

AttentionKind attention_kind_from_string(std::string_view name) {
  if (name == "sa" || name == "soft") return AttentionKind::kSoft;
  if (name == "mqt") return AttentionKind::kMqt;
  if (name == "aqt") return AttentionKind::kAqt;
  throw ConfigError("unknown attention kind '" + std::string(name) + "' (expected sa, mqt or aqt)");
}

std::string to_string(AttentionKind kind) {
  switch (kind) {
    case AttentionKind::kSoft: return "sa";
    case AttentionKind::kMqt: return "mqt";
    case AttentionKind::kAqt: return "aqt";
  }
  return "sa";
}

AttentionParams::AttentionParams(AttentionKind kind_, std::size_t state_dim,
                                 std::size_t memory_dim, std::size_t inner_dim, SplitMix64& rng,
                                 bool project_state, ScorerKind scorer_)
    : kind(kind_), scorer(scorer_) {
  const bool dims_agree = state_dim == memory_dim;
  if (scorer == ScorerKind::kAdditive) {
    w_state = Tensor::param({inner_dim, state_dim}, rng);
    w_memory = Tensor::param({inner_dim, memory_dim}, rng);
    score_vec = Tensor::param({inner_dim}, rng);
    bias = Tensor::param({inner_dim}, rng, 0.0, 0.0);
  } else if (!dims_agree && !project_state) {
    throw ConfigError("attention: the dot scorer needs state dim " + std::to_string(state_dim) +
                      " to equal encoding dim " + std::to_string(memory_dim) +
                      " (or an explicit state projection)");
  }
  if (kind != AttentionKind::kSoft && !dims_agree && !project_state) {
    throw ConfigError("attention: pair scoring needs state dim " + std::to_string(state_dim) +
                      " to equal encoding dim " + std::to_string(memory_dim) +
                      " (or an explicit state projection)");
  }
  if (project_state) state_projection = Tensor::param({memory_dim, state_dim}, rng);
  if (kind == AttentionKind::kMqt) {
    pair_weight = Tensor::param({1}, rng);
  } else if (kind == AttentionKind::kAqt) {
    pair_weight = Tensor::param({memory_dim}, rng);
  }
}

std::vector<Tensor> AttentionParams::parameters() const {
  std::vector<Tensor> out;
  if (w_state.defined()) {
    out.insert(out.end(), {w_state, w_memory, score_vec, bias});
  }
  if (state_projection.defined()) out.push_back(state_projection);
  if (pair_weight.defined()) out.push_back(pair_weight);
  return out;
}

Tensor AttentionParams::attended_state(const Tensor& state) const {
  return state_projection.defined() ? matvec(state_projection, state) : state;
}

std::size_t pair_count(std::size_t n) { return n * (n + 1) / 2; }

std::size_t pair_index(std::size_t j, std::size_t k, std::size_t n) {
  if (j > k) std::swap(j, k);
  if (k >= n) throw IndexError("pair_index: position out of range");
  return j * n - j * (j - 1) / 2 + (k - j);
}

double PairTensor::value(std::size_t j, std::size_t k, std::size_t d) const {
  return packed.at(pair_index(j, k, n), d);
}

Tensor memory_projection(const EncodedSource& source, const AttentionParams& params) {
  if (!params.w_memory.defined()) {
    throw ConfigError("attention: the memory projection belongs to the additive scorer");
  }
  return matmul(params.w_memory, source.states);
}

Tensor additive_scores_cached(const Tensor& state, const EncodedSource& source,
                              const AttentionParams& params, const Tensor& memory_proj) {
  Tensor state_part = add(matvec(params.w_state, state), params.bias);
  Tensor combined = tanh_ew(add_to_columns(memory_proj, state_part));
  Tensor scores = tmatvec(combined, params.score_vec);
  return mask_surrogate(scores, source.mask);
}

Tensor additive_scores(const Tensor& state, const EncodedSource& source,
                       const AttentionParams& params) {
  return additive_scores_cached(state, source, params, memory_projection(source, params));
}

Tensor dot_scores(const Tensor& state, const EncodedSource& source,
                  const AttentionParams& params) {
  Tensor query = params.attended_state(state);
  if (query.size() != source.states.dim(0)) {
    throw ShapeError("dot_scores: state length " + std::to_string(query.size()) +
                     " vs encoding dim " + std::to_string(source.states.dim(0)));
  }
  return mask_surrogate(tmatvec(source.states, query), source.mask);
}

Tensor alignment_scores(const Tensor& state, const EncodedSource& source,
                        const AttentionParams& params) {
  return params.scorer == ScorerKind::kAdditive ? additive_scores(state, source, params)
                                                : dot_scores(state, source, params);
}

std::pair<Tensor, Tensor> soft_attention_context(const Tensor& state, const EncodedSource& source,
                                                 const AttentionParams& params) {
  Tensor scores = alignment_scores(state, source, params);
  Tensor weights = softmax_masked(scores, source.mask);
  Tensor context = matvec(source.states, weights);
  return {context, weights};
}

PairTensor build_pair_tensor(const EncodedSource& source) {
  const std::size_t n = source.length();
  if (n == 0) throw EmptyInputError("build_pair_tensor: empty source");
  const std::size_t d = source.states.dim(0);
  const std::size_t p_total = pair_count(n);
  const Tensor h = source.states;

  Tensor packed({p_total, d});
  {
    double* out = packed.data();
    const double* hv = h.data();
    std::size_t p = 0;
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t k = j; k < n; ++k, ++p) {
        double* row = out + p * d;
        for (std::size_t e = 0; e < d; ++e) row[e] = std::tanh(hv[e * n + j] + hv[e * n + k]);
      }
    }
  }
  if (Tape::current() != nullptr && h.requires_grad()) {
    packed.set_requires_grad(true);
    Tape::current()->record([h, packed, n, d]() mutable {
      const double* go = packed.grad_data();
      if (!go) return;
      auto& gh = h.grad();
      std::size_t p = 0;
      for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = j; k < n; ++k, ++p) {
          const double* row_y = packed.data() + p * d;
          const double* row_g = go + p * d;
          for (std::size_t e = 0; e < d; ++e) {
            const double g = (1.0 - row_y[e] * row_y[e]) * row_g[e];
            gh[e * n + j] += g;
            gh[e * n + k] += g;
          }
        }
      }
    });
  }
  PairTensor out;
  out.packed = packed;
  out.n = n;
  out.dim = d;
  return out;
}

namespace {

void check_pair_state(const PairTensor& pair, const Tensor& state, const char* op) {
  if (state.size() != pair.dim) {
    throw ShapeError(std::string(op) + ": state length " + std::to_string(state.size()) +
                     " vs pair feature dim " + std::to_string(pair.dim));
  }
}

}  // namespace

Tensor mqt_offdiagonals(const PairTensor& pair, const Tensor& state, const Tensor& weight_scalar) {
  check_pair_state(pair, state, "mqt_offdiagonals");
  return scale_by(matvec(pair.packed, state), weight_scalar);
}

Tensor aqt_offdiagonals(const PairTensor& pair, const Tensor& state, const Tensor& weight_vec) {
  check_pair_state(pair, state, "aqt_offdiagonals");
  if (weight_vec.size() != pair.dim) {
    throw ShapeError("aqt_offdiagonals: weight length mismatch");
  }
  return matvec(tanh_ew(add_to_rows(pair.packed, state)), weight_vec);
}

double AttentionDensityMatrix::psi(std::size_t j, std::size_t k) const {
  if (j >= n || k >= n) throw IndexError("psi: position out of range");
  if (j == k) return diag.at(j);
  return pair_scores.at(pair_index(j, k, n));
}

std::vector<double> AttentionDensityMatrix::dense() const {
  std::vector<double> out(n * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t k = 0; k < n; ++k) out[j * n + k] = psi(j, k);
  return out;
}

AttentionDensityMatrix build_adm(const Tensor& diag_scores, const Tensor& pair_scores,
                                 std::vector<std::uint8_t> mask) {
  const std::size_t n = diag_scores.size();
  if (pair_scores.size() != pair_count(n)) {
    throw ShapeError("build_adm: diag length " + std::to_string(n) + " needs " +
                     std::to_string(pair_count(n)) + " packed pair scores, got " +
                     std::to_string(pair_scores.size()));
  }
  if (mask.size() != n) throw ShapeError("build_adm: mask length mismatch");
  AttentionDensityMatrix adm;
  adm.diag = diag_scores;
  adm.pair_scores = pair_scores;
  adm.mask = std::move(mask);
  adm.n = n;
  return adm;
}

Tensor pair_column_sums(const Tensor& pair_scores, const std::vector<std::uint8_t>& mask) {
  const std::size_t n = mask.size();
  if (pair_scores.size() != pair_count(n)) {
    throw ShapeError("pair_column_sums: packed length mismatch");
  }
  Tensor out({n});
  for (std::size_t j = 0; j < n; ++j) {
    if (!mask[j]) continue;
    for (std::size_t k = j + 1; k < n; ++k) {
      if (!mask[k]) continue;
      const double v = pair_scores.at(pair_index(j, k, n));
      out.data()[k] += v;
      out.data()[j] += v;
    }
  }
  if (Tape::current() != nullptr && pair_scores.requires_grad()) {
    out.set_requires_grad(true);
    Tensor scores = pair_scores;
    std::vector<std::uint8_t> m = mask;
    Tape::current()->record([scores, out, m, n]() mutable {
      const double* go = out.grad_data();
      if (!go) return;
      auto& gs = scores.grad();
      for (std::size_t j = 0; j < n; ++j) {
        if (!m[j]) continue;
        for (std::size_t k = j + 1; k < n; ++k) {
          if (!m[k]) continue;
          gs[pair_index(j, k, n)] += go[k] + go[j];
        }
      }
    });
  }
  return out;
}

std::pair<Tensor, Tensor> adm_context(const AttentionDensityMatrix& adm,
                                      const EncodedSource& source) {
  if (adm.n != source.length()) throw ShapeError("adm_context: length mismatch with source");
  if (adm.mask != source.mask) throw ShapeError("adm_context: mask mismatch with source");
  const std::size_t n_valid = source.valid_count();
  if (n_valid == 0) throw MaskError("adm_context: all positions masked");
  Tensor column_means =
      scale(add(adm.diag, pair_column_sums(adm.pair_scores, adm.mask)), 1.0 / double(n_valid));
  Tensor weights = softmax_masked(column_means, adm.mask);
  Tensor context = matvec(source.states, weights);
  return {context, weights};
}

}  // namespace adms2s
