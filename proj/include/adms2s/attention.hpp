#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "adms2s/recurrent.hpp"
#include "adms2s/tensor.hpp"

namespace adms2s {

enum class AttentionKind { kSoft, kMqt, kAqt };

AttentionKind attention_kind_from_string(std::string_view name);
std::string to_string(AttentionKind kind);

// Per-position alignment scorer: the additive network is the default, the
// parameter-free dot product is the multiplicative alternative.
enum class ScorerKind { kAdditive, kDotProduct };

// Trainable weights of the alignment scorer plus, for the pairwise kinds,
// the pair-score weight. state_dim must equal memory_dim unless
// project_state is set, in which case a learned projection maps the decoder
// state into the encoding space before pair contraction (the dot scorer
// reuses the same projection).
struct AttentionParams {
  AttentionParams() = default;
  AttentionParams(AttentionKind kind, std::size_t state_dim, std::size_t memory_dim,
                  std::size_t inner_dim, SplitMix64& rng, bool project_state = false,
                  ScorerKind scorer = ScorerKind::kAdditive);

  AttentionKind kind = AttentionKind::kSoft;
  ScorerKind scorer = ScorerKind::kAdditive;
  Tensor w_state;           // [A × D_s]      (additive scorer only)
  Tensor w_memory;          // [A × D_h]
  Tensor score_vec;         // [A]
  Tensor bias;              // [A]
  Tensor pair_weight;       // mqt: [1]; aqt: [D_h]; undefined for soft
  Tensor state_projection;  // optional [D_h × D_s]

  std::vector<Tensor> parameters() const;
  // Decoder state as seen by the pair contraction (projected if configured).
  Tensor attended_state(const Tensor& state) const;
};

std::size_t pair_count(std::size_t n);
// Packed index of the unordered pair (j, k); arguments in either order.
std::size_t pair_index(std::size_t j, std::size_t k, std::size_t n);

// Pairwise encoding correlations tanh(h_j + h_k), stored as the upper
// triangle only (row pair_index(j,k) of packed); the lower triangle aliases
// it, so symmetry holds by construction.
struct PairTensor {
  Tensor packed;  // [P × D], P = n(n+1)/2
  std::size_t n = 0;
  std::size_t dim = 0;
  double value(std::size_t j, std::size_t k, std::size_t d) const;
};

// V·H, constant per source sentence; cache it across decoding steps.
Tensor memory_projection(const EncodedSource& source, const AttentionParams& params);

// Raw additive alignment scores, one per source position; masked positions
// carry the surrogate so a following softmax zeroes them exactly.
Tensor additive_scores(const Tensor& state, const EncodedSource& source,
                       const AttentionParams& params);
Tensor additive_scores_cached(const Tensor& state, const EncodedSource& source,
                              const AttentionParams& params, const Tensor& memory_proj);
// Dot-product alignment scores <s, h_j>, surrogate at masked positions.
Tensor dot_scores(const Tensor& state, const EncodedSource& source,
                  const AttentionParams& params);
// Dispatch on params.scorer.
Tensor alignment_scores(const Tensor& state, const EncodedSource& source,
                        const AttentionParams& params);

// Classical soft attention: (context, weights).
std::pair<Tensor, Tensor> soft_attention_context(const Tensor& state, const EncodedSource& source,
                                                 const AttentionParams& params);

PairTensor build_pair_tensor(const EncodedSource& source);

// Multiplicative pair scores: entry (j,k) = w · <L[j][k], state>. Packed [P];
// symmetric because the pair tensor is.
Tensor mqt_offdiagonals(const PairTensor& pair, const Tensor& state, const Tensor& weight_scalar);
// Additive pair scores: entry (j,k) = <tanh(L[j][k] + state), w>. Packed [P].
Tensor aqt_offdiagonals(const PairTensor& pair, const Tensor& state, const Tensor& weight_vec);

// Per-step symmetric score matrix: diagonal = alignment scores, off-diagonal
// = pair scores. Off-diagonal storage is the packed upper triangle; the
// packed diagonal entries are present but ignored in favor of diag.
struct AttentionDensityMatrix {
  Tensor diag;         // [N]
  Tensor pair_scores;  // [P]
  std::vector<std::uint8_t> mask;
  std::size_t n = 0;
  double psi(std::size_t j, std::size_t k) const;
  std::vector<double> dense() const;  // row-major N×N snapshot
};

AttentionDensityMatrix build_adm(const Tensor& diag_scores, const Tensor& pair_scores,
                                 std::vector<std::uint8_t> mask);

// Context from the score matrix: per valid column, the mean of the column
// over valid rows, then a masked softmax, then the weighted encoding sum.
// Returns (context, weights).
std::pair<Tensor, Tensor> adm_context(const AttentionDensityMatrix& adm,
                                      const EncodedSource& source);

// Column sums of the off-diagonal entries over valid rows (test and
// composition primitive for adm_context).
Tensor pair_column_sums(const Tensor& pair_scores, const std::vector<std::uint8_t>& mask);

}  // namespace adms2s
