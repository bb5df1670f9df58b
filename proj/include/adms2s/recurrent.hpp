#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "adms2s/tensor.hpp"

namespace adms2s {

// Dropout configuration threaded through forward passes. A null rng means
// inference mode: dropout is off and the pass is deterministic.
struct DropoutCtx {
  double rate = 0.0;
  SplitMix64* rng = nullptr;
  Tensor apply(const Tensor& x) const {
    return (rng != nullptr && rate > 0.0) ? dropout(x, rate, *rng) : x;
  }
};

// Single LSTM cell. Gate pre-activations are packed along the leading axis
// in the order (input, forget, cell candidate, output); the forget-gate bias
// block starts at 1.0 so early training can carry state.
class LstmCell {
 public:
  LstmCell() = default;
  LstmCell(std::size_t input_dim, std::size_t hidden_dim, SplitMix64& rng);
  static LstmCell zeros(std::size_t input_dim, std::size_t hidden_dim);

  std::pair<Tensor, Tensor> step(const Tensor& x, const Tensor& h_prev, const Tensor& c_prev) const;

  std::size_t input_dim() const { return input_dim_; }
  std::size_t hidden_dim() const { return hidden_dim_; }
  std::vector<Tensor> parameters() const { return {w_input, w_hidden, bias}; }

  Tensor w_input;   // [4H × input_dim]
  Tensor w_hidden;  // [4H × H]
  Tensor bias;      // [4H]

 private:
  std::size_t input_dim_ = 0;
  std::size_t hidden_dim_ = 0;
};

struct LstmState {
  std::vector<Tensor> h;
  std::vector<Tensor> c;
};

// Unidirectional stack of LSTM cells; dropout is applied to the inputs of
// every layer above the first.
class LstmStack {
 public:
  LstmStack() = default;
  LstmStack(std::size_t layers, std::size_t input_dim, std::size_t hidden_dim, SplitMix64& rng);
  static LstmStack zeros(std::size_t layers, std::size_t input_dim, std::size_t hidden_dim);

  LstmState zero_state() const;
  // Returns the top-layer hidden state and the advanced per-layer state.
  std::pair<Tensor, LstmState> step(const Tensor& x, const LstmState& state,
                                    const DropoutCtx& drop) const;

  std::size_t layers() const { return cells_.size(); }
  std::size_t hidden_dim() const { return cells_.empty() ? 0 : cells_[0].hidden_dim(); }
  const std::vector<LstmCell>& cells() const { return cells_; }
  std::vector<LstmCell>& cells() { return cells_; }
  std::vector<Tensor> parameters() const;

 private:
  std::vector<LstmCell> cells_;
};

// Per-position source encodings, one column per token. Pad columns are zero
// and flagged invalid; attention must never let them contribute.
struct EncodedSource {
  Tensor states;                    // [D_h × N]
  std::vector<std::uint8_t> mask;   // 1 = valid
  std::size_t length() const { return mask.size(); }
  std::size_t valid_count() const;
};

struct EncoderOutput {
  EncodedSource source;
  std::vector<Tensor> final_forward;   // per layer, forward state at the last valid position
  std::vector<Tensor> first_backward;  // per layer, backward state at position 0
};

// Stacked bidirectional encoder. Each direction uses hidden_dim/2 units so
// the concatenated encoding width equals hidden_dim and matches the decoder
// state width without projections. The backward direction walks the reversed
// unpadded sequence, which keeps encodings independent of trailing pads.
class BiLstmEncoder {
 public:
  BiLstmEncoder() = default;
  BiLstmEncoder(std::size_t layers, std::size_t input_dim, std::size_t hidden_dim, SplitMix64& rng);
  static BiLstmEncoder zeros(std::size_t layers, std::size_t input_dim, std::size_t hidden_dim);

  // embedded may carry pad positions beyond true_len; they are ignored and
  // their output columns are zero.
  EncoderOutput encode(const std::vector<Tensor>& embedded, std::size_t true_len,
                       const DropoutCtx& drop) const;

  std::size_t layers() const { return forward_cells.size(); }
  std::size_t output_dim() const {
    return forward_cells.empty() ? 0 : 2 * forward_cells.back().hidden_dim();
  }
  std::vector<Tensor> parameters() const;

  std::vector<LstmCell> forward_cells;
  std::vector<LstmCell> backward_cells;
};

}  // namespace adms2s
