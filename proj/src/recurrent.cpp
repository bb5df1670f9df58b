#include "adms2s/recurrent.hpp"

#include <string>

namespace adms2s {

namespace {

void check_dims(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw ShapeError(std::string(what) + ": got length " + std::to_string(got) + ", expected " +
                     std::to_string(want));
  }
}

}  // namespace

LstmCell::LstmCell(std::size_t input_dim, std::size_t hidden_dim, SplitMix64& rng)
    : input_dim_(input_dim), hidden_dim_(hidden_dim) {
  w_input = Tensor::param({4 * hidden_dim, input_dim}, rng);
  w_hidden = Tensor::param({4 * hidden_dim, hidden_dim}, rng);
  bias = Tensor::param({4 * hidden_dim}, rng, 0.0, 0.0);
  // forget-gate block
  for (std::size_t i = hidden_dim; i < 2 * hidden_dim; ++i) bias.data()[i] = 1.0;
}

LstmCell LstmCell::zeros(std::size_t input_dim, std::size_t hidden_dim) {
  SplitMix64 rng(0);
  LstmCell cell(input_dim, hidden_dim, rng);
  for (std::size_t i = 0; i < cell.w_input.size(); ++i) cell.w_input.data()[i] = 0.0;
  for (std::size_t i = 0; i < cell.w_hidden.size(); ++i) cell.w_hidden.data()[i] = 0.0;
  for (std::size_t i = 0; i < cell.bias.size(); ++i) cell.bias.data()[i] = 0.0;
  return cell;
}

std::pair<Tensor, Tensor> LstmCell::step(const Tensor& x, const Tensor& h_prev,
                                         const Tensor& c_prev) const {
  check_dims(x.size(), input_dim_, "lstm step input");
  check_dims(h_prev.size(), hidden_dim_, "lstm step hidden state");
  check_dims(c_prev.size(), hidden_dim_, "lstm step cell state");
  const std::size_t h = hidden_dim_;
  Tensor pre = add(add(matvec(w_input, x), matvec(w_hidden, h_prev)), bias);
  Tensor gate_in = sigmoid_ew(slice(pre, 0, h));
  Tensor gate_forget = sigmoid_ew(slice(pre, h, h));
  Tensor candidate = tanh_ew(slice(pre, 2 * h, h));
  Tensor gate_out = sigmoid_ew(slice(pre, 3 * h, h));
  Tensor c = add(mul(gate_forget, c_prev), mul(gate_in, candidate));
  Tensor h_new = mul(gate_out, tanh_ew(c));
  return {h_new, c};
}

LstmStack::LstmStack(std::size_t layers, std::size_t input_dim, std::size_t hidden_dim,
                     SplitMix64& rng) {
  cells_.reserve(layers);
  for (std::size_t l = 0; l < layers; ++l) {
    cells_.emplace_back(l == 0 ? input_dim : hidden_dim, hidden_dim, rng);
  }
}

LstmStack LstmStack::zeros(std::size_t layers, std::size_t input_dim, std::size_t hidden_dim) {
  SplitMix64 rng(0);
  LstmStack stack(layers, input_dim, hidden_dim, rng);
  for (LstmCell& cell : stack.cells_) cell = LstmCell::zeros(cell.input_dim(), cell.hidden_dim());
  return stack;
}

LstmState LstmStack::zero_state() const {
  LstmState st;
  for (const LstmCell& cell : cells_) {
    st.h.emplace_back(std::vector<std::size_t>{cell.hidden_dim()});
    st.c.emplace_back(std::vector<std::size_t>{cell.hidden_dim()});
  }
  return st;
}

std::pair<Tensor, LstmState> LstmStack::step(const Tensor& x, const LstmState& state,
                                             const DropoutCtx& drop) const {
  if (state.h.size() != cells_.size() || state.c.size() != cells_.size()) {
    throw ShapeError("lstm stack: state layer count mismatch");
  }
  LstmState next;
  Tensor input = x;
  for (std::size_t l = 0; l < cells_.size(); ++l) {
    if (l > 0) input = drop.apply(input);
    auto [h, c] = cells_[l].step(input, state.h[l], state.c[l]);
    next.h.push_back(h);
    next.c.push_back(c);
    input = h;
  }
  return {next.h.back(), next};
}

std::vector<Tensor> LstmStack::parameters() const {
  std::vector<Tensor> out;
  for (const LstmCell& cell : cells_) {
    auto ps = cell.parameters();
    out.insert(out.end(), ps.begin(), ps.end());
  }
  return out;
}

std::size_t EncodedSource::valid_count() const {
  std::size_t n = 0;
  for (std::uint8_t m : mask) n += (m != 0);
  return n;
}

BiLstmEncoder::BiLstmEncoder(std::size_t layers, std::size_t input_dim, std::size_t hidden_dim,
                             SplitMix64& rng) {
  if (hidden_dim % 2 != 0) {
    throw ConfigError("encoder: hidden_dim must be even to split across directions");
  }
  const std::size_t half = hidden_dim / 2;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = l == 0 ? input_dim : hidden_dim;
    forward_cells.emplace_back(in, half, rng);
    backward_cells.emplace_back(in, half, rng);
  }
}

BiLstmEncoder BiLstmEncoder::zeros(std::size_t layers, std::size_t input_dim,
                                   std::size_t hidden_dim) {
  SplitMix64 rng(0);
  BiLstmEncoder enc(layers, input_dim, hidden_dim, rng);
  for (LstmCell& c : enc.forward_cells) c = LstmCell::zeros(c.input_dim(), c.hidden_dim());
  for (LstmCell& c : enc.backward_cells) c = LstmCell::zeros(c.input_dim(), c.hidden_dim());
  return enc;
}

EncoderOutput BiLstmEncoder::encode(const std::vector<Tensor>& embedded, std::size_t true_len,
                                    const DropoutCtx& drop) const {
  if (true_len == 0) throw EmptyInputError("encode: empty source sequence");
  if (true_len > embedded.size()) {
    throw ShapeError("encode: true length exceeds the embedded buffer");
  }
  const std::size_t n_buf = embedded.size();
  const std::size_t half = forward_cells[0].hidden_dim();

  EncoderOutput out;
  std::vector<Tensor> layer_in(embedded.begin(), embedded.begin() + true_len);
  std::vector<Tensor> fwd_states(true_len), bwd_states(true_len);
  for (std::size_t l = 0; l < forward_cells.size(); ++l) {
    if (l > 0) {
      for (Tensor& t : layer_in) t = drop.apply(t);
    }
    Tensor h({half}), c({half});
    for (std::size_t j = 0; j < true_len; ++j) {
      std::tie(h, c) = forward_cells[l].step(layer_in[j], h, c);
      fwd_states[j] = h;
    }
    out.final_forward.push_back(fwd_states[true_len - 1]);
    h = Tensor({half});
    c = Tensor({half});
    for (std::size_t j = true_len; j-- > 0;) {
      std::tie(h, c) = backward_cells[l].step(layer_in[j], h, c);
      bwd_states[j] = h;
    }
    out.first_backward.push_back(bwd_states[0]);
    for (std::size_t j = 0; j < true_len; ++j) layer_in[j] = concat(fwd_states[j], bwd_states[j]);
  }

  std::vector<Tensor> columns = layer_in;
  for (std::size_t j = true_len; j < n_buf; ++j) columns.emplace_back(std::vector<std::size_t>{2 * half});
  out.source.states = concat_columns(columns);
  out.source.mask.assign(n_buf, 0);
  for (std::size_t j = 0; j < true_len; ++j) out.source.mask[j] = 1;
  return out;
}

std::vector<Tensor> BiLstmEncoder::parameters() const {
  std::vector<Tensor> out;
  for (std::size_t l = 0; l < forward_cells.size(); ++l) {
    auto f = forward_cells[l].parameters();
    out.insert(out.end(), f.begin(), f.end());
    auto b = backward_cells[l].parameters();
    out.insert(out.end(), b.begin(), b.end());
  }
  return out;
}

}  // namespace adms2s
