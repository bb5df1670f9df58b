#include <cmath>

#include "adms2s/recurrent.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace adms2s;
using adms2s::testing::finite_difference_check;
using adms2s::testing::FixedReadout;
using adms2s::testing::random_tensor;

namespace {

// Independent scalar evaluation of the gate equations, kept free of the
// tensor ops it checks.
void reference_lstm_step(const std::vector<double>& w_in, const std::vector<double>& w_hid,
                         const std::vector<double>& bias, const std::vector<double>& x,
                         const std::vector<double>& h0, const std::vector<double>& c0,
                         std::size_t in_dim, std::size_t hid, std::vector<double>& h1,
                         std::vector<double>& c1) {
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  std::vector<double> pre(4 * hid, 0.0);
  for (std::size_t r = 0; r < 4 * hid; ++r) {
    double acc = bias[r];
    for (std::size_t j = 0; j < in_dim; ++j) acc += w_in[r * in_dim + j] * x[j];
    for (std::size_t j = 0; j < hid; ++j) acc += w_hid[r * hid + j] * h0[j];
    pre[r] = acc;
  }
  h1.assign(hid, 0.0);
  c1.assign(hid, 0.0);
  for (std::size_t e = 0; e < hid; ++e) {
    const double gi = sig(pre[e]);
    const double gf = sig(pre[hid + e]);
    const double gc = std::tanh(pre[2 * hid + e]);
    const double go = sig(pre[3 * hid + e]);
    c1[e] = gf * c0[e] + gi * gc;
    h1[e] = go * std::tanh(c1[e]);
  }
}

std::vector<Tensor> embed_random(std::size_t n, std::size_t dim, SplitMix64& rng) {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_tensor({dim}, rng, -1.0, 1.0));
  return out;
}

void copy_values(const Tensor& from, Tensor to) {
  REQUIRE(from.size() == to.size());
  for (std::size_t i = 0; i < from.size(); ++i) to.data()[i] = from.data()[i];
}

}  // namespace

TEST_CASE("zero cell maps zero input to zero state") {
  LstmCell cell = LstmCell::zeros(3, 4);
  auto [h, c] = cell.step(Tensor({3}), Tensor({4}), Tensor({4}));
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(h.at(i) == 0.0);
    CHECK(c.at(i) == 0.0);
  }
}

TEST_CASE("saturated forget and closed input gate carry the cell state") {
  SplitMix64 rng(3);
  LstmCell cell(3, 4, rng);
  for (std::size_t e = 0; e < 4; ++e) {
    cell.bias.data()[e] = -50.0;       // input gate shut
    cell.bias.data()[4 + e] = 50.0;    // forget gate open
  }
  Tensor x = random_tensor({3}, rng, -0.5, 0.5);
  Tensor h0 = random_tensor({4}, rng, -0.5, 0.5);
  Tensor c0 = random_tensor({4}, rng, -0.5, 0.5);
  auto [h, c] = cell.step(x, h0, c0);
  for (std::size_t e = 0; e < 4; ++e) {
    CHECK(c.at(e) == doctest::Approx(c0.at(e)).epsilon(1e-12));
  }
}

TEST_CASE("forget-gate bias initializes to one") {
  SplitMix64 rng(11);
  LstmCell cell(2, 3, rng);
  for (std::size_t e = 0; e < 3; ++e) {
    CHECK(cell.bias.at(e) == 0.0);
    CHECK(cell.bias.at(3 + e) == 1.0);
    CHECK(cell.bias.at(6 + e) == 0.0);
    CHECK(cell.bias.at(9 + e) == 0.0);
  }
}

TEST_CASE("single step matches the scalar gate-equation oracle") {
  SplitMix64 rng(19);
  LstmCell cell(3, 2, rng);
  Tensor x = random_tensor({3}, rng, -1, 1);
  Tensor h0 = random_tensor({2}, rng, -1, 1);
  Tensor c0 = random_tensor({2}, rng, -1, 1);
  auto [h, c] = cell.step(x, h0, c0);

  std::vector<double> h_ref, c_ref;
  reference_lstm_step(cell.w_input.values(), cell.w_hidden.values(), cell.bias.values(),
                      x.values(), h0.values(), c0.values(), 3, 2, h_ref, c_ref);
  for (std::size_t e = 0; e < 2; ++e) {
    CHECK(h.at(e) == doctest::Approx(h_ref[e]).epsilon(1e-10));
    CHECK(c.at(e) == doctest::Approx(c_ref[e]).epsilon(1e-10));
  }
}

TEST_CASE("lstm step rejects mismatched dimensions") {
  SplitMix64 rng(4);
  LstmCell cell(3, 4, rng);
  CHECK_THROWS_AS(cell.step(Tensor({2}), Tensor({4}), Tensor({4})), ShapeError);
  CHECK_THROWS_AS(cell.step(Tensor({3}), Tensor({5}), Tensor({4})), ShapeError);
}

TEST_CASE("encoder handles a single-token source") {
  SplitMix64 rng(21);
  BiLstmEncoder enc(2, 5, 6, rng);
  auto out = enc.encode(embed_random(1, 5, rng), 1, DropoutCtx{});
  CHECK(out.source.states.shape() == std::vector<std::size_t>{6, 1});
  CHECK(out.source.mask == std::vector<std::uint8_t>{1});
  CHECK(out.source.valid_count() == 1);
}

TEST_CASE("encoder rejects an empty source") {
  SplitMix64 rng(21);
  BiLstmEncoder enc(1, 5, 6, rng);
  CHECK_THROWS_AS(enc.encode({}, 0, DropoutCtx{}), EmptyInputError);
}

TEST_CASE("reversing the input swaps forward and backward roles with shared weights") {
  // single layer: above it, the swapped halves feed layer inputs and the
  // exchange identity stops holding for unconstrained weights
  SplitMix64 rng(33);
  const std::size_t layers = 1, dim = 4, hidden = 6;
  BiLstmEncoder enc(layers, dim, hidden, rng);
  for (std::size_t l = 0; l < layers; ++l) {
    copy_values(enc.forward_cells[l].w_input, enc.backward_cells[l].w_input);
    copy_values(enc.forward_cells[l].w_hidden, enc.backward_cells[l].w_hidden);
    copy_values(enc.forward_cells[l].bias, enc.backward_cells[l].bias);
  }
  const std::size_t n = 4;
  std::vector<Tensor> embedded = embed_random(n, dim, rng);
  std::vector<Tensor> reversed(embedded.rbegin(), embedded.rend());
  auto fwd = enc.encode(embedded, n, DropoutCtx{});
  auto rev = enc.encode(reversed, n, DropoutCtx{});
  const std::size_t half = hidden / 2;
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t e = 0; e < half; ++e) {
      CHECK(rev.source.states.at(e, j) ==
            doctest::Approx(fwd.source.states.at(half + e, n - 1 - j)).epsilon(1e-12));
      CHECK(rev.source.states.at(half + e, j) ==
            doctest::Approx(fwd.source.states.at(e, n - 1 - j)).epsilon(1e-12));
    }
  }
}

TEST_CASE("encoding columns equal two independent unidirectional runs") {
  SplitMix64 rng(45);
  const std::size_t layers = 2, dim = 3, hidden = 4, n = 3;
  BiLstmEncoder enc(layers, dim, hidden, rng);
  std::vector<Tensor> embedded = embed_random(n, dim, rng);
  auto out = enc.encode(embedded, n, DropoutCtx{});

  // oracle: run each direction of each layer as a plain unidirectional pass
  const std::size_t half = hidden / 2;
  std::vector<Tensor> layer_in = embedded;
  std::vector<Tensor> fwd(n), bwd(n);
  for (std::size_t l = 0; l < layers; ++l) {
    Tensor h({half}), c({half});
    for (std::size_t j = 0; j < n; ++j) {
      std::tie(h, c) = enc.forward_cells[l].step(layer_in[j], h, c);
      fwd[j] = h;
    }
    h = Tensor({half});
    c = Tensor({half});
    for (std::size_t j = n; j-- > 0;) {
      std::tie(h, c) = enc.backward_cells[l].step(layer_in[j], h, c);
      bwd[j] = h;
    }
    for (std::size_t j = 0; j < n; ++j) layer_in[j] = concat(fwd[j], bwd[j]);
  }
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t e = 0; e < half; ++e) {
      CHECK(out.source.states.at(e, j) == doctest::Approx(fwd[j].at(e)).epsilon(1e-12));
      CHECK(out.source.states.at(half + e, j) == doctest::Approx(bwd[j].at(e)).epsilon(1e-12));
    }
  }
}

TEST_CASE("encoding is independent of trailing pads") {
  SplitMix64 rng(52);
  BiLstmEncoder enc(2, 4, 6, rng);
  const std::size_t n = 3;
  std::vector<Tensor> embedded = embed_random(n, 4, rng);
  auto exact = enc.encode(embedded, n, DropoutCtx{});

  std::vector<Tensor> padded = embedded;
  padded.emplace_back();  // pad slots are never read
  padded.emplace_back();
  auto with_pads = enc.encode(padded, n, DropoutCtx{});

  CHECK(with_pads.source.length() == 5);
  CHECK(with_pads.source.valid_count() == 3);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t e = 0; e < 6; ++e) {
      CHECK(std::abs(with_pads.source.states.at(e, j) - exact.source.states.at(e, j)) < 1e-10);
    }
  }
  for (std::size_t j = n; j < 5; ++j) {
    CHECK(with_pads.source.mask[j] == 0);
    for (std::size_t e = 0; e < 6; ++e) CHECK(with_pads.source.states.at(e, j) == 0.0);
  }
}

TEST_CASE("gradients through a five-step unrolled lstm match finite differences") {
  SplitMix64 rng(60);
  LstmCell cell(3, 3, rng);
  std::vector<Tensor> inputs = embed_random(5, 3, rng);
  FixedReadout readout({3}, rng);
  auto loss = [&]() {
    Tensor h({3}), c({3});
    for (const Tensor& x : inputs) std::tie(h, c) = cell.step(x, h, c);
    return readout(h);
  };
  std::vector<Tensor> checked = cell.parameters();
  checked.insert(checked.end(), inputs.begin(), inputs.end());
  CHECK(finite_difference_check(loss, checked) < 1e-5);
}

TEST_CASE("stack step is deterministic and zero under zero weights") {
  LstmStack stack = LstmStack::zeros(2, 3, 4);
  SplitMix64 rng(8);
  Tensor x = random_tensor({3}, rng);
  auto [top1, st1] = stack.step(x, stack.zero_state(), DropoutCtx{});
  auto [top2, st2] = stack.step(x, stack.zero_state(), DropoutCtx{});
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(top1.at(i) == 0.0);
    CHECK(top1.at(i) == top2.at(i));
  }
}

TEST_CASE("two-layer stack step equals manual layer-by-layer composition") {
  SplitMix64 rng(71);
  LstmStack stack(2, 3, 4, rng);
  Tensor x = random_tensor({3}, rng);
  LstmState state = stack.zero_state();
  auto [top, next] = stack.step(x, state, DropoutCtx{});

  auto [h0, c0] = stack.cells()[0].step(x, state.h[0], state.c[0]);
  auto [h1, c1] = stack.cells()[1].step(h0, state.h[1], state.c[1]);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(top.at(i) == doctest::Approx(h1.at(i)).epsilon(1e-12));
    CHECK(next.h[0].at(i) == doctest::Approx(h0.at(i)).epsilon(1e-12));
    CHECK(next.c[0].at(i) == doctest::Approx(c0.at(i)).epsilon(1e-12));
    CHECK(next.c[1].at(i) == doctest::Approx(c1.at(i)).epsilon(1e-12));
  }
}
