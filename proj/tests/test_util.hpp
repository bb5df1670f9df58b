#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "adms2s/tensor.hpp"

namespace adms2s::testing {

inline Tensor random_tensor(std::vector<std::size_t> shape, SplitMix64& rng, double lo = -2.0,
                            double hi = 2.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(lo, hi);
  return t;
}

// Scalar readout through weights drawn once at construction, so repeated
// evaluations of the same expression stay deterministic and every output
// coordinate gets a distinct pull in the gradient check.
class FixedReadout {
 public:
  FixedReadout(const std::vector<std::size_t>& shape, SplitMix64& rng)
      : weights_(random_tensor(shape, rng, -1.0, 1.0)) {}
  Tensor operator()(const Tensor& out) const { return sum(mul(out, weights_)); }

 private:
  Tensor weights_;
};

// Central-difference check of build_loss() against the tape gradient for
// every listed input. build_loss must rebuild the expression from the same
// tensors on each call. Returns the max relative error.
inline double finite_difference_check(const std::function<Tensor()>& build_loss,
                                      const std::vector<Tensor>& inputs, double step = 1e-5) {
  for (const Tensor& t : inputs) {
    Tensor handle = t;
    handle.set_requires_grad(true);
    handle.zero_grad();
  }
  {
    Tape tape;
    tape.backward(build_loss());
  }
  double max_rel = 0.0;
  for (const Tensor& t : inputs) {
    Tensor handle = t;
    const std::vector<double> analytic = handle.grad();
    for (std::size_t i = 0; i < handle.size(); ++i) {
      const double saved = handle.data()[i];
      handle.data()[i] = saved + step;
      const double plus = build_loss().item();
      handle.data()[i] = saved - step;
      const double minus = build_loss().item();
      handle.data()[i] = saved;
      const double numeric = (plus - minus) / (2.0 * step);
      const double rel = std::abs(analytic[i] - numeric) /
                         std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace adms2s::testing
