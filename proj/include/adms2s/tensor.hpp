#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "adms2s/errors.hpp"
#include "adms2s/rng.hpp"

namespace adms2s {

class Tape;

// Additive stand-in for -inf applied to masked score positions before a
// softmax; exp() of it underflows to an exact zero.
inline constexpr double kMaskSurrogate = -1e30;

// Dense double-precision tensor. Copies are shallow: they alias the same
// value and gradient storage, which is what lets a backward lambda captured
// on the tape write gradients the caller can see.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  static Tensor scalar(double v);
  static Tensor vector(std::vector<double> v);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  // Trainable tensor with entries uniform in [lo, hi).
  static Tensor param(std::vector<std::size_t> shape, SplitMix64& rng, double lo = -0.08,
                      double hi = 0.08);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<std::size_t>& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  std::size_t dim(std::size_t axis) const;

  double* data();
  const double* data() const;
  const std::vector<double>& values() const;

  double& at(std::size_t i);
  double at(std::size_t i) const;
  double& at(std::size_t i, std::size_t j);
  double at(std::size_t i, std::size_t j) const;

  // Scalar tensors only.
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool v);

  // Gradient buffer, zero-filled on first access. Const because the buffer
  // lives in the shared storage, not the handle.
  std::vector<double>& grad() const;
  // Null until a gradient has been accumulated.
  const double* grad_data() const;
  bool has_grad() const;
  void zero_grad() const;

  // Deep copy carrying no gradient history.
  Tensor detach() const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    std::vector<std::size_t> shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
  Impl& ref();
  const Impl& ref() const;
};

// Records the primitives of one forward pass in creation order and replays
// them newest-first on backward. A tape registers itself as the thread-local
// active tape for its lifetime; ops record onto it only while it is active,
// so inference code simply runs with no tape in scope.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* current();

  void register_parameter(const Tensor& p);
  void register_parameters(const std::vector<Tensor>& ps);
  const std::vector<Tensor>& parameters() const { return params_; }

  // Seeds d(root)/d(root) = 1 and visits each node exactly once. Registered
  // parameters end up with an allocated (possibly zero) gradient. Throws
  // RankError for non-scalar roots and TapeError on a second call.
  void backward(const Tensor& root);

  std::size_t node_count() const { return nodes_.size(); }
  void record(std::function<void()> backward_step);

 private:
  std::vector<std::function<void()>> nodes_;
  std::vector<Tensor> params_;
  bool used_ = false;
  Tape* outer_ = nullptr;
};

// ---- primitive operations ----
// Forward evaluation is eager; when a tape is active and an input is grad-
// tracked, the matching reverse step is recorded.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double c);
// Multiply by a trainable scalar tensor (shape {1}).
Tensor scale_by(const Tensor& x, const Tensor& s);
// v (length rows) added to every column of m.
Tensor add_to_columns(const Tensor& m, const Tensor& v);
// v (length cols) added to every row of m.
Tensor add_to_rows(const Tensor& m, const Tensor& v);
Tensor tanh_ew(const Tensor& x);
Tensor sigmoid_ew(const Tensor& x);
Tensor matmul(const Tensor& a, const Tensor& b);
// A[m×n] · x[n] -> [m]
Tensor matvec(const Tensor& a, const Tensor& x);
// Aᵀ[n×m] · x[m] -> [n], i.e. x through the columns of A[m×n].
Tensor tmatvec(const Tensor& a, const Tensor& x);
Tensor concat(const Tensor& a, const Tensor& b);
// Column vectors (equal length d) into a [d × n] matrix.
Tensor concat_columns(const std::vector<Tensor>& cols);
Tensor slice(const Tensor& x, std::size_t begin, std::size_t len);
Tensor sum(const Tensor& x);
// Mean over each row / column of a matrix.
Tensor row_mean(const Tensor& m);
Tensor col_mean(const Tensor& m);
Tensor softmax(const Tensor& x);
Tensor softmax_masked(const Tensor& x, const std::vector<std::uint8_t>& mask);
Tensor log_softmax(const Tensor& x);
// x + kMaskSurrogate at masked positions, identity elsewhere.
Tensor mask_surrogate(const Tensor& x, const std::vector<std::uint8_t>& mask);
// -log softmax(logits)[target], evaluated in log space.
Tensor cross_entropy(const Tensor& logits, std::size_t target);
// Row gather; backward scatter-adds into the table row.
Tensor embedding_row(const Tensor& table, std::size_t row);
// Inverted dropout: kept entries scaled by 1/(1-rate). rate 0 is a no-op and
// consumes no draws.
Tensor dropout(const Tensor& x, double rate, SplitMix64& rng);

}  // namespace adms2s
