#include "adms2s/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <utility>

namespace adms2s {

namespace {

thread_local Tape* g_active_tape = nullptr;

std::string shape_str(const std::vector<std::size_t>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  out += "]";
  return out;
}

std::size_t shape_product(const std::vector<std::size_t>& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

bool tracked(const Tensor& t) { return t.defined() && t.requires_grad(); }

bool recording(std::initializer_list<const Tensor*> inputs) {
  if (Tape::current() == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (tracked(*t)) return true;
  }
  return false;
}

void require_vector(const Tensor& x, const char* op) {
  if (x.rank() != 1) {
    throw RankError(std::string(op) + ": expected a vector, got " + shape_str(x.shape()));
  }
}

void require_matrix(const Tensor& x, const char* op) {
  if (x.rank() != 2) {
    throw RankError(std::string(op) + ": expected a matrix, got " + shape_str(x.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

}  // namespace

// ---- Tensor ----

Tensor::Tensor(std::vector<std::size_t> shape, double fill) {
  impl_ = std::make_shared<Impl>();
  impl_->shape = std::move(shape);
  impl_->value.assign(shape_product(impl_->shape), fill);
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values) {
  if (shape_product(shape) != values.size()) {
    throw ShapeError("tensor: " + shape_str(shape) + " does not hold " +
                     std::to_string(values.size()) + " values");
  }
  impl_ = std::make_shared<Impl>();
  impl_->shape = std::move(shape);
  impl_->value = std::move(values);
}

Tensor Tensor::scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

Tensor Tensor::vector(std::vector<double> v) {
  std::size_t n = v.size();
  return Tensor({n}, std::move(v));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::param(std::vector<std::size_t> shape, SplitMix64& rng, double lo, double hi) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(lo, hi);
  t.set_requires_grad(true);
  return t;
}

Tensor::Impl& Tensor::ref() {
  if (!impl_) throw TapeError("use of an undefined tensor");
  return *impl_;
}

const Tensor::Impl& Tensor::ref() const {
  if (!impl_) throw TapeError("use of an undefined tensor");
  return *impl_;
}

const std::vector<std::size_t>& Tensor::shape() const { return ref().shape; }

std::size_t Tensor::size() const { return ref().value.size(); }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw RankError("dim: axis out of range");
  return s[axis];
}

double* Tensor::data() { return ref().value.data(); }
const double* Tensor::data() const { return ref().value.data(); }
const std::vector<double>& Tensor::values() const { return ref().value; }

double& Tensor::at(std::size_t i) {
  if (i >= size()) throw IndexError("tensor index " + std::to_string(i) + " out of range");
  return ref().value[i];
}

double Tensor::at(std::size_t i) const {
  if (i >= size()) throw IndexError("tensor index " + std::to_string(i) + " out of range");
  return ref().value[i];
}

double& Tensor::at(std::size_t i, std::size_t j) {
  require_matrix(*this, "at");
  const auto& s = shape();
  if (i >= s[0] || j >= s[1]) throw IndexError("tensor index out of range");
  return ref().value[i * s[1] + j];
}

double Tensor::at(std::size_t i, std::size_t j) const {
  return const_cast<Tensor*>(this)->at(i, j);
}

double Tensor::item() const {
  if (size() != 1) throw RankError("item: tensor " + shape_str(shape()) + " is not a scalar");
  return ref().value[0];
}

bool Tensor::requires_grad() const { return ref().requires_grad; }
void Tensor::set_requires_grad(bool v) { ref().requires_grad = v; }

std::vector<double>& Tensor::grad() const {
  if (!impl_) throw TapeError("use of an undefined tensor");
  Impl& im = *impl_;
  if (im.grad.size() != im.value.size()) im.grad.assign(im.value.size(), 0.0);
  return im.grad;
}

const double* Tensor::grad_data() const {
  const Impl& im = ref();
  return im.grad.size() == im.value.size() ? im.grad.data() : nullptr;
}

bool Tensor::has_grad() const { return grad_data() != nullptr; }

void Tensor::zero_grad() const {
  if (!impl_) throw TapeError("use of an undefined tensor");
  impl_->grad.assign(impl_->value.size(), 0.0);
}

Tensor Tensor::detach() const {
  Tensor out;
  out.impl_ = std::make_shared<Impl>();
  out.impl_->shape = ref().shape;
  out.impl_->value = ref().value;
  return out;
}

// ---- Tape ----

Tape::Tape() : outer_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() { g_active_tape = outer_; }

Tape* Tape::current() { return g_active_tape; }

void Tape::register_parameter(const Tensor& p) { params_.push_back(p); }

void Tape::register_parameters(const std::vector<Tensor>& ps) {
  params_.insert(params_.end(), ps.begin(), ps.end());
}

void Tape::backward(const Tensor& root) {
  if (used_) throw TapeError("backward already ran on this tape");
  if (root.size() != 1) {
    throw RankError("backward: root must be a scalar, got " + shape_str(root.shape()));
  }
  used_ = true;
  for (Tensor& p : params_) p.grad();  // unreachable parameters end up with zeros
  Tensor seed = root;
  seed.grad()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

void Tape::record(std::function<void()> backward_step) {
  nodes_.push_back(std::move(backward_step));
}

// ---- ops ----

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
  if (recording({&a, &b})) {
    out.set_requires_grad(true);
    Tape::current()->record([a, b, out]() mutable {
      const double* go = out.grad_data();
      if (!go) return;
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += go[i];
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = a.data()[i] - b.data()[i];
  if (recording({&a, &b})) {
    out.set_requires_grad(true);
    Tape::current()->record([a, b, out]() mutable {
      const double* go = out.grad_data();
      if (!go) return;
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= go[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
  if (recording({&a, &b})) {
    out.set_requires_grad(true);
    Tape::current()->record([a, b, out]() mutable {
      const double* go = out.grad_data();
      if (!go) return;
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += b.data()[i] * go[i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += a.data()[i] * go[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& x, double c) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = c * x.data()[i];
  if (recording({&x})) {
    out.set_requires_grad(true);
    Tape::current()->record([x, out, c]() mutable {
      const double* go = out.grad_data();
      if (!go) return;
      auto& gx = x.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += c * go[i];
    });
  }
  return out;
}

Tensor scale_by(const Tensor& x, const Tensor& s) {
  if (s.size() != 1) throw ShapeError("scale_by: scale must be a scalar tensor");
  const double sv = s.data()[0];
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = sv * x.data()[i];
  if (recording({&x, &s})) {
    out.set_requires_grad(true);
    Tape::current()->record([x, s, out, sv]() mutable {
      const double* go = out.grad_data();
      if (!go) return;
      if (x.requires_grad()) {
        auto& gx = x.grad();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += sv * go[i];
      }
      if (s.requires_grad()) {
        double acc = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) acc += x.data()[i] * go[i];
        s.grad()[0] += acc;
      }
    });
  }
  return out;
}

Tensor add_to_columns(const Tensor& m, const Tensor& v) {
  require_matrix(m, "add_to_columns");
  require_vector(v, "add_to_columns");
  const std::size_t rows = m.dim(0), cols = m.dim(1);
  if (v.size() != rows) {
    throw ShapeError("add_to_columns: " + shape_str(m.shape()) + " vs " + shape_str(v.shape()));
  }
  Tensor out(m.shape());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out.data()[i * cols + j] = m.data()[i * cols + j] + v.data()[i];
  if (recording({&m, &v})) {
    out.set_requires_grad(true);
    Tape::current()->record([m, v, out, rows, cols]() mutable {
      const double* go = out.grad_data();
      if (!go) return;
      if (m.requires_grad()) {
        auto& gm = m.grad();
        for (std::size_t i = 0; i < gm.size(); ++i) gm[i] += go[i];
      }
      if (v.requires_grad()) {
        auto& gv = v.grad();
        for (std::size_t i = 0; i < rows; ++i) {
          double acc = 0.0;
          for (std::size_t j = 0; j < cols; ++j) acc += go[i * cols + j];
          gv[i] += acc;
        }
      }
    });
  }
  return out;
}

Tensor add_to_rows(const Tensor& m, const Tensor& v) {
  require_matrix(m, "add_to_rows");
  require_vector(v, "add_to_rows");
  const std::size_t rows = m.dim(0), cols = m.dim(1);
  if (v.size() != cols) {
    throw ShapeError("add_to_rows: " + shape_str(m.shape()) + " vs " + shape_str(v.shape()));
  }
  Tensor out(m.shape());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out.data()[i * cols + j] = m.data()[i * cols + j] + v.data()[j];
  if (recording({&m, &v})) {
    out.set_requires_grad(true);
    Tape::current()->record([m, v, out, rows, cols]() mutable {
      const double* go = out.grad_data();
      if (!go) return;
      if (m.requires_grad()) {
        auto& gm = m.grad();
        for (std::size_t i = 0; i < gm.size(); ++i) gm[i] += go[i];
      }
      if (v.requires_grad()) {
        auto& gv = v.grad();
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < cols; ++j) gv[j] += go[i * cols + j];
      }
    });
  }
  return out;
}

Tensor tanh_ew(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = std::tanh(x.data()[i]);
  if (recording({&x})) {
    out.set_requires_grad(true);
    Tape::current()->record([x, out]() mutable {
      const double* go = out.grad_data();
      if (!go) return;
      auto& gx = x.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) {
        const double y = out.data()[i];
        gx[i] += (1.0 - y * y) * go[i];
      }
    });
  }
  return out;
}

Tensor sigmoid_ew(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x.data()[i];
    out.data()[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  if (recording({&x})) {
    out.set_requires_grad(true);
    Tape::current()->record([x, out]() mutable {
      const double* go = out.grad_data();
      if (!go) return;
      auto& gx = x.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) {
        const double y = out.data()[i];
        gx[i] += y * (1.0 - y) * go[i];
      }
    });
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a.data()[i * k + p];
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out.data()[i * n + j] += av * b.data()[p * n + j];
    }
  }
  if (recording({&a, &b})) {
    out.set_requires_grad(true);
    Tape::current()->record([a, b, out, m, k, n]() mutable {
      const double* go = out.grad_data();
      if (!go) return;
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += go[i * n + j] * b.data()[p * n + j];
            ga[i * k + p] += acc;
          }
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        for (std::size_t p = 0; p < k; ++p)
          for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < m; ++i) acc += a.data()[i * k + p] * go[i * n + j];
            gb[p * n + j] += acc;
          }
      }
    });
  }
  return out;
}

Tensor matvec(const Tensor& a, const Tensor& x) {
  require_matrix(a, "matvec");
  require_vector(x, "matvec");
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (x.size() != n) {
    throw ShapeError("matvec: " + shape_str(a.shape()) + " vs " + shape_str(x.shape()));
  }
  Tensor out({m});
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    const double* row = a.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) acc += row[j] * x.data()[j];
    out.data()[i] = acc;
  }
  if (recording({&a, &x})) {
    out.set_requires_grad(true);
    Tape::current()->record([a, x, out, m, n]() mutable {
      const double* go = out.grad_data();
      if (!go) return;
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (std::size_t i = 0; i < m; ++i) {
          const double g = go[i];
          if (g == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g * x.data()[j];
        }
      }
      if (x.requires_grad()) {
        auto& gx = x.grad();
        for (std::size_t i = 0; i < m; ++i) {
          const double g = go[i];
          if (g == 0.0) continue;
          const double* row = a.data() + i * n;
          for (std::size_t j = 0; j < n; ++j) gx[j] += row[j] * g;
        }
      }
    });
  }
  return out;
}

Tensor tmatvec(const Tensor& a, const Tensor& x) {
  require_matrix(a, "tmatvec");
  require_vector(x, "tmatvec");
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (x.size() != m) {
    throw ShapeError("tmatvec: " + shape_str(a.shape()) + " vs " + shape_str(x.shape()));
  }
  Tensor out({n});
  for (std::size_t i = 0; i < m; ++i) {
    const double xv = x.data()[i];
    if (xv == 0.0) continue;
    const double* row = a.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) out.data()[j] += row[j] * xv;
  }
  if (recording({&a, &x})) {
    out.set_requires_grad(true);
    Tape::current()->record([a, x, out, m, n]() mutable {
      const double* go = out.grad_data();
      if (!go) return;
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (std::size_t i = 0; i < m; ++i) {
          const double xv = x.data()[i];
          if (xv == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += xv * go[j];
        }
      }
      if (x.requires_grad()) {
        auto& gx = x.grad();
        for (std::size_t i = 0; i < m; ++i) {
          double acc = 0.0;
          const double* row = a.data() + i * n;
          for (std::size_t j = 0; j < n; ++j) acc += row[j] * go[j];
          gx[i] += acc;
        }
      }
    });
  }
  return out;
}

Tensor concat(const Tensor& a, const Tensor& b) {
  require_vector(a, "concat");
  require_vector(b, "concat");
  const std::size_t na = a.size(), nb = b.size();
  Tensor out({na + nb});
  std::copy(a.data(), a.data() + na, out.data());
  std::copy(b.data(), b.data() + nb, out.data() + na);
  if (recording({&a, &b})) {
    out.set_requires_grad(true);
    Tape::current()->record([a, b, out, na, nb]() mutable {
      const double* go = out.grad_data();
      if (!go) return;
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (std::size_t i = 0; i < na; ++i) ga[i] += go[i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        for (std::size_t i = 0; i < nb; ++i) gb[i] += go[na + i];
      }
    });
  }
  return out;
}

Tensor concat_columns(const std::vector<Tensor>& cols) {
  if (cols.empty()) throw EmptyInputError("concat_columns: no columns");
  const std::size_t d = cols[0].size(), n = cols.size();
  bool any_grad = false;
  for (const Tensor& c : cols) {
    require_vector(c, "concat_columns");
    if (c.size() != d) throw ShapeError("concat_columns: column length mismatch");
    any_grad = any_grad || tracked(c);
  }
  Tensor out({d, n});
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < d; ++i) out.data()[i * n + j] = cols[j].data()[i];
  if (Tape::current() != nullptr && any_grad) {
    out.set_requires_grad(true);
    Tape::current()->record([cols, out, d, n]() mutable {
      const double* go = out.grad_data();
      if (!go) return;
      for (std::size_t j = 0; j < n; ++j) {
        Tensor col = cols[j];
        if (!col.requires_grad()) continue;
        auto& gc = col.grad();
        for (std::size_t i = 0; i < d; ++i) gc[i] += go[i * n + j];
      }
    });
  }
  return out;
}

Tensor slice(const Tensor& x, std::size_t begin, std::size_t len) {
  require_vector(x, "slice");
  if (begin + len > x.size()) {
    throw IndexError("slice: [" + std::to_string(begin) + ", " + std::to_string(begin + len) +
                     ") exceeds length " + std::to_string(x.size()));
  }
  Tensor out({len});
  std::copy(x.data() + begin, x.data() + begin + len, out.data());
  if (recording({&x})) {
    out.set_requires_grad(true);
    Tape::current()->record([x, out, begin, len]() mutable {
      const double* go = out.grad_data();
      if (!go) return;
      auto& gx = x.grad();
      for (std::size_t i = 0; i < len; ++i) gx[begin + i] += go[i];
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x.data()[i];
  Tensor out = Tensor::scalar(acc);
  if (recording({&x})) {
    out.set_requires_grad(true);
    Tape::current()->record([x, out]() mutable {
      const double* go = out.grad_data();
      if (!go) return;
      auto& gx = x.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[0];
    });
  }
  return out;
}

Tensor row_mean(const Tensor& m) {
  require_matrix(m, "row_mean");
  const std::size_t rows = m.dim(0), cols = m.dim(1);
  const double inv = 1.0 / static_cast<double>(cols);
  Tensor out({rows});
  for (std::size_t i = 0; i < rows; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j) acc += m.data()[i * cols + j];
    out.data()[i] = acc * inv;
  }
  if (recording({&m})) {
    out.set_requires_grad(true);
    Tape::current()->record([m, out, rows, cols, inv]() mutable {
      const double* go = out.grad_data();
      if (!go) return;
      auto& gm = m.grad();
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) gm[i * cols + j] += go[i] * inv;
    });
  }
  return out;
}

Tensor col_mean(const Tensor& m) {
  require_matrix(m, "col_mean");
  const std::size_t rows = m.dim(0), cols = m.dim(1);
  const double inv = 1.0 / static_cast<double>(rows);
  Tensor out({cols});
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out.data()[j] += m.data()[i * cols + j] * inv;
  if (recording({&m})) {
    out.set_requires_grad(true);
    Tape::current()->record([m, out, rows, cols, inv]() mutable {
      const double* go = out.grad_data();
      if (!go) return;
      auto& gm = m.grad();
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) gm[i * cols + j] += go[j] * inv;
    });
  }
  return out;
}

namespace {

Tensor softmax_impl(const Tensor& x, const std::vector<std::uint8_t>* mask) {
  require_vector(x, "softmax");
  const std::size_t n = x.size();
  if (n == 0) throw EmptyInputError("softmax: empty input");
  if (mask && mask->size() != n) throw ShapeError("softmax: mask length mismatch");
  bool any_valid = false;
  if (mask) {
    for (std::uint8_t m : *mask) any_valid = any_valid || (m != 0);
  } else {
    any_valid = true;
  }
  if (!any_valid) throw MaskError("softmax: all positions masked");

  std::vector<double> shifted(n);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    shifted[i] = x.data()[i] + ((mask && !(*mask)[i]) ? kMaskSurrogate : 0.0);
    mx = std::max(mx, shifted[i]);
  }
  Tensor out({n});
  double denom = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out.data()[i] = std::exp(shifted[i] - mx);
    denom += out.data()[i];
  }
  for (std::size_t i = 0; i < n; ++i) out.data()[i] /= denom;
  if (recording({&x})) {
    out.set_requires_grad(true);
    Tape::current()->record([x, out, n]() mutable {
      const double* go = out.grad_data();
      if (!go) return;
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += go[i] * out.data()[i];
      auto& gx = x.grad();
      for (std::size_t i = 0; i < n; ++i) gx[i] += out.data()[i] * (go[i] - dot);
    });
  }
  return out;
}

}  // namespace

Tensor softmax(const Tensor& x) { return softmax_impl(x, nullptr); }

Tensor softmax_masked(const Tensor& x, const std::vector<std::uint8_t>& mask) {
  return softmax_impl(x, &mask);
}

Tensor log_softmax(const Tensor& x) {
  require_vector(x, "log_softmax");
  const std::size_t n = x.size();
  if (n == 0) throw EmptyInputError("log_softmax: empty input");
  double mx = x.data()[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, x.data()[i]);
  double denom = 0.0;
  for (std::size_t i = 0; i < n; ++i) denom += std::exp(x.data()[i] - mx);
  const double lse = mx + std::log(denom);
  Tensor out({n});
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = x.data()[i] - lse;
  if (recording({&x})) {
    out.set_requires_grad(true);
    Tape::current()->record([x, out, n]() mutable {
      const double* go = out.grad_data();
      if (!go) return;
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) total += go[i];
      auto& gx = x.grad();
      for (std::size_t i = 0; i < n; ++i) gx[i] += go[i] - std::exp(out.data()[i]) * total;
    });
  }
  return out;
}

Tensor mask_surrogate(const Tensor& x, const std::vector<std::uint8_t>& mask) {
  require_vector(x, "mask_surrogate");
  if (mask.size() != x.size()) throw ShapeError("mask_surrogate: mask length mismatch");
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i)
    out.data()[i] = x.data()[i] + (mask[i] ? 0.0 : kMaskSurrogate);
  if (recording({&x})) {
    out.set_requires_grad(true);
    Tape::current()->record([x, out]() mutable {
      const double* go = out.grad_data();
      if (!go) return;
      auto& gx = x.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i];
    });
  }
  return out;
}

Tensor cross_entropy(const Tensor& logits, std::size_t target) {
  require_vector(logits, "cross_entropy");
  const std::size_t n = logits.size();
  if (target >= n) {
    throw IndexError("cross_entropy: target " + std::to_string(target) + " out of range for " +
                     std::to_string(n) + " classes");
  }
  double mx = logits.data()[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, logits.data()[i]);
  double denom = 0.0;
  for (std::size_t i = 0; i < n; ++i) denom += std::exp(logits.data()[i] - mx);
  const double lse = mx + std::log(denom);
  Tensor out = Tensor::scalar(lse - logits.data()[target]);
  if (recording({&logits})) {
    out.set_requires_grad(true);
    Tape::current()->record([logits, out, target, mx, lse, n]() mutable {
      const double* go = out.grad_data();
      if (!go) return;
      auto& gx = logits.grad();
      for (std::size_t i = 0; i < n; ++i) {
        const double p = std::exp(logits.data()[i] - lse);
        gx[i] += (p - (i == target ? 1.0 : 0.0)) * go[0];
      }
    });
  }
  return out;
}

Tensor embedding_row(const Tensor& table, std::size_t row) {
  require_matrix(table, "embedding_row");
  const std::size_t rows = table.dim(0), cols = table.dim(1);
  if (row >= rows) {
    throw IndexError("embedding_row: row " + std::to_string(row) + " out of range for " +
                     std::to_string(rows) + " rows");
  }
  Tensor out({cols});
  std::copy(table.data() + row * cols, table.data() + (row + 1) * cols, out.data());
  if (recording({&table})) {
    out.set_requires_grad(true);
    Tape::current()->record([table, out, row, cols]() mutable {
      const double* go = out.grad_data();
      if (!go) return;
      auto& gt = table.grad();
      for (std::size_t i = 0; i < cols; ++i) gt[row * cols + i] += go[i];
    });
  }
  return out;
}

Tensor dropout(const Tensor& x, double rate, SplitMix64& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout: rate must lie in [0, 1)");
  if (rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<std::vector<double>>(x.size());
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    (*mask)[i] = rng.next_double() >= rate ? keep_scale : 0.0;
    out.data()[i] = x.data()[i] * (*mask)[i];
  }
  if (recording({&x})) {
    out.set_requires_grad(true);
    Tape::current()->record([x, out, mask]() mutable {
      const double* go = out.grad_data();
      if (!go) return;
      auto& gx = x.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += (*mask)[i] * go[i];
    });
  }
  return out;
}

}  // namespace adms2s
