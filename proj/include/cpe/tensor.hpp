#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

// Dense double-precision arrays with tape-based reverse-mode differentiation.
//
// Differentiable ops record a backward closure onto the thread's active Tape
// whenever one of their inputs requires a gradient. Tape::backward replays the
// records in exact reverse order and may run only once per recording.

namespace cpe::tc {

using Shape = std::vector<std::size_t>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

std::string shape_str(const Shape& s);
std::size_t numel(const Shape& s);

class Tensor {
 public:
  struct Impl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
  };

  Tensor();
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double v);
  /// 2-D tensor from nested rows.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows,
                       bool requires_grad = false);
  static Tensor vector(std::vector<double> v, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t size() const { return impl_->data.size(); }

  std::span<const double> data() const { return impl_->data; }
  /// Mutable access for parameter updates; bypasses the tape.
  std::span<double> mutable_data() { return impl_->data; }
  double operator[](std::size_t i) const { return impl_->data[i]; }
  double at(std::size_t r, std::size_t c) const;
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on) { impl_->requires_grad = on; }

  bool has_grad() const { return !impl_->grad.empty(); }
  /// Gradient, or zeros if none has been accumulated.
  std::vector<double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad() { impl_->grad.clear(); }

  /// Value copy that does not participate in differentiation.
  Tensor detach() const;

  const std::shared_ptr<Impl>& impl() const { return impl_; }

 private:
  std::shared_ptr<Impl> impl_;
};

/// Records differentiable operations executed on the constructing thread
/// while it is alive. Tapes nest; the innermost one records.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Seeds d(loss)/d(loss) = 1 and propagates gradients to every recorded
  /// input that requires them, accumulating into existing gradients.
  void backward(const Tensor& loss);

  std::size_t size() const { return records_.size(); }

  /// Innermost tape recording on this thread, or nullptr.
  static Tape* active();

  void record(std::function<void()> backward_fn);

 private:
  std::vector<std::function<void()>> records_;
  bool consumed_ = false;
};

/// Suspends recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// Structural ops.
Tensor reshape(const Tensor& a, Shape shape);
/// Swaps the last two axes (rank 2 or 3).
Tensor transpose(const Tensor& a);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin,
             std::size_t end);
/// Stacks equally shaped tensors along a new axis.
Tensor stack(const std::vector<Tensor>& parts, std::size_t axis);
/// out.flat[i] = src.flat[index[i]], gradient scatter-added back.
Tensor gather(const Tensor& src, std::vector<std::size_t> index, Shape shape);
/// Row-wise pick: out[r] = a[r, cols[r]] for a 2-D `a`.
Tensor pick(const Tensor& a, const std::vector<std::size_t>& cols);

// Products. Rank 2 x rank 2, or batched rank 3 x rank 3.
Tensor matmul(const Tensor& a, const Tensor& b);
/// x W^T + b for x [n, in], W [out, in], b [out].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// Elementwise binary ops. `b` may be a scalar or match a trailing suffix of
// a's shape (broadcast over leading axes).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

// Elementwise unary ops.
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
/// Subgradient 0 at 0.
Tensor abs(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
/// Gradient passes only where lo <= a <= hi.
Tensor clamp(const Tensor& a, double lo, double hi);

// Reductions.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum_axis(const Tensor& a, std::size_t axis);
Tensor mean_axis(const Tensor& a, std::size_t axis);
/// Global max / min; the gradient routes to the first extreme element.
Tensor max_all(const Tensor& a);
Tensor min_all(const Tensor& a);

/// Max-shifted exponentiated softmax along `axis`. Throws on NaN input.
Tensor softmax(const Tensor& a, std::size_t axis);
inline Tensor softmax_rows(const Tensor& a) { return softmax(a, 1); }
inline Tensor softmax_cols(const Tensor& a) { return softmax(a, 0); }

/// Central-difference gradient verification. Returns the maximum over all
/// parameter entries of |analytic - numeric| / max(1, |analytic|).
/// `f` must return a one-element tensor.
double grad_check(const std::function<Tensor()>& f, std::vector<Tensor> params,
                  double eps = 1e-5);

}  // namespace cpe::tc
