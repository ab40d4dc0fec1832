#include "cpe/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace cpe::tc {

namespace {

using ImplPtr = std::shared_ptr<Tensor::Impl>;

thread_local std::vector<Tape*> g_tapes;

std::vector<double>& grad_buf(const ImplPtr& p) {
  if (p->grad.empty()) p->grad.assign(p->data.size(), 0.0);
  return p->grad;
}

Tape* recording(std::initializer_list<const Tensor*> inputs) {
  Tape* tape = Tape::active();
  if (tape == nullptr) return nullptr;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return tape;
  }
  return nullptr;
}

Tape* recording(const std::vector<Tensor>& inputs) {
  Tape* tape = Tape::active();
  if (tape == nullptr) return nullptr;
  for (const Tensor& t : inputs) {
    if (t.requires_grad()) return tape;
  }
  return nullptr;
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw ShapeError(std::string(op) + ": undefined tensor");
}

struct AxisSplit {
  std::size_t outer = 1, n = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
  if (axis >= s.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                     shape_str(s));
  }
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.n = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

// Elementwise unary op with derivative expressed via (input, output) values.
template <class Fwd, class Deriv>
Tensor unary(const Tensor& a, Fwd fwd, Deriv deriv) {
  require_defined(a, "unary");
  std::vector<double> out(a.size());
  const auto ad = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(ad[i]);
  Tensor res(a.shape(), std::move(out));
  if (Tape* tape = recording({&a})) {
    res.set_requires_grad(true);
    tape->record([ai = a.impl(), oi = res.impl(), deriv] {
      if (oi->grad.empty()) return;
      auto& g = grad_buf(ai);
      for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] += oi->grad[i] * deriv(ai->data[i], oi->data[i]);
      }
    });
  }
  return res;
}

enum class BinOp { kAdd, kSub, kMul, kDiv };

Tensor binary(const Tensor& a, const Tensor& b, BinOp op) {
  require_defined(a, "binary");
  require_defined(b, "binary");
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  bool ok = b.size() == 1;
  if (!ok && bs.size() <= as.size()) {
    ok = std::equal(bs.begin(), bs.end(), as.end() - bs.size());
  }
  if (!ok) {
    throw ShapeError("elementwise op: cannot broadcast " + shape_str(bs) +
                     " onto " + shape_str(as));
  }
  const std::size_t bn = b.size();
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = ad[i], y = bd[i % bn];
    switch (op) {
      case BinOp::kAdd: out[i] = x + y; break;
      case BinOp::kSub: out[i] = x - y; break;
      case BinOp::kMul: out[i] = x * y; break;
      case BinOp::kDiv: out[i] = x / y; break;
    }
  }
  Tensor res(as, std::move(out));
  if (Tape* tape = recording({&a, &b})) {
    res.set_requires_grad(true);
    tape->record([ai = a.impl(), bi = b.impl(), oi = res.impl(), op, bn] {
      if (oi->grad.empty()) return;
      const auto& g = oi->grad;
      if (ai->requires_grad) {
        auto& ga = grad_buf(ai);
        for (std::size_t i = 0; i < g.size(); ++i) {
          switch (op) {
            case BinOp::kAdd:
            case BinOp::kSub: ga[i] += g[i]; break;
            case BinOp::kMul: ga[i] += g[i] * bi->data[i % bn]; break;
            case BinOp::kDiv: ga[i] += g[i] / bi->data[i % bn]; break;
          }
        }
      }
      if (bi->requires_grad) {
        auto& gb = grad_buf(bi);
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double y = bi->data[i % bn];
          switch (op) {
            case BinOp::kAdd: gb[i % bn] += g[i]; break;
            case BinOp::kSub: gb[i % bn] -= g[i]; break;
            case BinOp::kMul: gb[i % bn] += g[i] * ai->data[i]; break;
            case BinOp::kDiv: gb[i % bn] -= g[i] * ai->data[i] / (y * y); break;
          }
        }
      }
    });
  }
  return res;
}

Tensor extreme_all(const Tensor& a, bool want_max) {
  require_defined(a, "max/min");
  if (a.size() == 0) throw ShapeError("max/min of empty tensor");
  const auto d = a.data();
  std::size_t best = 0;
  for (std::size_t i = 1; i < d.size(); ++i) {
    if (want_max ? d[i] > d[best] : d[i] < d[best]) best = i;
  }
  Tensor res({1}, {d[best]});
  if (Tape* tape = recording({&a})) {
    res.set_requires_grad(true);
    tape->record([ai = a.impl(), oi = res.impl(), best] {
      if (oi->grad.empty()) return;
      grad_buf(ai)[best] += oi->grad[0];
    });
  }
  return res;
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1},
                         std::multiplies<>());
}

// ---------------------------------------------------------------- Tensor

Tensor::Tensor() = default;

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : impl_(std::make_shared<Impl>()) {
  if (numel(shape) != data.size()) {
    throw ShapeError("data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows,
                      bool requires_grad) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> d;
  d.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged matrix literal");
    d.insert(d.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(d), requires_grad);
}

Tensor Tensor::vector(std::vector<double> v, bool requires_grad) {
  const std::size_t n = v.size();
  return Tensor({n}, std::move(v), requires_grad);
}

double Tensor::at(std::size_t r, std::size_t c) const {
  if (rank() != 2) throw ShapeError("at(r, c) needs a 2-D tensor");
  return impl_->data.at(r * impl_->shape[1] + c);
}

double Tensor::item() const {
  if (size() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  }
  return impl_->data[0];
}

std::vector<double> Tensor::grad() const {
  if (impl_->grad.empty()) return std::vector<double>(size(), 0.0);
  return impl_->grad;
}

std::span<double> Tensor::mutable_grad() { return grad_buf(impl_); }

Tensor Tensor::detach() const { return Tensor(shape(), impl_->data, false); }

// ---------------------------------------------------------------- Tape

Tape::Tape() { g_tapes.push_back(this); }

Tape::~Tape() {
  auto it = std::find(g_tapes.rbegin(), g_tapes.rend(), this);
  if (it != g_tapes.rend()) g_tapes.erase(std::next(it).base());
}

Tape* Tape::active() { return g_tapes.empty() ? nullptr : g_tapes.back(); }

void Tape::record(std::function<void()> backward_fn) {
  if (consumed_) throw TapeError("tape already consumed by backward()");
  records_.push_back(std::move(backward_fn));
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) {
    throw TapeError("backward() called twice on the same recording");
  }
  if (loss.size() != 1) {
    throw ShapeError("backward() needs a scalar loss, got " +
                     shape_str(loss.shape()));
  }
  consumed_ = true;
  // Stop recording: closures must not append while we replay.
  auto it = std::find(g_tapes.rbegin(), g_tapes.rend(), this);
  if (it != g_tapes.rend()) g_tapes.erase(std::next(it).base());
  if (!loss.requires_grad()) return;
  grad_buf(loss.impl())[0] += 1.0;
  for (auto r = records_.rbegin(); r != records_.rend(); ++r) (*r)();
  records_.clear();
}

NoGradGuard::NoGradGuard() { g_tapes.push_back(nullptr); }

NoGradGuard::~NoGradGuard() {
  auto it = std::find(g_tapes.rbegin(), g_tapes.rend(), nullptr);
  if (it != g_tapes.rend()) g_tapes.erase(std::next(it).base());
}

// ---------------------------------------------------------------- structure

Tensor reshape(const Tensor& a, Shape shape) {
  require_defined(a, "reshape");
  if (numel(shape) != a.size()) {
    throw ShapeError("reshape " + shape_str(a.shape()) + " -> " +
                     shape_str(shape));
  }
  Tensor res(std::move(shape), std::vector<double>(a.data().begin(),
                                                   a.data().end()));
  if (Tape* tape = recording({&a})) {
    res.set_requires_grad(true);
    tape->record([ai = a.impl(), oi = res.impl()] {
      if (oi->grad.empty()) return;
      auto& g = grad_buf(ai);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += oi->grad[i];
    });
  }
  return res;
}

Tensor transpose(const Tensor& a) {
  require_defined(a, "transpose");
  if (a.rank() != 2 && a.rank() != 3) {
    throw ShapeError("transpose needs rank 2 or 3, got " +
                     shape_str(a.shape()));
  }
  const std::size_t batch = a.rank() == 3 ? a.dim(0) : 1;
  const std::size_t r = a.dim(a.rank() - 2), c = a.dim(a.rank() - 1);
  Shape os = a.shape();
  std::swap(os[os.size() - 1], os[os.size() - 2]);
  std::vector<double> out(a.size());
  const auto d = a.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        out[b * r * c + j * r + i] = d[b * r * c + i * c + j];
      }
    }
  }
  Tensor res(std::move(os), std::move(out));
  if (Tape* tape = recording({&a})) {
    res.set_requires_grad(true);
    tape->record([ai = a.impl(), oi = res.impl(), batch, r, c] {
      if (oi->grad.empty()) return;
      auto& g = grad_buf(ai);
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t i = 0; i < r; ++i) {
          for (std::size_t j = 0; j < c; ++j) {
            g[b * r * c + i * c + j] += oi->grad[b * r * c + j * r + i];
          }
        }
      }
    });
  }
  return res;
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  for (const auto& p : parts) require_defined(p, "concat");
  const Shape& s0 = parts.front().shape();
  Shape os = s0;
  os.at(axis) = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != s0.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != s0[i]) {
        throw ShapeError("concat: " + shape_str(s) + " vs " + shape_str(s0));
      }
    }
    os[axis] += s[axis];
  }
  const AxisSplit out_split = split_at(os, axis);
  std::vector<double> out(numel(os));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const AxisSplit ps = split_at(p.shape(), axis);
    const auto d = p.data();
    const std::size_t block = ps.n * ps.inner;
    for (std::size_t o = 0; o < ps.outer; ++o) {
      std::copy_n(d.begin() + o * block, block,
                  out.begin() + o * out_split.n * out_split.inner +
                      off * out_split.inner);
    }
    off += ps.n;
  }
  Tensor res(std::move(os), std::move(out));
  if (Tape* tape = recording(parts)) {
    res.set_requires_grad(true);
    std::vector<ImplPtr> impls;
    for (const auto& p : parts) impls.push_back(p.impl());
    tape->record([impls, offsets, oi = res.impl(), axis, out_split] {
      if (oi->grad.empty()) return;
      for (std::size_t k = 0; k < impls.size(); ++k) {
        const auto& pi = impls[k];
        if (!pi->requires_grad) continue;
        const AxisSplit ps = split_at(pi->shape, axis);
        auto& g = grad_buf(pi);
        const std::size_t block = ps.n * ps.inner;
        for (std::size_t o = 0; o < ps.outer; ++o) {
          const std::size_t src =
              o * out_split.n * out_split.inner + offsets[k] * out_split.inner;
          for (std::size_t i = 0; i < block; ++i) {
            g[o * block + i] += oi->grad[src + i];
          }
        }
      }
    });
  }
  return res;
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin,
             std::size_t end) {
  require_defined(a, "slice");
  const AxisSplit s = split_at(a.shape(), axis);
  if (begin > end || end > s.n) {
    throw ShapeError("slice [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") out of range for " +
                     shape_str(a.shape()));
  }
  Shape os = a.shape();
  os[axis] = end - begin;
  const std::size_t block = (end - begin) * s.inner;
  std::vector<double> out(s.outer * block);
  const auto d = a.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(d.begin() + o * s.n * s.inner + begin * s.inner, block,
                out.begin() + o * block);
  }
  Tensor res(std::move(os), std::move(out));
  if (Tape* tape = recording({&a})) {
    res.set_requires_grad(true);
    tape->record([ai = a.impl(), oi = res.impl(), s, begin, block] {
      if (oi->grad.empty()) return;
      auto& g = grad_buf(ai);
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t i = 0; i < block; ++i) {
          g[o * s.n * s.inner + begin * s.inner + i] += oi->grad[o * block + i];
        }
      }
    });
  }
  return res;
}

Tensor stack(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("stack of zero tensors");
  std::vector<Tensor> expanded;
  expanded.reserve(parts.size());
  for (const auto& p : parts) {
    require_defined(p, "stack");
    if (p.shape() != parts.front().shape()) {
      throw ShapeError("stack: shapes differ");
    }
    Shape s = p.shape();
    if (axis > s.size()) throw ShapeError("stack: axis out of range");
    s.insert(s.begin() + static_cast<std::ptrdiff_t>(axis), 1);
    expanded.push_back(reshape(p, std::move(s)));
  }
  return concat(expanded, axis);
}

Tensor gather(const Tensor& src, std::vector<std::size_t> index, Shape shape) {
  require_defined(src, "gather");
  if (numel(shape) != index.size()) {
    throw ShapeError("gather: index count does not match output shape");
  }
  std::vector<double> out(index.size());
  const auto d = src.data();
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= d.size()) throw ShapeError("gather: index out of range");
    out[i] = d[index[i]];
  }
  Tensor res(std::move(shape), std::move(out));
  if (Tape* tape = recording({&src})) {
    res.set_requires_grad(true);
    tape->record([si = src.impl(), oi = res.impl(), idx = std::move(index)] {
      if (oi->grad.empty()) return;
      auto& g = grad_buf(si);
      for (std::size_t i = 0; i < idx.size(); ++i) g[idx[i]] += oi->grad[i];
    });
  }
  return res;
}

Tensor pick(const Tensor& a, const std::vector<std::size_t>& cols) {
  require_defined(a, "pick");
  if (a.rank() != 2 || cols.size() != a.dim(0)) {
    throw ShapeError("pick: need [n, c] tensor and n column indices");
  }
  const std::size_t c = a.dim(1);
  std::vector<std::size_t> idx(cols.size());
  for (std::size_t r = 0; r < cols.size(); ++r) {
    if (cols[r] >= c) throw ShapeError("pick: column index out of range");
    idx[r] = r * c + cols[r];
  }
  return gather(a, std::move(idx), {cols.size()});
}

// ---------------------------------------------------------------- products

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  const bool batched = a.rank() == 3;
  if (a.rank() != b.rank() || (a.rank() != 2 && a.rank() != 3) ||
      (batched && a.dim(0) != b.dim(0))) {
    throw ShapeError("matmul: " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  const std::size_t batch = batched ? a.dim(0) : 1;
  const std::size_t m = a.dim(a.rank() - 2), k = a.dim(a.rank() - 1);
  const std::size_t k2 = b.dim(b.rank() - 2), n = b.dim(b.rank() - 1);
  if (k != k2) {
    throw ShapeError("matmul inner dims differ: " + shape_str(a.shape()) +
                     " x " + shape_str(b.shape()));
  }
  std::vector<double> out(batch * m * n, 0.0);
  const auto ad = a.data();
  const auto bd = b.data();
  for (std::size_t z = 0; z < batch; ++z) {
    const double* A = ad.data() + z * m * k;
    const double* B = bd.data() + z * k * n;
    double* C = out.data() + z * m * n;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t p = 0; p < k; ++p) {
        const double av = A[i * k + p];
        for (std::size_t j = 0; j < n; ++j) C[i * n + j] += av * B[p * n + j];
      }
    }
  }
  Shape os = batched ? Shape{batch, m, n} : Shape{m, n};
  Tensor res(std::move(os), std::move(out));
  if (Tape* tape = recording({&a, &b})) {
    res.set_requires_grad(true);
    tape->record([ai = a.impl(), bi = b.impl(), oi = res.impl(), batch, m, k,
                  n] {
      if (oi->grad.empty()) return;
      for (std::size_t z = 0; z < batch; ++z) {
        const double* G = oi->grad.data() + z * m * n;
        const double* A = ai->data.data() + z * m * k;
        const double* B = bi->data.data() + z * k * n;
        if (ai->requires_grad) {
          double* GA = grad_buf(ai).data() + z * m * k;
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              double acc = 0.0;
              for (std::size_t j = 0; j < n; ++j) acc += G[i * n + j] * B[p * n + j];
              GA[i * k + p] += acc;
            }
          }
        }
        if (bi->requires_grad) {
          double* GB = grad_buf(bi).data() + z * k * n;
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              const double av = A[i * k + p];
              for (std::size_t j = 0; j < n; ++j) GB[p * n + j] += av * G[i * n + j];
            }
          }
        }
      }
    });
  }
  return res;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  return add(matmul(x, transpose(weight)), bias);
}

// ---------------------------------------------------------------- elementwise

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kAdd); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kSub); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kMul); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kDiv); }

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor scale(const Tensor& a, double s) {
  return unary(
      a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(
      a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
  return unary(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, [](double x) { return x > 0 ? x : 0.0; },
      [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor abs(const Tensor& a) {
  return unary(
      a, [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Tensor exp(const Tensor& a) {
  return unary(
      a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary(
      a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  return unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------- reductions

Tensor sum(const Tensor& a) {
  require_defined(a, "sum");
  double s = 0.0;
  for (double v : a.data()) s += v;
  Tensor res({1}, {s});
  if (Tape* tape = recording({&a})) {
    res.set_requires_grad(true);
    tape->record([ai = a.impl(), oi = res.impl()] {
      if (oi->grad.empty()) return;
      auto& g = grad_buf(ai);
      for (double& v : g) v += oi->grad[0];
    });
  }
  return res;
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor sum_axis(const Tensor& a, std::size_t axis) {
  require_defined(a, "sum_axis");
  const AxisSplit s = split_at(a.shape(), axis);
  Shape os = a.shape();
  os.erase(os.begin() + static_cast<std::ptrdiff_t>(axis));
  if (os.empty()) os = {1};
  std::vector<double> out(s.outer * s.inner, 0.0);
  const auto d = a.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t k = 0; k < s.n; ++k) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        out[o * s.inner + i] += d[(o * s.n + k) * s.inner + i];
      }
    }
  }
  Tensor res(std::move(os), std::move(out));
  if (Tape* tape = recording({&a})) {
    res.set_requires_grad(true);
    tape->record([ai = a.impl(), oi = res.impl(), s] {
      if (oi->grad.empty()) return;
      auto& g = grad_buf(ai);
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t k = 0; k < s.n; ++k) {
          for (std::size_t i = 0; i < s.inner; ++i) {
            g[(o * s.n + k) * s.inner + i] += oi->grad[o * s.inner + i];
          }
        }
      }
    });
  }
  return res;
}

Tensor mean_axis(const Tensor& a, std::size_t axis) {
  const std::size_t n = split_at(a.shape(), axis).n;
  if (n == 0) throw ShapeError("mean over empty axis");
  return scale(sum_axis(a, axis), 1.0 / static_cast<double>(n));
}

Tensor max_all(const Tensor& a) { return extreme_all(a, true); }
Tensor min_all(const Tensor& a) { return extreme_all(a, false); }

Tensor softmax(const Tensor& a, std::size_t axis) {
  require_defined(a, "softmax");
  const AxisSplit s = split_at(a.shape(), axis);
  const auto d = a.data();
  for (double v : d) {
    if (std::isnan(v)) throw std::domain_error("softmax: NaN input");
  }
  std::vector<double> out(a.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      auto at = [&](std::size_t k) { return (o * s.n + k) * s.inner + i; };
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < s.n; ++k) mx = std::max(mx, d[at(k)]);
      double z = 0.0;
      for (std::size_t k = 0; k < s.n; ++k) {
        out[at(k)] = std::exp(d[at(k)] - mx);
        z += out[at(k)];
      }
      for (std::size_t k = 0; k < s.n; ++k) out[at(k)] /= z;
    }
  }
  Tensor res(a.shape(), std::move(out));
  if (Tape* tape = recording({&a})) {
    res.set_requires_grad(true);
    tape->record([ai = a.impl(), oi = res.impl(), s] {
      if (oi->grad.empty()) return;
      auto& g = grad_buf(ai);
      const auto& y = oi->data;
      const auto& gy = oi->grad;
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t i = 0; i < s.inner; ++i) {
          auto at = [&](std::size_t k) { return (o * s.n + k) * s.inner + i; };
          double dot = 0.0;
          for (std::size_t k = 0; k < s.n; ++k) dot += gy[at(k)] * y[at(k)];
          for (std::size_t k = 0; k < s.n; ++k) {
            g[at(k)] += y[at(k)] * (gy[at(k)] - dot);
          }
        }
      }
    });
  }
  return res;
}

// ---------------------------------------------------------------- checking

double grad_check(const std::function<Tensor()>& f, std::vector<Tensor> params,
                  double eps) {
  for (auto& p : params) p.zero_grad();
  {
    Tape tape;
    const Tensor loss = f();
    if (loss.size() != 1) {
      throw ShapeError("grad_check: function is not scalar-valued, shape " +
                       shape_str(loss.shape()));
    }
    tape.backward(loss);
  }
  NoGradGuard no_grad;
  double worst = 0.0;
  for (auto& p : params) {
    const std::vector<double> analytic = p.grad();
    auto values = p.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double orig = values[i];
      values[i] = orig + eps;
      const double up = f().item();
      values[i] = orig - eps;
      const double down = f().item();
      values[i] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double err =
          std::fabs(analytic[i] - numeric) / std::max(1.0, std::fabs(analytic[i]));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace cpe::tc
