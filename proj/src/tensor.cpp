// SPDX-License-Identifier: Apache-2.0
#include "nfvg/tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "nfvg/linalg.hpp"

namespace nfvg {
inline namespace NFVG_PRECISION_NS {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

std::string Shape::str() const {
  std::ostringstream os;
  os << n << "x" << c << "x" << h << "x" << w;
  return os.str();
}

Real* Node::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), Real(0));
  return grad.data();
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(Shape shape, Real fill) : node_(std::make_shared<Node>()) {
  if (shape.n < 1 || shape.c < 1 || shape.h < 1 || shape.w < 1)
    throw ShapeError("Tensor: non-positive dimension in shape " + shape.str());
  node_->shape = shape;
  node_->data.assign(shape.numel(), fill);
}

Tensor::Tensor(Shape shape, std::vector<Real> values) : node_(std::make_shared<Node>()) {
  if (values.size() != shape.numel())
    throw ShapeError("Tensor: shape " + shape.str() + " needs " + std::to_string(shape.numel()) +
                     " values, got " + std::to_string(values.size()));
  node_->shape = shape;
  node_->data = std::move(values);
}

Tensor Tensor::parameter(Shape shape, std::vector<Real> values) {
  Tensor t(shape, std::move(values));
  t.node_->requires_grad = true;
  return t;
}

const Shape& Tensor::shape() const {
  if (!node_) throw UsageError("Tensor: use of an undefined tensor");
  return node_->shape;
}

std::span<const Real> Tensor::data() const {
  shape();
  return node_->data;
}

std::span<Real> Tensor::mutable_data() {
  shape();
  return node_->data;
}

Real Tensor::item() const {
  if (numel() != 1) throw ShapeError("item: tensor of shape " + shape().str() + " is not a scalar");
  return node_->data[0];
}

Real Tensor::at(int n, int c, int h, int w) const {
  const Shape& s = shape();
  return node_->data[((static_cast<std::size_t>(n) * s.c + c) * s.h + h) * s.w + w];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  if (!node_->leaf) throw UsageError("set_requires_grad: only leaf tensors can change gradient tracking");
  node_->requires_grad = on;
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const Real> Tensor::grad() const {
  if (!has_grad()) throw StateError("grad: tensor has no accumulated gradient");
  return node_->grad;
}

std::span<Real> Tensor::mutable_grad() {
  node_->grad_buffer();
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) std::fill(node_->grad.begin(), node_->grad.end(), Real(0));
}

Tensor Tensor::detach() const {
  Tensor out(shape(), node_->data);
  return out;
}

// ---------------------------------------------------------------------------
// Tape

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* Tape::active() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

void Tape::record(NodePtr output, std::vector<NodePtr> inputs, BackwardFn fn) {
  output->tape = this;
  output->leaf = false;
  output->requires_grad = true;
  records_.push_back(Record{std::move(output), std::move(inputs), std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.node()->tape != this) {
    throw UsageError("backward: loss is detached or was not recorded on this tape");
  }
  if (loss.numel() != 1) {
    throw UsageError("backward: loss must be a scalar, got shape " + loss.shape().str());
  }
  loss.node()->grad_buffer()[0] += Real(1);
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    if (it->output->grad.empty()) continue;  // not reachable from the loss
    it->fn();
  }
  clear();
}

void Tape::clear() {
  for (auto& r : records_) r.output->tape = nullptr;
  records_.clear();
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.node()->tape == nullptr) {
    throw UsageError("backward: loss is detached or was not recorded on any tape");
  }
  loss.node()->tape->backward(loss);
}

// ---------------------------------------------------------------------------
// Op helpers

namespace {

NodePtr new_node(const Shape& s) {
  auto n = std::make_shared<Node>();
  n->shape = s;
  n->data.assign(s.numel(), Real(0));
  return n;
}

bool tracking(std::initializer_list<const Tensor*> inputs) {
  if (Tape::active() == nullptr) return false;
  for (const Tensor* t : inputs)
    if (t->defined() && t->requires_grad()) return true;
  return false;
}

Tensor finish(NodePtr out, bool track, std::vector<NodePtr> inputs, Tape::BackwardFn fn) {
  if (track) Tape::active()->record(out, std::move(inputs), std::move(fn));
  return Tensor(std::move(out));
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw UsageError(std::string(op) + ": undefined tensor argument");
}

enum class Broadcast { kSame, kChannel };

Broadcast binary_mode(const Tensor& a, const Tensor& b, const char* op) {
  require_defined(a, op);
  require_defined(b, op);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa == sb) return Broadcast::kSame;
  if (sb.n == 1 && sb.c == sa.c && sb.h == 1 && sb.w == 1) return Broadcast::kChannel;
  throw ShapeError(std::string(op) + ": incompatible shapes " + sa.str() + " and " + sb.str());
}

// Calls f(i, channel) over every element of a in order.
template <typename F>
void for_each_channel(const Shape& s, F&& f) {
  const std::size_t plane = s.plane();
  std::size_t i = 0;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (std::size_t p = 0; p < plane; ++p, ++i) f(i, c);
}

template <typename Fwd, typename GradA, typename GradB>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, GradA grad_a,
                 GradB grad_b) {
  const Broadcast mode = binary_mode(a, b, name);
  const bool track = tracking({&a, &b});
  NodePtr out = new_node(a.shape());
  Node* an = a.node().get();
  Node* bn = b.node().get();
  Node* on = out.get();
  if (mode == Broadcast::kSame) {
    for (std::size_t i = 0; i < on->data.size(); ++i) on->data[i] = fwd(an->data[i], bn->data[i]);
  } else {
    for_each_channel(an->shape, [&](std::size_t i, int c) {
      on->data[i] = fwd(an->data[i], bn->data[c]);
    });
  }
  return finish(out, track, {a.node(), b.node()}, [an, bn, on, mode, grad_a, grad_b] {
    const Real* g = on->grad.data();
    if (an->requires_grad) {
      Real* ga = an->grad_buffer();
      if (mode == Broadcast::kSame) {
        for (std::size_t i = 0; i < on->data.size(); ++i) ga[i] += grad_a(g[i], an->data[i], bn->data[i]);
      } else {
        for_each_channel(an->shape, [&](std::size_t i, int c) {
          ga[i] += grad_a(g[i], an->data[i], bn->data[c]);
        });
      }
    }
    if (bn->requires_grad) {
      Real* gb = bn->grad_buffer();
      if (mode == Broadcast::kSame) {
        for (std::size_t i = 0; i < on->data.size(); ++i) gb[i] += grad_b(g[i], an->data[i], bn->data[i]);
      } else {
        std::vector<double> acc(bn->data.size(), 0.0);
        for_each_channel(an->shape, [&](std::size_t i, int c) {
          acc[c] += grad_b(g[i], an->data[i], bn->data[c]);
        });
        for (std::size_t c = 0; c < acc.size(); ++c) gb[c] += static_cast<Real>(acc[c]);
      }
    }
  });
}

// dy/dx expressed through (x, y).
template <typename Fwd, typename Deriv>
Tensor unary_op(const Tensor& a, const char* name, Fwd fwd, Deriv deriv) {
  require_defined(a, name);
  const bool track = tracking({&a});
  NodePtr out = new_node(a.shape());
  Node* an = a.node().get();
  Node* on = out.get();
  for (std::size_t i = 0; i < on->data.size(); ++i) on->data[i] = fwd(an->data[i]);
  return finish(out, track, {a.node()}, [an, on, deriv] {
    Real* ga = an->grad_buffer();
    const Real* g = on->grad.data();
    for (std::size_t i = 0; i < on->data.size(); ++i) ga[i] += g[i] * deriv(an->data[i], on->data[i]);
  });
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "add", [](Real x, Real y) { return x + y; }, [](Real g, Real, Real) { return g; },
      [](Real g, Real, Real) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "sub", [](Real x, Real y) { return x - y; }, [](Real g, Real, Real) { return g; },
      [](Real g, Real, Real) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "mul", [](Real x, Real y) { return x * y; }, [](Real g, Real, Real y) { return g * y; },
      [](Real g, Real x, Real) { return g * x; });
}

Tensor scale(const Tensor& a, Real s) {
  return unary_op(a, "scale", [s](Real x) { return s * x; }, [s](Real, Real) { return s; });
}

Tensor add_scalar(const Tensor& a, Real s) {
  return unary_op(a, "add_scalar", [s](Real x) { return x + s; }, [](Real, Real) { return Real(1); });
}

Tensor exp(const Tensor& a) {
  return unary_op(a, "exp", [](Real x) { return std::exp(x); }, [](Real, Real y) { return y; });
}

Tensor log(const Tensor& a) {
  require_defined(a, "log");
  for (Real v : a.data()) {
    if (!(v > 0)) throw DomainError("log: non-positive input " + std::to_string(v));
  }
  return unary_op(a, "log", [](Real x) { return std::log(x); }, [](Real x, Real) { return Real(1) / x; });
}

Tensor tanh(const Tensor& a) {
  return unary_op(a, "tanh", [](Real x) { return std::tanh(x); },
                  [](Real, Real y) { return Real(1) - y * y; });
}

Tensor relu(const Tensor& a) {
  return unary_op(a, "relu", [](Real x) { return x > 0 ? x : Real(0); },
                  [](Real x, Real) { return x > 0 ? Real(1) : Real(0); });
}

Tensor square(const Tensor& a) {
  return unary_op(a, "square", [](Real x) { return x * x; }, [](Real x, Real) { return 2 * x; });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& a) {
  require_defined(a, "sum");
  const bool track = tracking({&a});
  NodePtr out = new_node(Shape{});
  Node* an = a.node().get();
  Node* on = out.get();
  double acc = 0.0;
  for (Real v : an->data) acc += v;
  on->data[0] = static_cast<Real>(acc);
  return finish(out, track, {a.node()}, [an, on] {
    Real* ga = an->grad_buffer();
    const Real g = on->grad[0];
    for (std::size_t i = 0; i < an->data.size(); ++i) ga[i] += g;
  });
}

Tensor sum_per_sample(const Tensor& a) {
  require_defined(a, "sum_per_sample");
  const bool track = tracking({&a});
  const Shape& s = a.shape();
  NodePtr out = new_node(Shape{s.n, 1, 1, 1});
  Node* an = a.node().get();
  Node* on = out.get();
  const std::size_t per = s.sample();
  for (int n = 0; n < s.n; ++n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < per; ++i) acc += an->data[n * per + i];
    on->data[n] = static_cast<Real>(acc);
  }
  return finish(out, track, {a.node()}, [an, on, per] {
    Real* ga = an->grad_buffer();
    for (std::size_t n = 0; n < on->data.size(); ++n) {
      const Real g = on->grad[n];
      for (std::size_t i = 0; i < per; ++i) ga[n * per + i] += g;
    }
  });
}

// ---------------------------------------------------------------------------
// Convolution: im2col followed by a dense product.

namespace {

using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMat>;
using ConstRowMap = Eigen::Map<const RowMat>;

struct ConvGeometry {
  Shape in;
  int c_out, kh, kw, stride, pad, oh, ow;
  int k() const { return in.c * kh * kw; }
  int p() const { return oh * ow; }
  int cols() const { return in.n * p(); }
};

// cols[(ci, ky, kx), (n, oy, ox)]
void im2col(const ConvGeometry& g, const Real* x, Real* cols) {
  const int ncols = g.cols();
  const int plane = g.in.h * g.in.w;
  for (int ci = 0; ci < g.in.c; ++ci)
    for (int ky = 0; ky < g.kh; ++ky)
      for (int kx = 0; kx < g.kw; ++kx) {
        Real* row = cols + static_cast<std::size_t>((ci * g.kh + ky) * g.kw + kx) * ncols;
        for (int n = 0; n < g.in.n; ++n) {
          const Real* src = x + (static_cast<std::size_t>(n) * g.in.c + ci) * plane;
          Real* dst = row + static_cast<std::size_t>(n) * g.p();
          for (int oy = 0; oy < g.oh; ++oy) {
            const int iy = oy * g.stride + ky - g.pad;
            Real* drow = dst + oy * g.ow;
            if (iy < 0 || iy >= g.in.h) {
              std::fill(drow, drow + g.ow, Real(0));
              continue;
            }
            const Real* srow = src + iy * g.in.w;
            for (int ox = 0; ox < g.ow; ++ox) {
              const int ix = ox * g.stride + kx - g.pad;
              drow[ox] = (ix >= 0 && ix < g.in.w) ? srow[ix] : Real(0);
            }
          }
        }
      }
}

void col2im_add(const ConvGeometry& g, const Real* cols, Real* dx) {
  const int ncols = g.cols();
  const int plane = g.in.h * g.in.w;
  for (int ci = 0; ci < g.in.c; ++ci)
    for (int ky = 0; ky < g.kh; ++ky)
      for (int kx = 0; kx < g.kw; ++kx) {
        const Real* row = cols + static_cast<std::size_t>((ci * g.kh + ky) * g.kw + kx) * ncols;
        for (int n = 0; n < g.in.n; ++n) {
          Real* dst = dx + (static_cast<std::size_t>(n) * g.in.c + ci) * plane;
          const Real* src = row + static_cast<std::size_t>(n) * g.p();
          for (int oy = 0; oy < g.oh; ++oy) {
            const int iy = oy * g.stride + ky - g.pad;
            if (iy < 0 || iy >= g.in.h) continue;
            Real* drow = dst + iy * g.in.w;
            const Real* srow = src + oy * g.ow;
            for (int ox = 0; ox < g.ow; ++ox) {
              const int ix = ox * g.stride + kx - g.pad;
              if (ix >= 0 && ix < g.in.w) drow[ix] += srow[ox];
            }
          }
        }
      }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride,
              int padding) {
  require_defined(input, "conv2d");
  require_defined(kernel, "conv2d");
  const Shape& xs = input.shape();
  const Shape& ks = kernel.shape();
  if (stride < 1 || padding < 0) throw ShapeError("conv2d: stride must be positive and padding non-negative");
  if (ks.c != xs.c) {
    throw ShapeError("conv2d: input " + xs.str() + " does not match kernel " + ks.str() +
                     " (channel count)");
  }
  if (bias.defined() && !(bias.shape() == Shape{1, ks.n, 1, 1})) {
    throw ShapeError("conv2d: bias " + bias.shape().str() + " does not match kernel " + ks.str());
  }
  const int oh_num = xs.h + 2 * padding - ks.h;
  const int ow_num = xs.w + 2 * padding - ks.w;
  if (oh_num < 0 || ow_num < 0) {
    throw ShapeError("conv2d: kernel " + ks.str() + " larger than padded input " + xs.str());
  }
  ConvGeometry g{xs, ks.n, ks.h, ks.w, stride, padding, oh_num / stride + 1, ow_num / stride + 1};

  const bool track = tracking({&input, &kernel, &bias});
  auto cols = std::make_shared<std::vector<Real>>(static_cast<std::size_t>(g.k()) * g.cols());
  im2col(g, input.data().data(), cols->data());

  RowMat prod = ConstRowMap(kernel.data().data(), g.c_out, g.k()) *
                ConstRowMap(cols->data(), g.k(), g.cols());

  NodePtr out = new_node(Shape{xs.n, g.c_out, g.oh, g.ow});
  const int p = g.p();
  for (int n = 0; n < xs.n; ++n)
    for (int co = 0; co < g.c_out; ++co) {
      Real* dst = out->data.data() + (static_cast<std::size_t>(n) * g.c_out + co) * p;
      const Real* src = prod.data() + static_cast<std::size_t>(co) * g.cols() + n * p;
      const Real b = bias.defined() ? bias.data()[co] : Real(0);
      for (int i = 0; i < p; ++i) dst[i] = src[i] + b;
    }

  Node* xn = input.node().get();
  Node* kn = kernel.node().get();
  Node* bn = bias.defined() ? bias.node().get() : nullptr;
  Node* on = out.get();
  std::vector<NodePtr> inputs{input.node(), kernel.node()};
  if (bias.defined()) inputs.push_back(bias.node());
  return finish(out, track, std::move(inputs), [g, cols, xn, kn, bn, on] {
    const int p = g.p();
    RowMat grad_out(g.c_out, g.cols());
    for (int n = 0; n < g.in.n; ++n)
      for (int co = 0; co < g.c_out; ++co) {
        const Real* src = on->grad.data() + (static_cast<std::size_t>(n) * g.c_out + co) * p;
        std::copy(src, src + p, grad_out.data() + static_cast<std::size_t>(co) * g.cols() + n * p);
      }
    if (kn->requires_grad) {
      RowMap gk(kn->grad_buffer(), g.c_out, g.k());
      gk.noalias() += grad_out * ConstRowMap(cols->data(), g.k(), g.cols()).transpose();
    }
    if (bn != nullptr && bn->requires_grad) {
      Real* gb = bn->grad_buffer();
      for (int co = 0; co < g.c_out; ++co) {
        double acc = 0.0;
        for (int j = 0; j < g.cols(); ++j) acc += grad_out(co, j);
        gb[co] += static_cast<Real>(acc);
      }
    }
    if (xn->requires_grad) {
      RowMat dcols = ConstRowMap(kn->data.data(), g.c_out, g.k()).transpose() * grad_out;
      col2im_add(g, dcols.data(), xn->grad_buffer());
    }
  });
}

// ---------------------------------------------------------------------------
// Layout ops

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_defined(a, "concat_channels");
  require_defined(b, "concat_channels");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw ShapeError("concat_channels: incompatible shapes " + sa.str() + " and " + sb.str());
  }
  const bool track = tracking({&a, &b});
  NodePtr out = new_node(Shape{sa.n, sa.c + sb.c, sa.h, sa.w});
  const std::size_t pa = sa.sample();
  const std::size_t pb = sb.sample();
  Node* an = a.node().get();
  Node* bn = b.node().get();
  Node* on = out.get();
  for (int n = 0; n < sa.n; ++n) {
    std::copy_n(an->data.data() + n * pa, pa, on->data.data() + n * (pa + pb));
    std::copy_n(bn->data.data() + n * pb, pb, on->data.data() + n * (pa + pb) + pa);
  }
  return finish(out, track, {a.node(), b.node()}, [an, bn, on, pa, pb] {
    const int batch = an->shape.n;
    for (int n = 0; n < batch; ++n) {
      const Real* g = on->grad.data() + n * (pa + pb);
      if (an->requires_grad) {
        Real* ga = an->grad_buffer() + n * pa;
        for (std::size_t i = 0; i < pa; ++i) ga[i] += g[i];
      }
      if (bn->requires_grad) {
        Real* gb = bn->grad_buffer() + n * pb;
        for (std::size_t i = 0; i < pb; ++i) gb[i] += g[pa + i];
      }
    }
  });
}

Tensor slice_channels(const Tensor& a, int begin, int end) {
  require_defined(a, "slice_channels");
  const Shape& s = a.shape();
  if (begin < 0 || end > s.c || begin >= end) {
    throw ShapeError("slice_channels: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") invalid for shape " + s.str());
  }
  const bool track = tracking({&a});
  NodePtr out = new_node(Shape{s.n, end - begin, s.h, s.w});
  const std::size_t plane = s.plane();
  const std::size_t len = plane * (end - begin);
  const std::size_t off = plane * begin;
  const std::size_t per = s.sample();
  Node* an = a.node().get();
  Node* on = out.get();
  for (int n = 0; n < s.n; ++n)
    std::copy_n(an->data.data() + n * per + off, len, on->data.data() + n * len);
  return finish(out, track, {a.node()}, [an, on, len, off, per] {
    Real* ga = an->grad_buffer();
    for (int n = 0; n < an->shape.n; ++n) {
      const Real* g = on->grad.data() + n * len;
      Real* dst = ga + n * per + off;
      for (std::size_t i = 0; i < len; ++i) dst[i] += g[i];
    }
  });
}

namespace {

// Index maps between (N,C,H,W) and its squeezed (N,4C,H/2,W/2) layout.
std::vector<std::size_t> squeeze_index(const Shape& s) {
  std::vector<std::size_t> idx(s.numel());  // idx[out] = in
  const int oh = s.h / 2, ow = s.w / 2;
  std::size_t o = 0;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx)
          for (int i = 0; i < oh; ++i)
            for (int j = 0; j < ow; ++j, ++o)
              idx[o] = ((static_cast<std::size_t>(n) * s.c + c) * s.h + 2 * i + dy) * s.w + 2 * j + dx;
  return idx;
}

// out[k] = in[map[k]] when gather_forward, else out[map[k]] = in[k].
Tensor permute(const Tensor& a, const Shape& out_shape, std::shared_ptr<std::vector<std::size_t>> map,
               bool gather_forward) {
  const bool track = tracking({&a});
  NodePtr out = new_node(out_shape);
  Node* an = a.node().get();
  Node* on = out.get();
  const auto& m = *map;
  if (gather_forward) {
    for (std::size_t k = 0; k < m.size(); ++k) on->data[k] = an->data[m[k]];
  } else {
    for (std::size_t k = 0; k < m.size(); ++k) on->data[m[k]] = an->data[k];
  }
  return finish(out, track, {a.node()}, [an, on, map, gather_forward] {
    Real* ga = an->grad_buffer();
    const auto& m = *map;
    if (gather_forward) {
      for (std::size_t k = 0; k < m.size(); ++k) ga[m[k]] += on->grad[k];
    } else {
      for (std::size_t k = 0; k < m.size(); ++k) ga[k] += on->grad[m[k]];
    }
  });
}

}  // namespace

Tensor space_to_depth(const Tensor& x) {
  require_defined(x, "space_to_depth");
  const Shape& s = x.shape();
  if (s.h % 2 != 0 || s.w % 2 != 0) {
    throw ShapeError("squeeze: spatial size of " + s.str() + " must be even");
  }
  auto map = std::make_shared<std::vector<std::size_t>>(squeeze_index(s));
  return permute(x, Shape{s.n, 4 * s.c, s.h / 2, s.w / 2}, map, true);
}

Tensor depth_to_space(const Tensor& x) {
  require_defined(x, "depth_to_space");
  const Shape& s = x.shape();
  if (s.c % 4 != 0) throw ShapeError("unsqueeze: channel count of " + s.str() + " must be divisible by 4");
  const Shape full{s.n, s.c / 4, s.h * 2, s.w * 2};
  auto map = std::make_shared<std::vector<std::size_t>>(squeeze_index(full));
  return permute(x, full, map, false);
}

// ---------------------------------------------------------------------------

Tensor logabsdet(const Tensor& weight) {
  require_defined(weight, "logabsdet");
  const Shape& s = weight.shape();
  if (s.n != s.c || s.h != 1 || s.w != 1) {
    throw ShapeError("logabsdet: expected a CxCx1x1 weight, got " + s.str());
  }
  const int c = s.c;
  std::vector<double> vals(weight.data().begin(), weight.data().end());
  const linalg::Matrix m(c, std::move(vals));
  const double value = linalg::log_abs_det(m);

  const bool track = tracking({&weight});
  NodePtr out = new_node(Shape{});
  out->data[0] = static_cast<Real>(value);
  Node* wn = weight.node().get();
  Node* on = out.get();
  return finish(out, track, {weight.node()}, [wn, on, m, c] {
    const linalg::Matrix inv = linalg::invert(m);
    Real* gw = wn->grad_buffer();
    const double g = on->grad[0];
    for (int i = 0; i < c; ++i)
      for (int j = 0; j < c; ++j) gw[i * c + j] += static_cast<Real>(g * inv(j, i));
  });
}

Tensor gather(const Tensor& table, std::span<const int> index) {
  require_defined(table, "gather");
  const Shape& s = table.shape();
  if (index.empty()) throw ShapeError("gather: empty index list");
  for (int i : index) {
    if (i < 0 || i >= s.n) {
      throw IndexError("gather: index " + std::to_string(i) + " outside [0, " + std::to_string(s.n) + ")");
    }
  }
  const bool track = tracking({&table});
  const std::size_t per = s.sample();
  NodePtr out = new_node(Shape{static_cast<int>(index.size()), s.c, s.h, s.w});
  Node* tn = table.node().get();
  Node* on = out.get();
  std::vector<int> rows(index.begin(), index.end());
  for (std::size_t k = 0; k < rows.size(); ++k)
    std::copy_n(tn->data.data() + rows[k] * per, per, on->data.data() + k * per);
  return finish(out, track, {table.node()}, [tn, on, rows, per] {
    Real* gt = tn->grad_buffer();
    for (std::size_t k = 0; k < rows.size(); ++k) {
      Real* dst = gt + rows[k] * per;
      const Real* g = on->grad.data() + k * per;
      for (std::size_t i = 0; i < per; ++i) dst[i] += g[i];
    }
  });
}

Tensor repeat_batch(const Tensor& a, int n) {
  require_defined(a, "repeat_batch");
  if (a.shape().n != 1) throw ShapeError("repeat_batch: input batch must be 1, got " + a.shape().str());
  std::vector<int> zeros(static_cast<std::size_t>(n), 0);
  return gather(a, zeros);
}

// ---------------------------------------------------------------------------

bool all_finite(std::span<const Real> values) {
  return std::all_of(values.begin(), values.end(), [](Real v) { return std::isfinite(v); });
}

Real max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!(a.shape() == b.shape())) {
    throw ShapeError("max_abs_diff: shapes " + a.shape().str() + " and " + b.shape().str());
  }
  Real worst = 0;
  for (std::size_t i = 0; i < a.numel(); ++i)
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  return worst;
}

}  // namespace NFVG_PRECISION_NS
}  // namespace nfvg
