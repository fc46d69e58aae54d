// SPDX-License-Identifier: Apache-2.0
//
// Dense NCHW tensors with define-by-run reverse-mode differentiation.
//
// A Tensor is a shared handle to a node holding data, an optional gradient
// accumulator and, when produced by a recorded op, its position on the active
// Tape. Ops record themselves only while a TapeScope is open and at least one
// input requires gradients; outside a scope everything runs as plain numerics.
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "nfvg/errors.hpp"

namespace nfvg {
inline namespace NFVG_PRECISION_NS {

#ifdef NFVG_DOUBLE
using Real = double;
#else
using Real = float;
#endif

struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  std::size_t sample() const { return static_cast<std::size_t>(c) * h * w; }
  std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;
};

class Tape;

namespace detail {

struct Node {
  Shape shape;
  std::vector<Real> data;
  std::vector<Real> grad;  // empty until something is accumulated
  bool requires_grad = false;
  bool leaf = true;
  Tape* tape = nullptr;  // set for recorded (non-leaf) nodes

  Real* grad_buffer();  // allocates zeros on first use
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Real fill = 0);
  Tensor(Shape shape, std::vector<Real> values);

  static Tensor zeros(Shape shape) { return Tensor(shape, Real(0)); }
  static Tensor scalar(Real v) { return Tensor(Shape{}, v); }
  // Leaf tensor that accumulates gradients.
  static Tensor parameter(Shape shape, std::vector<Real> values);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t numel() const { return shape().numel(); }

  std::span<const Real> data() const;
  // Writes are only meaningful on leaves; recorded nodes hold values the
  // backward pass may still read.
  std::span<Real> mutable_data();
  Real item() const;
  Real at(int n, int c, int h, int w) const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  std::span<const Real> grad() const;
  std::span<Real> mutable_grad();
  void zero_grad();

  // Copy of the values with no gradient history.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

  // Construction helper for ops.
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

// Ordered record of the ops executed since the last reset. backward() walks
// it strictly in reverse recording order.
class Tape {
 public:
  using NodePtr = std::shared_ptr<detail::Node>;
  using BackwardFn = std::function<void()>;

  Tape() = default;
  ~Tape() { clear(); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(NodePtr output, std::vector<NodePtr> inputs, BackwardFn fn);
  // Seeds d(loss)/d(loss) = 1, runs every rule, then clears the tape.
  void backward(const Tensor& loss);
  void clear();
  std::size_t size() const { return records_.size(); }

  // Tape that ops record into on this thread, or nullptr.
  static Tape* active();

 private:
  struct Record {
    NodePtr output;
    std::vector<NodePtr> inputs;
    BackwardFn fn;
  };
  std::vector<Record> records_;
};

class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Convenience for a single forward/backward: records under a fresh tape.
void backward(const Tensor& loss);

// ---------------------------------------------------------------------------
// Ops. Binary elementwise ops accept either identical shapes or a per-channel
// right operand of shape (1, C, 1, 1).

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, Real s);
Tensor add_scalar(const Tensor& a, Real s);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);  // DomainError on non-positive input
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor square(const Tensor& a);

// Reductions accumulate in double.
Tensor sum(const Tensor& a);             // -> (1,1,1,1)
Tensor sum_per_sample(const Tensor& a);  // -> (N,1,1,1)

// kernel (C_out, C_in, kH, kW); bias (1, C_out, 1, 1) or undefined.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int stride, int padding);

Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor slice_channels(const Tensor& a, int begin, int end);

// (N,C,H,W) -> (N,4C,H/2,W/2); output channel c*4 + dy*2 + dx.
Tensor space_to_depth(const Tensor& x);
Tensor depth_to_space(const Tensor& x);

// log|det W| for W of shape (C, C, 1, 1); d/dW = W^{-T}.
Tensor logabsdet(const Tensor& weight);

// Rows of table along the batch dimension: (len(index), C, H, W).
Tensor gather(const Tensor& table, std::span<const int> index);

// Same values repeated n times along the batch axis; input must have N = 1.
Tensor repeat_batch(const Tensor& a, int n);

// ---------------------------------------------------------------------------

bool all_finite(std::span<const Real> values);
Real max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace NFVG_PRECISION_NS
}  // namespace nfvg
