#pragma once

// Reverse-mode differentiation over Tensor-valued nodes.
//
// A Tape records every operation of one forward pass. Parameters enter as
// leaves bound to caller-owned value/gradient tensors; backward() walks the
// tape in reverse and accumulates into those gradient tensors. A tape is
// single-use and single-threaded; run one tape per example to parallelize.

#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "uaul/tensor.hpp"

namespace uaul::ad {

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Var {
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
  std::size_t id = npos;
  bool valid() const { return id != npos; }
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Var constant(Tensor value);
  /// Leaf bound to an external parameter. `grad` may be null for a frozen
  /// parameter; otherwise it must match the value shape and outlive the tape.
  Var param(const Tensor& value, Tensor* grad);
  /// Record the output of an operation. `requires_grad` should be true iff
  /// any input requires a gradient; `backward` reads grad(self) and
  /// accumulates into the inputs' gradients.
  Var record(Tensor value, bool requires_grad, BackwardFn backward);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  /// Gradient buffer of a node, allocated as zeros on first access.
  Tensor& grad(Var v);
  bool has_grad(Var v) const;

  /// Seeds d(loss)/d(loss) = 1 and propagates. Throws NonFiniteLoss before
  /// touching any gradient if the loss value is NaN or infinite.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    const Tensor* ext_value = nullptr;
    Tensor* ext_grad = nullptr;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

// Operations. Shapes follow the Tensor row-major convention.
Var matmul(Tape& t, Var a, Var b);              // a * b
Var matmul_nt(Tape& t, Var a, Var b);           // a * b^T
Var add(Tape& t, Var a, Var b);                 // same shape
Var add_row(Tape& t, Var a, Var bias);          // bias is 1 x cols, broadcast over rows
Var add_const(Tape& t, Var a, const Tensor& c); // c has a's shape
Var scale(Tape& t, Var a, double s);
Var relu(Tape& t, Var a);
Var layer_norm(Tape& t, Var x, Var gamma, Var beta, double eps = 1e-5);
/// Gathers rows of `table` (vocab x d) for each id.
Var embed(Tape& t, Var table, std::span<const int> ids);
/// Multi-head attention of `q` rows over `k`/`v` rows. With `causal`, query
/// row i only sees key rows 0..i.
Var attention(Tape& t, Var q, Var k, Var v, std::size_t heads, bool causal);
/// Sum of all entries, as a 1 x 1 tensor.
Var sum(Tape& t, Var a);
/// Token-level negative log-likelihood summed over rows:
/// -sum_r log softmax(logits_r)[targets_r], each log floored at log(1e-12).
Var cross_entropy(Tape& t, Var logits, std::span<const int> targets);

/// Floor applied inside every logarithm of the training objectives.
inline constexpr double kLogEpsilon = 1e-12;

}  // namespace uaul::ad
