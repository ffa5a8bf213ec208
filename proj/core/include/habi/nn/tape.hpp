#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "habi/nn/types.hpp"

namespace habi::nn {

/// Reverse-mode gradient record over dense matrices.
///
/// Every op appends a node holding its value and a closure that pushes the
/// node's incoming gradient onto its inputs. `backward()` walks the nodes in
/// reverse insertion order, which is a valid topological order because a
/// node can only reference nodes created before it. A tape is built for one
/// loss evaluation and then discarded.
///
/// Batched values use one column per sample.
template <class Real>
class Tape {
 public:
  using Mat = Matrix<Real>;

  /// Handle to a node on this tape.
  struct Var {
    std::size_t id = 0;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// A value that never receives gradient.
  Var constant(Mat value);
  /// Leaf whose gradient is accumulated into `*grad_sink` by `backward()`.
  /// `value` must outlive the tape; it is not copied.
  Var parameter(const Mat& value, Mat* grad_sink);
  /// Column-vector leaf (biases). The value is copied onto the tape.
  Var parameter(const Vector<Real>& value, Vector<Real>* grad_sink);
  /// Same value as `x`, with the gradient path cut.
  Var detach(Var x);

  Var matmul(Var a, Var b);
  /// x + b broadcast over columns; b is a column vector.
  Var add_bias(Var x, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  /// Elementwise product.
  Var mul(Var a, Var b);
  /// Elementwise quotient.
  Var div(Var a, Var b);
  Var scale(Var x, Real factor);
  Var add_scalar(Var x, Real offset);

  Var relu(Var x);
  Var tanh(Var x);
  /// log(1 + exp(x)), evaluated without overflow.
  Var softplus(Var x);
  Var exp(Var x);
  Var log(Var x);
  Var square(Var x);
  Var sqrt(Var x);

  /// Sum of all entries, 1x1.
  Var sum(Var x);
  /// Mean of all entries, 1x1.
  Var mean(Var x);
  /// Column sums, 1xB.
  Var col_sum(Var x);
  /// Stack a on top of b (equal column counts).
  Var vcat(Var a, Var b);

  const Mat& value(Var v) const;
  /// Scalar value of a 1x1 node.
  Real scalar(Var v) const;
  /// Gradient of the last `backward()` with respect to `v` (zero-sized if none reached it).
  const Mat& grad(Var v) const;

  /// Propagate d(loss)/d(node) to every node and flush parameter gradients
  /// into their sinks. Throws UsageError unless `loss` is 1x1.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat owned;
    const Mat* external = nullptr;
    Mat grad;
    Mat* sink = nullptr;
    Vector<Real>* vec_sink = nullptr;
    bool needs_grad = false;
    std::function<void(Tape&, const Mat&)> push;

    const Mat& value() const { return external != nullptr ? *external : owned; }
  };

  Var emit(Mat value, bool needs_grad, std::function<void(Tape&, const Mat&)> push);
  void accumulate(Var target, const Mat& g);
  bool needs(Var v) const { return nodes_[v.id].needs_grad; }
  void check(Var v) const;

  std::vector<Node> nodes_;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace habi::nn
