#pragma once

#include "posrep/rng.hpp"
#include "posrep/tensor.hpp"

#include <functional>
#include <span>
#include <vector>

namespace posrep {

// Handle to a node of a Graph. Only meaningful for the graph that created it.
struct Var {
  Index id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape. Nodes are appended in evaluation order, so the reverse of
// creation order is a valid topological order and backward() is deterministic.
template <typename Scalar>
class Graph {
 public:
  using Mat = Matrix<Scalar>;
  using BackwardFn = std::function<void(Graph&, Index self)>;

  explicit Graph(bool training = false) : training_(training) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool training() const { return training_; }

  // Leaf that never receives a gradient.
  Var constant(Mat value);
  // Leaf bound to a parameter; backward() accumulates into param.grad().
  // The graph refers to the parameter's storage, which must outlive it.
  Var parameter(Tensor<Scalar>& param);
  // Read-only view of a parameter that takes no gradient.
  Var frozen(const Tensor<Scalar>& param);
  // Interior node. `fn` is run during backward only if the node received a gradient.
  Var record(Mat value, bool requires_grad, BackwardFn fn);

  const Mat& value(Var v) const {
    const Node& n = nodes_.at(v.id);
    return n.ref != nullptr ? *n.ref : n.value;
  }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  bool has_grad(Var v) const { return nodes_.at(v.id).grad.size() != 0; }

  // Gradient buffer of `v`, allocated as zeros on first touch.
  Mat& grad(Var v);
  const Mat& grad_or_empty(Var v) const { return nodes_.at(v.id).grad; }

  // Seeds d(root)/d(root) = 1 on a 1x1 root and propagates to every node.
  void backward(Var root);

  Index size() const { return static_cast<Index>(nodes_.size()); }

 private:
  struct Node {
    Mat value;
    const Mat* ref = nullptr;
    Mat grad;
    bool requires_grad = false;
    Tensor<Scalar>* param = nullptr;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  bool training_;
};

// ---- differentiable ops ---------------------------------------------------

template <typename Scalar>
Var matmul(Graph<Scalar>& g, Var a, Var b);

template <typename Scalar>
Var add(Graph<Scalar>& g, Var a, Var b);

template <typename Scalar>
Var mul(Graph<Scalar>& g, Var a, Var b);

template <typename Scalar>
Var scale(Graph<Scalar>& g, Var x, Scalar s);

// x[r, :] + bias[0, :] for every row r.
template <typename Scalar>
Var add_row(Graph<Scalar>& g, Var x, Var bias);

// x + c where c is a constant of the same shape.
template <typename Scalar>
Var add_constant(Graph<Scalar>& g, Var x, const Matrix<Scalar>& c);

// x * W + b, the affine map used by every projection.
template <typename Scalar>
Var linear(Graph<Scalar>& g, Var x, Var weight, Var bias);

template <typename Scalar>
Var relu(Graph<Scalar>& g, Var x);

// Inverted dropout. Identity when rate == 0 or the graph is not training.
template <typename Scalar>
Var dropout(Graph<Scalar>& g, Var x, double rate, Rng& rng);

template <typename Scalar>
Var softmax_lastdim(Graph<Scalar>& g, Var x);

template <typename Scalar>
Var layer_norm(Graph<Scalar>& g, Var x, Var gamma, Var beta, Scalar eps = Scalar(1e-5));

// Rows of `table` selected by ids, times `scale`.
template <typename Scalar>
Var embedding(Graph<Scalar>& g, Var table, std::span<const int> ids, Scalar scale);

template <typename Scalar>
Var sum(Graph<Scalar>& g, Var x);

// Mean label-smoothed cross-entropy over rows whose gold id differs from pad_id.
template <typename Scalar>
Var cross_entropy_smoothed(Graph<Scalar>& g, Var logits, std::span<const int> gold, double epsilon,
                           int pad_id);

}  // namespace posrep
