#pragma once

#include "promptcap/core.hpp"
#include "promptcap/rng.hpp"

#include <array>
#include <deque>
#include <functional>
#include <span>
#include <vector>

namespace promptcap {

// A trainable (or frozen) leaf. Two-dimensional: vectors are 1 x n rows.
struct Tensor {
  Matrix value;
  Matrix grad;  // empty until a backward pass touches it
  bool requires_grad = true;

  Tensor() = default;
  explicit Tensor(Matrix v, bool trainable = true) : value(std::move(v)), requires_grad(trainable) {}

  std::array<Index, 2> shape() const { return {value.rows(), value.cols()}; }
  Index size() const { return value.size(); }
  bool has_grad() const { return grad.size() != 0; }
  void zero_grad() { grad.resize(0, 0); }
};

class Graph;

// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  const Matrix& grad() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  int id() const { return id_; }
  Graph& graph() const { return *graph_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* g, int id) : graph_(g), id_(id) {}

  Graph* graph_ = nullptr;
  int id_ = -1;
};

// Tape of operation records in creation (= topological) order. Single owner;
// backward visits each node exactly once, newest first.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, int self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Matrix value);
  // Leaf owning its value; its gradient is read back through Var::grad().
  Var input(Matrix value, bool requires_grad = true);
  // Leaf bound to a Tensor; backward accumulates into tensor.grad.
  Var param(Tensor& tensor);
  // Read-only view of a tensor, no gradient tracking.
  Var frozen(const Tensor& tensor);

  // Seeds d(output)/d(output) = 1; output must be 1 x 1.
  void backward(Var output);

  std::size_t size() const { return nodes_.size(); }

  // Op-implementation interface.
  Var record(Matrix value, std::vector<int> inputs, BackwardFn fn);
  const Matrix& value(int id) const { return nodes_[id].value(); }
  const Matrix& grad(int id) const { return nodes_[id].grad; }
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }
  // Adds `delta` into the gradient of node `id` if it tracks gradients.
  template <typename Derived>
  void accumulate(int id, const Eigen::MatrixBase<Derived>& delta) {
    Node& n = nodes_[id];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) {
      n.grad = delta;
    } else {
      n.grad += delta;
    }
  }

 private:
  struct Node {
    Matrix own;
    const Matrix* external = nullptr;
    Matrix grad;
    std::vector<int> inputs;
    BackwardFn backward;
    Tensor* sink = nullptr;
    bool needs_grad = false;

    const Matrix& value() const { return external ? *external : own; }
  };

  Var push(Node node);

  // deque: references to node values stay valid while the tape grows
  std::deque<Node> nodes_;
};

// Differentiable operations. All gradients are checked against central finite
// differences in the test suite.
Var matmul(Var a, Var b);
// Elementwise sum; `b` may also be a 1 x n row broadcast over the rows of `a`.
Var add(Var a, Var b);
Var scale(Var a, real factor);
Var relu(Var a);
Var gelu(Var a);
Var layer_norm(Var x, Var gain, Var bias, real eps = real(1e-5));
Var softmax_cross_entropy_smoothed(Var logits, std::span<const int> targets, real smoothing,
                                   int ignore_index);
// softmax(q k^T / sqrt(d) with masked entries at -inf) v. mask is Lq x Lk.
Var attention(Var q, Var k, Var v, const Mask& mask);
Var embedding_lookup(Var table, std::span<const int> ids);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(Var a, Index start, Index count);
Var slice_cols(Var a, Index start, Index count);
Var mean_rows(Var a);
// Inverted dropout. Identity when !training or rate == 0.
Var dropout(Var a, real rate, bool training, Rng& rng);

// Row-wise log-softmax of a plain matrix (no graph).
Matrix log_softmax_rows(const Matrix& logits);

}  // namespace promptcap
