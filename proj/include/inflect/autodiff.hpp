#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "inflect/rng.hpp"
#include "inflect/tensor.hpp"

namespace inflect {

/// A named, persistent array owned by a model. When trainable, backward
/// accumulates into `value.grad()`; frozen parameters never receive a buffer
/// from the graph.
struct Param {
  std::string name;
  Tensor value;
  bool trainable = true;

  Index size() const { return value.size(); }
};

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

  Var() = default;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  bool valid() const { return graph_ != nullptr && id_ != npos; }
  Graph& graph() const;
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = npos;
};

/// Tape for reverse-mode differentiation. Nodes are appended in execution
/// order, so the tape is always topologically sorted.
///
/// A node receives a gradient during backward iff it is tapped, is a trainable
/// parameter or a grad-requiring input, or depends on such a node. Tapped
/// nodes therefore get a gradient even when nothing below them is trainable.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  Var input(Tensor value, bool requires_grad = true);
  Var param(Param& p);

  void tap(Var v);
  bool tapped(Var v) const;

  void backward(Var loss);
  bool backward_done() const { return backward_done_; }

  /// Gradient of a tapped node or grad-requiring input after backward.
  Tensor grad(Var v) const;

  bool stochastic() const { return stochastic_; }
  void mark_stochastic() { stochastic_ = true; }
  std::size_t size() const { return nodes_.size(); }

  // -- op-author interface -------------------------------------------------
  Var push(const char* op, Tensor value, std::vector<std::size_t> inputs, BackwardFn fn);
  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  const char* op(std::size_t id) const { return nodes_.at(id).op; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_.at(id).inputs; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  Tensor::MatrixMap grad_matrix(std::size_t id) { return nodes_[id].value.grad_matrix(); }
  Vector<double>& grad_vector(std::size_t id) { return nodes_[id].value.grad(); }

 private:
  struct Node {
    const char* op = "";
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Param* param = nullptr;
    bool requires_grad = false;
    bool tapped = false;
    bool needs_grad = false;
  };

  Var leaf(const char* op, Tensor value, bool requires_grad, Param* param);

  std::deque<Node> nodes_;
  bool backward_done_ = false;
  bool stochastic_ = false;
};

// -- primitive ops ------------------------------------------------------------
// Shapes follow the "last dimension is features" convention: leading
// dimensions are collapsed into rows.

/// y = x·Wᵀ (+ b); x [..., in], W [out, in], b [out].
Var linear(Var x, Var w);
Var linear(Var x, Var w, Var b);
/// Plain 2-D product a[m,k]·b[k,n].
Var matmul(Var a, Var b);
/// Per-block product over identical leading dims: a[..., m, k]·b[..., k, n],
/// or a·bᵀ with b[..., n, k] when `transpose_b` is set.
Var batched_matmul(Var a, Var b, bool transpose_b = false);

Var add(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double c, Var a) { return scale(a, c); }

Var sigmoid(Var x);
Var tanh(Var x);
Var relu(Var x);
/// Exact (erf) GELU.
Var gelu(Var x);
/// Softmax over the last dimension.
Var softmax(Var x);
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
/// Inverted dropout. Returns `x` unchanged when p == 0.
Var dropout(Var x, double p, Rng& rng);
/// Rows of `table` [V, d] selected by `ids`; result [ids.size(), d].
Var embedding(Var table, std::span<const int> ids);
/// Mean softmax cross-entropy over the batch; logits [B, N].
Var cross_entropy(Var logits, std::span<const int> labels);

Var sum(Var x);
Var mean(Var x);
Var sum_squares(Var x);
Var reshape(Var x, Shape shape);
/// [a, b, c, d] -> [a, c, b, d]
Var swap_axes_12(Var x);
/// Selected rows of the 2-D view of `x`; result [rows.size(), cols].
Var select_rows(Var x, std::vector<Index> rows);
/// Same value, no gradient flows through.
Var detach(Var x);

}  // namespace inflect
