#include "inflect/autodiff.hpp"

namespace inflect {

Graph& Var::graph() const {
  if (!graph_) throw StateError("var: not bound to a graph");
  return *graph_;
}

const Tensor& Var::value() const { return graph().value(id_); }

Var Graph::leaf(const char* op, Tensor value, bool requires_grad, Param* param) {
  if (!value.all_finite()) throw NumericError(std::string(op) + ": non-finite leaf value");
  Node n;
  n.op = op;
  n.value = std::move(value);
  n.value.drop_grad();
  n.param = param;
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::constant(Tensor value) { return leaf("constant", std::move(value), false, nullptr); }

Var Graph::input(Tensor value, bool requires_grad) { return leaf("input", std::move(value), requires_grad, nullptr); }

Var Graph::param(Param& p) { return leaf("param", p.value, p.trainable, &p); }

Var Graph::push(const char* op, Tensor value, std::vector<std::size_t> inputs, BackwardFn fn) {
  if (backward_done_) throw StateError(std::string(op) + ": graph already differentiated");
  if (!value.all_finite()) throw NumericError(std::string(op) + ": produced non-finite values");
  for (std::size_t in : inputs) {
    if (in >= nodes_.size()) throw StateError(std::string(op) + ": input from another graph");
  }
  Node n;
  n.op = op;
  n.value = std::move(value);
  n.inputs = std::move(inputs);
  n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

void Graph::tap(Var v) {
  if (&v.graph() != this) throw InvalidInput("tap: var belongs to another graph");
  nodes_.at(v.id()).tapped = true;
}

bool Graph::tapped(Var v) const { return nodes_.at(v.id()).tapped; }

void Graph::backward(Var loss) {
  if (nodes_.empty() || !loss.valid() || &loss.graph() != this || loss.id() >= nodes_.size()) {
    throw StateError("backward: no forward pass recorded for this loss");
  }
  if (backward_done_) throw StateError("backward: already run on this graph");
  Node& root = nodes_[loss.id()];
  if (root.value.size() != 1) throw InvalidInput("backward: loss must be a scalar");

  const std::size_t last = loss.id();
  for (std::size_t i = 0; i <= last; ++i) {
    Node& n = nodes_[i];
    bool needs = n.tapped || n.requires_grad;
    for (std::size_t in : n.inputs) needs = needs || nodes_[in].needs_grad;
    n.needs_grad = needs;
  }
  root.needs_grad = true;
  for (std::size_t i = 0; i <= last; ++i) {
    if (nodes_[i].needs_grad) nodes_[i].value.ensure_grad();
  }
  root.value.grad()[0] = 1.0;

  for (std::size_t i = last + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.needs_grad && n.backward) n.backward(*this, i);
  }

  for (std::size_t i = 0; i <= last; ++i) {
    Node& n = nodes_[i];
    if (n.param && n.param->trainable && n.needs_grad) {
      n.param->value.ensure_grad() += n.value.grad();
    }
  }
  backward_done_ = true;
}

Tensor Graph::grad(Var v) const {
  const Node& n = nodes_.at(v.id());
  if (!backward_done_) throw StateError("grad: backward has not run");
  if (!n.tapped && !n.requires_grad) throw StateError(std::string("grad: node '") + n.op + "' was not tapped");
  if (!n.value.has_grad()) throw StateError("grad: node has no gradient (not on the loss path)");
  return Tensor(n.value.shape(), n.value.grad());
}

}  // namespace inflect
