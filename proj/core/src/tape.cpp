#include "pathohr/numeric/tape.hpp"

#include "pathohr/error.hpp"

namespace pathohr::ad {

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), std::nullopt, nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(Matrix value) {
  nodes_.push_back(Node{std::move(value), std::nullopt, nullptr, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, std::initializer_list<Var> parents, BackwardFn fn) {
  bool tracked = false;
  for (const Var& p : parents) tracked = tracked || nodes_[p.id()].requires_grad;
  nodes_.push_back(Node{std::move(value), std::nullopt, tracked ? std::move(fn) : nullptr, tracked});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, const std::vector<Var>& parents, BackwardFn fn) {
  bool tracked = false;
  for (const Var& p : parents) tracked = tracked || nodes_[p.id()].requires_grad;
  nodes_.push_back(Node{std::move(value), std::nullopt, tracked ? std::move(fn) : nullptr, tracked});
  return Var(this, nodes_.size() - 1);
}

Matrix Tape::grad(Var v) const {
  const Node& node = nodes_[v.id()];
  if (node.grad) return *node.grad;
  return Matrix(node.value.rows(), node.value.cols());
}

Matrix* Tape::grad_slot(Var v) {
  Node& node = nodes_[v.id()];
  if (!node.requires_grad) return nullptr;
  if (!node.grad) node.grad.emplace(node.value.rows(), node.value.cols());
  return &*node.grad;
}

void Tape::backward(Var output) {
  if (output.tape_ != this) throw Error("Tape::backward: variable belongs to another tape");
  for (Node& node : nodes_) node.grad.reset();
  Node& out = nodes_[output.id()];
  if (!out.requires_grad) return;
  out.grad.emplace(out.value.rows(), out.value.cols(), 1.0);
  for (std::size_t id = output.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (node.backward && node.grad) node.backward(*this, id);
  }
}

}  // namespace pathohr::ad
