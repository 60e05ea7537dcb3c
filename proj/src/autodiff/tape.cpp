#include "urmf/autodiff/tape.hpp"

#include <stdexcept>

namespace urmf::ad {

Parameter::Parameter(std::string name, Tensor value)
    : name(std::move(name)), value(std::move(value)), grad(this->value.shape()) {}

const Tensor& Var::value() const { return tape().node(*this).value(); }

bool Var::requires_grad() const { return tape().node(*this).requires_grad; }

Tape& Var::tape() const {
  if (!tape_) throw std::logic_error("use of an unbound Var");
  return *tape_;
}

const Tape::Node& Tape::node(const Var& v) const {
  if (v.tape_ != this) throw std::logic_error("Var belongs to a different tape");
  if (v.generation_ != generation_ || v.id_ >= nodes_.size()) {
    throw std::logic_error("stale Var used after Tape::reset()");
  }
  return nodes_[v.id_];
}

Tape::Node& Tape::node(const Var& v) {
  return const_cast<Node&>(static_cast<const Tape*>(this)->node(v));
}

Var Tape::constant(Tensor value) {
  Node& n = nodes_.emplace_back();
  n.owned = std::move(value);
  return Var(this, nodes_.size() - 1, generation_);
}

Var Tape::leaf(Parameter& param) {
  if (auto it = leaves_.find(&param); it != leaves_.end()) {
    return Var(this, it->second, generation_);
  }
  Node& n = nodes_.emplace_back();
  n.borrowed = &param.value;
  n.requires_grad = grad_enabled_;
  n.sink = grad_enabled_ ? &param : nullptr;
  const std::size_t id = nodes_.size() - 1;
  leaves_.emplace(&param, id);
  return Var(this, id, generation_);
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  bool needs = false;
  for (const Var& in : inputs) needs = needs || node(in).requires_grad;
  Node& n = nodes_.emplace_back();
  n.owned = std::move(value);
  if (needs) {
    n.requires_grad = true;
    n.parents.reserve(inputs.size());
    for (const Var& in : inputs) n.parents.push_back(in.id_);
    n.backward = std::move(backward);
  }
  return Var(this, nodes_.size() - 1, generation_);
}

void Tape::backward(Var loss) {
  if (backward_done_) {
    throw std::logic_error("backward() already ran on this tape; reset() before reuse");
  }
  Node& root = node(loss);
  if (root.value().numel() != 1) {
    throw DimensionError("backward() needs a scalar loss, got shape " +
                         shape_to_string(root.value().shape()));
  }
  backward_done_ = true;
  if (!root.requires_grad) return;
  root.grad = Tensor::filled(root.value().shape(), 1.0);
  root.has_grad = true;

  std::vector<const Tensor*> inputs;
  std::vector<Tensor*> grads;
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.has_grad) continue;
    if (n.sink) {
      auto dst = n.sink->grad.values();
      auto src = n.grad.values();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
      continue;
    }
    if (!n.backward) continue;
    inputs.clear();
    grads.clear();
    for (std::size_t p : n.parents) {
      Node& parent = nodes_[p];
      inputs.push_back(&parent.value());
      if (parent.requires_grad) {
        if (!parent.has_grad) {
          parent.grad = Tensor(parent.value().shape());
          parent.has_grad = true;
        }
        grads.push_back(&parent.grad);
      } else {
        grads.push_back(nullptr);
      }
    }
    n.backward(BackwardArgs{inputs, n.value(), n.grad, grads});
  }
}

bool Tape::has_grad(Var v) const { return node(v).has_grad; }

const Tensor& Tape::grad(Var v) const {
  const Node& n = node(v);
  if (!n.has_grad) throw std::logic_error("gradient not materialized for this node");
  return n.grad;
}

void Tape::reset() {
  nodes_.clear();
  leaves_.clear();
  ++generation_;
  backward_done_ = false;
}

}  // namespace urmf::ad
