#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "urmf/autodiff/tensor.hpp"

namespace urmf::ad {

// A trainable tensor living outside any tape. `grad` is always materialized
// (same shape as `value`) and accumulates across backward passes until
// zero_grad() is called.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter(std::string name, Tensor value);
  void zero_grad() { grad.fill(0.0); }
};

class Tape;

// Lightweight handle to a node on a Tape. Handles go stale when the tape is
// reset; using a stale handle throws.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t numel() const { return value().numel(); }
  bool requires_grad() const;
  Tape& tape() const;
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id, std::uint64_t generation)
      : tape_(tape), id_(id), generation_(generation) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
  std::uint64_t generation_ = 0;
};

struct BackwardArgs {
  std::span<const Tensor* const> inputs;
  const Tensor& output;
  const Tensor& grad_output;
  // Null where the corresponding input does not need a gradient.
  std::span<Tensor* const> grad_inputs;
};

using BackwardFn = std::function<void(const BackwardArgs&)>;

// Wengert list. Nodes are appended in evaluation order, so replaying in
// reverse index order is a valid reverse topological order.
//
// Gradient semantics: backward() may be called once per generation; a second
// call throws std::logic_error. Parameter gradients accumulate (+=) across
// generations, so callers zero them between optimizer steps.
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Returns the same node for repeated calls with the same parameter.
  // On a tape with gradients disabled the leaf behaves as a constant.
  Var leaf(Parameter& param);
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);

  void backward(Var loss);
  bool has_grad(Var v) const;
  const Tensor& grad(Var v) const;

  void reset();
  std::size_t size() const { return nodes_.size(); }
  std::uint64_t generation() const { return generation_; }
  bool grad_enabled() const { return grad_enabled_; }

 private:
  friend class Var;

  struct Node {
    Tensor owned;
    const Tensor* borrowed = nullptr;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    Parameter* sink = nullptr;
    std::vector<std::size_t> parents;
    BackwardFn backward;

    const Tensor& value() const { return borrowed ? *borrowed : owned; }
  };

  const Node& node(const Var& v) const;
  Node& node(const Var& v);

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> leaves_;
  std::uint64_t generation_ = 0;
  bool grad_enabled_ = true;
  bool backward_done_ = false;
};

}  // namespace urmf::ad
