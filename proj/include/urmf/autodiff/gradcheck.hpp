#pragma once

#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "urmf/autodiff/tape.hpp"

namespace urmf::ad {

// Builds a scalar loss on the given tape from the current parameter values.
// Must be deterministic: any sampling noise has to be fixed outside the call.
using LossBuilder = std::function<Var(Tape&)>;

struct ParameterCheck {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradcheckReport {
  std::vector<ParameterCheck> parameters;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;

  // Name of the parameter with the largest error (empty if none checked).
  std::string worst_parameter() const;
};

class DeterminismError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Relative error used by the checker: |a - n| / max(|a|, |n|, floor).
// The floor keeps round-off on vanishing gradients from dominating.
double gradient_rel_error(double analytic, double numeric, double floor = 1e-6);

// Compares tape gradients with central differences (f(p+h) - f(p-h)) / 2h
// for every element of every parameter. Parameter gradients are zeroed
// before and after the check.
GradcheckReport finite_diff_check(const LossBuilder& f, std::span<Parameter* const> params,
                                  double step = 1e-5, double tol = 1e-4);

}  // namespace urmf::ad
