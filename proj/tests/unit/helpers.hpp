#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "urmf/autodiff/gradcheck.hpp"
#include "urmf/autodiff/ops.hpp"

namespace testing {

using urmf::ad::Parameter;
using urmf::ad::Shape;
using urmf::ad::Tape;
using urmf::ad::Tensor;
using urmf::ad::Var;

inline Tensor random_tensor(std::mt19937_64& rng, Shape shape, double scale = 1.0) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> normal(0.0, scale);
  for (double& v : t.values()) v = normal(rng);
  return t;
}

inline Tensor uniform_tensor(std::mt19937_64& rng, Shape shape, double lo, double hi) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.values()) v = u(rng);
  return t;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

// Finite-difference check of a loss over a list of parameters.
inline urmf::ad::GradcheckReport check(const urmf::ad::LossBuilder& f, std::vector<Parameter*> params,
                                        double tol = 1e-4) {
  return urmf::ad::finite_diff_check(f, params, 1e-5, tol);
}

}  // namespace testing
