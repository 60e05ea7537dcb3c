#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "urmf/autodiff/ops.hpp"

namespace urmf::ad {

// y = x . weight + bias, weight stored [in x out]. Without a bias the
// `bias` parameter is empty and never recorded.
struct Linear {
  Parameter weight;
  Parameter bias;
  bool has_bias = true;

  Linear(const std::string& name, std::size_t in, std::size_t out, bool has_bias = true);

  std::size_t in_features() const { return weight.value.dim(0); }
  std::size_t out_features() const { return weight.value.dim(1); }

  // Glorot-uniform weights scaled by `gain`, zero bias.
  void init_glorot(std::mt19937_64& rng, double gain = 1.0);
  void set_identity();
  void set_zero();

  // x may be [r x in] or [... x in]; leading axes are preserved.
  Var operator()(Tape& tape, Var x);
  void collect(std::vector<Parameter*>& out) {
    out.push_back(&weight);
    if (has_bias) out.push_back(&bias);
  }
};

struct LayerNormParams {
  Parameter gamma;
  Parameter beta;
  double eps = 1e-5;

  LayerNormParams(const std::string& name, std::size_t width, double eps = 1e-5);

  Var operator()(Tape& tape, Var x) { return layer_norm(x, tape.leaf(gamma), tape.leaf(beta), eps); }
  void collect(std::vector<Parameter*>& out) { out.push_back(&gamma); out.push_back(&beta); }
};

}  // namespace urmf::ad
