#include "urmf/autodiff/layers.hpp"

#include <algorithm>
#include <cmath>

namespace urmf::ad {

Linear::Linear(const std::string& name, std::size_t in, std::size_t out, bool has_bias)
    : weight(name + ".weight", Tensor({in, out})),
      bias(name + ".bias", Tensor({has_bias ? out : 0})),
      has_bias(has_bias) {}

void Linear::init_glorot(std::mt19937_64& rng, double gain) {
  const double limit = gain * std::sqrt(6.0 / static_cast<double>(in_features() + out_features()));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (double& w : weight.value.values()) w = dist(rng);
  bias.value.fill(0.0);
}

void Linear::set_identity() {
  set_zero();
  const std::size_t n = std::min(in_features(), out_features());
  for (std::size_t i = 0; i < n; ++i) weight.value[i * out_features() + i] = 1.0;
}

void Linear::set_zero() {
  weight.value.fill(0.0);
  bias.value.fill(0.0);
}

Var Linear::operator()(Tape& tape, Var x) {
  const Shape& s = x.shape();
  auto apply = [&](Var rows) {
    return has_bias ? affine(rows, tape.leaf(weight), tape.leaf(bias)) : matmul(rows, tape.leaf(weight));
  };
  if (s.size() == 2) return apply(x);
  if (s.empty()) throw DimensionError("Linear: scalar input");
  const std::size_t in = s.back();
  Var flat = reshape(x, {x.numel() / std::max<std::size_t>(in, 1), in});
  Var y = apply(flat);
  Shape os = s;
  os.back() = out_features();
  return reshape(y, os);
}

LayerNormParams::LayerNormParams(const std::string& name, std::size_t width, double eps)
    : gamma(name + ".gamma", Tensor::filled({width}, 1.0)), beta(name + ".beta", Tensor({width})), eps(eps) {}

}  // namespace urmf::ad
