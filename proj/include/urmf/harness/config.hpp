#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "urmf/model.hpp"
#include "urmf/objectives.hpp"

namespace urmf::harness {

enum class CorruptionTarget { none, text, image, both };

// Every hyperparameter of a training run. Field names double as the keys of
// the flat key=value config file.
struct TrainConfig {
  // loss weights
  double lambda_IB = 1e-3;
  double lambda_1 = 1e-3;
  double lambda_2 = 1e-5;
  double lambda_3 = 1e-3;
  double tau = 0.5;
  // dimensions
  std::size_t d = 32;
  std::size_t d_t = 32;
  std::size_t d_i = 32;
  std::size_t n = 16;
  std::size_t m = 8;
  std::size_t H = 4;
  std::size_t L = 1;
  std::size_t D = 32;
  std::size_t ffn_expansion = 4;
  // uncertainty
  double fusion_eps = 1e-6;
  double log_var_min = -10.0;
  double log_var_max = 10.0;
  // optimizer
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  // ablations
  bool no_align = false;
  bool no_ib_kl = false;
  bool no_reg = false;
  bool no_ucl = false;
  bool no_dynamic_fusion = false;
  bool standard_transformer = false;
  objectives::UclDenominator ucl_denominator = objectives::UclDenominator::verbatim;
  // corruption mixed into training batches
  double train_corrupt_p = 0.1;
  CorruptionTarget train_corrupt_modality = CorruptionTarget::both;

  void validate() const;

  ModelDims model_dims() const;
  ForwardOptions forward_options(uncertainty::Mode mode) const;
  objectives::LossWeights loss_weights() const;
  objectives::TermMask term_mask() const;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Parses `key = value` lines; '#' starts a comment. Unknown keys, duplicate
// keys and malformed values throw ConfigError naming the line.
TrainConfig parse_config(const std::string& text, TrainConfig base = {});
TrainConfig load_config(const std::filesystem::path& path);
// Round-trips through parse_config exactly.
std::string format_config(const TrainConfig& config);

// The same key=value reader, for synthetic-data specs.
data::SynthSpec parse_synth_spec(const std::string& text, data::SynthSpec base = {});

}  // namespace urmf::harness
