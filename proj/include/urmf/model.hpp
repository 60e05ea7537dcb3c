#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "urmf/data.hpp"
#include "urmf/interaction.hpp"
#include "urmf/objectives.hpp"
#include "urmf/uncertainty.hpp"

namespace urmf {

using ad::Parameter;
using ad::Tape;
using ad::Tensor;
using ad::Var;

struct ModelDims {
  std::size_t d_t = 32;
  std::size_t d_i = 32;
  std::size_t d = 32;       // shared model width
  std::size_t heads = 4;
  std::size_t layers = 1;   // stacked interaction blocks
  std::size_t latent = 32;  // posterior dimension D
  std::size_t ffn_expansion = 4;
  double log_var_min = uncertainty::kLogVarMin;
  double log_var_max = uncertainty::kLogVarMax;

  void validate() const;
};

// Full network: input projections, interaction blocks, the text / image /
// interaction posterior heads and the joint head.
class UrmfModel {
 public:
  UrmfModel(const ModelDims& dims, std::uint64_t seed);

  const ModelDims& dims() const { return dims_; }
  std::vector<Parameter*> parameters();
  Parameter& find(const std::string& name);
  std::size_t parameter_count();
  void zero_grad();

  interaction::InputProjection projection;
  std::vector<interaction::BlockParams> blocks;
  uncertainty::GaussianHead text_head;
  uncertainty::GaussianHead image_head;
  uncertainty::GaussianHead interaction_head;
  uncertainty::JointHead joint;

 private:
  ModelDims dims_;
};

struct ForwardOptions {
  interaction::Ordering ordering = interaction::Ordering::urmf;
  bool dynamic_fusion = true;
  double fusion_eps = uncertainty::kFusionEps;
  uncertainty::Mode mode = uncertainty::Mode::infer;
};

// All reparameterization noise consumed by one training step.
struct ForwardNoise {
  Tensor joint;                          // [B x D]
  objectives::NoisePairs contrastive;    // text, image, interaction; two each

  static ForwardNoise draw(std::mt19937_64& rng, std::size_t batch, std::size_t latent);
  static ForwardNoise zeros(std::size_t batch, std::size_t latent);
};

struct ForwardTrace {
  interaction::ProjectedInputs projected;
  interaction::InteractionOutput interaction;
  Var x_text;         // pooled projected text, pre-interaction
  Var x_image;        // pooled projected image
  Var x_interaction;  // pooled interaction block output
  objectives::ModalityPosteriors posteriors;
  uncertainty::FusionState fusion;
  uncertainty::JointOutput joint;
};

// Train mode needs `noise` for the joint sample; infer mode ignores it.
ForwardTrace urmf_forward(Tape& tape, const data::ModalBatch& batch, UrmfModel& model,
                          const ForwardNoise* noise, const ForwardOptions& options);

}  // namespace urmf
