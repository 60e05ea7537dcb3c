#include "urmf/model.hpp"

#include <stdexcept>

namespace urmf {

void ModelDims::validate() const {
  if (d_t == 0 || d_i == 0 || d == 0 || latent == 0 || ffn_expansion == 0) {
    throw std::invalid_argument("model dimensions must be positive");
  }
  if (heads == 0 || d % heads != 0) throw std::invalid_argument("d must be divisible by the number of heads");
  if (layers == 0) throw std::invalid_argument("need at least one interaction block");
  if (!(log_var_min < log_var_max)) throw std::invalid_argument("log-variance clamp bounds out of order");
}

UrmfModel::UrmfModel(const ModelDims& dims, std::uint64_t seed)
    : projection(dims.d_t, dims.d_i, dims.d),
      text_head("head.text", dims.d, dims.latent),
      image_head("head.image", dims.d, dims.latent),
      interaction_head("head.interaction", dims.d, dims.latent),
      joint(dims.latent),
      dims_(dims) {
  dims.validate();
  blocks.reserve(dims.layers);
  for (std::size_t l = 0; l < dims.layers; ++l) {
    blocks.emplace_back("block" + std::to_string(l), dims.d, dims.heads, dims.ffn_expansion);
  }
  for (auto* head : {&text_head, &image_head, &interaction_head, &joint.posterior}) {
    head->log_var_min = dims.log_var_min;
    head->log_var_max = dims.log_var_max;
  }

  std::mt19937_64 rng(seed);
  projection.init(rng);
  for (auto& b : blocks) b.init(rng);
  text_head.init(rng);
  image_head.init(rng);
  interaction_head.init(rng);
  joint.init(rng);
}

std::vector<Parameter*> UrmfModel::parameters() {
  std::vector<Parameter*> out;
  projection.collect(out);
  for (auto& b : blocks) b.collect(out);
  text_head.collect(out);
  image_head.collect(out);
  interaction_head.collect(out);
  joint.collect(out);
  return out;
}

Parameter& UrmfModel::find(const std::string& name) {
  for (Parameter* p : parameters()) {
    if (p->name == name) return *p;
  }
  throw std::out_of_range("no parameter named '" + name + "'");
}

std::size_t UrmfModel::parameter_count() {
  std::size_t total = 0;
  for (const Parameter* p : parameters()) total += p->value.numel();
  return total;
}

void UrmfModel::zero_grad() {
  for (Parameter* p : parameters()) p->zero_grad();
}

ForwardNoise ForwardNoise::draw(std::mt19937_64& rng, std::size_t batch, std::size_t latent) {
  std::normal_distribution<double> normal(0.0, 1.0);
  auto fresh = [&] {
    Tensor t({batch, latent});
    for (double& v : t.values()) v = normal(rng);
    return t;
  };
  ForwardNoise noise;
  noise.joint = fresh();
  for (auto& pair : noise.contrastive) {
    pair[0] = fresh();
    pair[1] = fresh();
  }
  return noise;
}

ForwardNoise ForwardNoise::zeros(std::size_t batch, std::size_t latent) {
  ForwardNoise noise;
  noise.joint = Tensor({batch, latent});
  for (auto& pair : noise.contrastive) pair = {Tensor({batch, latent}), Tensor({batch, latent})};
  return noise;
}

ForwardTrace urmf_forward(Tape& tape, const data::ModalBatch& batch, UrmfModel& model,
                          const ForwardNoise* noise, const ForwardOptions& options) {
  const ModelDims& dims = model.dims();
  if (batch.text.rank() != 3 || batch.text.dim(2) != dims.d_t || batch.image.rank() != 3 ||
      batch.image.dim(2) != dims.d_i || batch.text.dim(0) != batch.image.dim(0)) {
    throw ad::DimensionError("batch " + ad::shape_to_string(batch.text.shape()) + " / " +
                             ad::shape_to_string(batch.image.shape()) + " does not match model input widths");
  }

  ForwardTrace tr;
  tr.projected = interaction::project_inputs(tape, tape.constant(batch.text), tape.constant(batch.image),
                                             model.projection);
  tr.interaction = interaction::interaction_stack(tape, tr.projected.text, tr.projected.image, model.blocks,
                                                  options.ordering);
  tr.x_text = ad::mean_pool_rows(tr.projected.text);
  tr.x_image = ad::mean_pool_rows(tr.projected.image);
  tr.x_interaction = tr.interaction.pooled;

  tr.posteriors.text = uncertainty::gaussian_head(tape, tr.x_text, model.text_head);
  tr.posteriors.image = uncertainty::gaussian_head(tape, tr.x_image, model.image_head);
  tr.posteriors.interaction = uncertainty::gaussian_head(tape, tr.x_interaction, model.interaction_head);

  tr.fusion = uncertainty::fuse(tape, tr.posteriors.interaction, tr.posteriors.image, options.dynamic_fusion,
                                options.fusion_eps);
  tr.joint = uncertainty::joint_forward(tape, tr.fusion.contribution_f, tr.fusion.contribution_i, model.joint,
                                        noise ? &noise->joint : nullptr, options.mode);
  return tr;
}

}  // namespace urmf
