#include "urmf/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace urmf::uncertainty {

const char* modality_name(Modality m) {
  switch (m) {
    case Modality::text: return "text";
    case Modality::image: return "image";
    case Modality::interaction: return "interaction";
    case Modality::joint: return "joint";
  }
  return "?";
}

GaussianHead::GaussianHead(const std::string& name, std::size_t in, std::size_t latent)
    : mean(name + ".mu", in, latent), log_var(name + ".log_var", in, latent) {}

void GaussianHead::init(std::mt19937_64& rng) {
  mean.init_glorot(rng);
  // Small log-variance weights start every posterior near unit variance.
  log_var.init_glorot(rng, 0.1);
}

GaussianPosterior gaussian_head(Tape& tape, Var x, GaussianHead& head) {
  Var mu = head.mean(tape, x);
  Var lv = ad::clamp(head.log_var(tape, x), head.log_var_min, head.log_var_max);
  return {mu, lv};
}

Var sample_reparam(const GaussianPosterior& p, const Tensor& noise) {
  if (noise.shape() != p.mu.shape()) {
    throw ad::DimensionError("sample_reparam: noise " + ad::shape_to_string(noise.shape()) +
                             " vs posterior " + ad::shape_to_string(p.mu.shape()));
  }
  Tape& tape = p.mu.tape();
  Var sigma = ad::exp(ad::scale(p.log_var, 0.5));
  return ad::add(p.mu, ad::mul(sigma, tape.constant(noise)));
}

Var scalar_uncertainty(const GaussianPosterior& p) { return ad::row_mean(ad::exp(p.log_var)); }

std::pair<double, double> fusion_weights(double sigma_f_sq, double sigma_i_sq, double eps) {
  if (!(sigma_f_sq > 0.0) || !(sigma_i_sq > 0.0) || eps < 0.0) {
    throw std::invalid_argument("fusion_weights: variances must be positive and eps non-negative");
  }
  const double sf = 1.0 / (sigma_f_sq + eps);
  const double si = 1.0 / (sigma_i_sq + eps);
  const double mx = std::max(sf, si);
  const double ef = std::exp(sf - mx);
  const double ei = std::exp(si - mx);
  return {ef / (ef + ei), ei / (ef + ei)};
}

FusionWeights fusion_weights(Var sigma_f_sq, Var sigma_i_sq, double eps) {
  const ad::Shape& s = sigma_f_sq.shape();
  if (s.size() != 1 || sigma_i_sq.shape() != s) {
    throw ad::DimensionError("fusion_weights: expected two [B] vectors, got " + ad::shape_to_string(s) +
                             " and " + ad::shape_to_string(sigma_i_sq.shape()));
  }
  const std::size_t batch = s[0];
  Var score_f = ad::reshape(ad::reciprocal(ad::add_scalar(sigma_f_sq, eps)), {batch, 1});
  Var score_i = ad::reshape(ad::reciprocal(ad::add_scalar(sigma_i_sq, eps)), {batch, 1});
  Var alpha = ad::row_softmax(ad::concat_last(score_f, score_i));
  return {ad::reshape(ad::slice_last(alpha, 0, 1), {batch}), ad::reshape(ad::slice_last(alpha, 1, 1), {batch})};
}

Var weighted_contribution(Var alpha, const GaussianPosterior& p) { return ad::scale_rows(p.mu, alpha); }

FusionState fuse(Tape& tape, const GaussianPosterior& interaction, const GaussianPosterior& image,
                 bool dynamic, double eps) {
  FusionState st;
  st.sigma_f_sq = scalar_uncertainty(interaction);
  st.sigma_i_sq = scalar_uncertainty(image);
  if (dynamic) {
    FusionWeights w = fusion_weights(st.sigma_f_sq, st.sigma_i_sq, eps);
    st.alpha_f = w.alpha_f;
    st.alpha_i = w.alpha_i;
  } else {
    const Tensor half = Tensor::filled(st.sigma_f_sq.shape(), 0.5);
    st.alpha_f = tape.constant(half);
    st.alpha_i = tape.constant(half);
  }
  st.contribution_f = weighted_contribution(st.alpha_f, interaction);
  st.contribution_i = weighted_contribution(st.alpha_i, image);
  return st;
}

JointHead::JointHead(std::size_t latent, std::size_t classes)
    : phi("joint.phi", 2 * latent, latent),
      posterior("joint.posterior", latent, latent),
      classifier("classifier", latent, classes) {}

void JointHead::init(std::mt19937_64& rng) {
  phi.init_glorot(rng);
  posterior.init(rng);
  classifier.init_glorot(rng);
}

void JointHead::collect(std::vector<Parameter*>& out) {
  phi.collect(out);
  posterior.collect(out);
  classifier.collect(out);
}

JointOutput joint_forward(Tape& tape, Var contribution_f, Var contribution_i, JointHead& head,
                          const Tensor* noise_h, Mode mode) {
  JointOutput out;
  out.h = ad::relu(head.phi(tape, ad::concat_last(contribution_f, contribution_i)));
  out.posterior = gaussian_head(tape, out.h, head.posterior);
  if (mode == Mode::train) {
    if (!noise_h) throw std::invalid_argument("joint_forward: train mode needs joint noise");
    out.z = sample_reparam(out.posterior, *noise_h);
  } else {
    out.z = out.posterior.mu;
  }
  out.logits = head.classifier(tape, out.z);
  out.probs = ad::row_softmax(out.logits);
  return out;
}

}  // namespace urmf::uncertainty
