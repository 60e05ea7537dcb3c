#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "urmf/autodiff/layers.hpp"

// Per-modality Gaussian posteriors, reparameterized sampling and
// uncertainty-guided fusion of the interaction-aware and visual modalities.
namespace urmf::uncertainty {

using ad::Linear;
using ad::Parameter;
using ad::Tape;
using ad::Tensor;
using ad::Var;

enum class Modality { text, image, interaction, joint };
const char* modality_name(Modality m);

enum class Mode { train, infer };

inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 10.0;
inline constexpr double kFusionEps = 1e-6;

// Diagonal Gaussian N(mu, exp(log_var)); both [B x D].
struct GaussianPosterior {
  Var mu;
  Var log_var;
};

// Two single-layer affine heads predicting mean and log-variance.
struct GaussianHead {
  Linear mean;
  Linear log_var;
  double log_var_min = kLogVarMin;
  double log_var_max = kLogVarMax;

  GaussianHead(const std::string& name, std::size_t in, std::size_t latent);
  void init(std::mt19937_64& rng);
  void collect(std::vector<Parameter*>& out) { mean.collect(out); log_var.collect(out); }
};

GaussianPosterior gaussian_head(Tape& tape, Var x, GaussianHead& head);

// z = mu + exp(0.5 log_var) * noise. `noise` must match mu's shape.
Var sample_reparam(const GaussianPosterior& p, const Tensor& noise);

// Mean of exp(log_var) over the latent axis: [B x D] -> [B].
Var scalar_uncertainty(const GaussianPosterior& p);

// Normalized exponential over the scores 1 / (sigma^2 + eps), evaluated with
// max-score subtraction. Returns (alpha_f, alpha_i).
std::pair<double, double> fusion_weights(double sigma_f_sq, double sigma_i_sq, double eps = kFusionEps);

struct FusionWeights {
  Var alpha_f;  // [B]
  Var alpha_i;  // [B]
};

// Batched, differentiable form of the scalar fusion_weights above.
FusionWeights fusion_weights(Var sigma_f_sq, Var sigma_i_sq, double eps = kFusionEps);

// alpha [B] scales each row of the posterior mean [B x D].
Var weighted_contribution(Var alpha, const GaussianPosterior& p);

struct FusionState {
  Var sigma_f_sq;
  Var sigma_i_sq;
  Var alpha_f;
  Var alpha_i;
  Var contribution_f;
  Var contribution_i;
};

FusionState fuse(Tape& tape, const GaussianPosterior& interaction, const GaussianPosterior& image,
                 bool dynamic, double eps = kFusionEps);

// phi: one hidden ReLU layer 2D -> D, the joint posterior heads, and the
// two-class classifier.
struct JointHead {
  Linear phi;
  GaussianHead posterior;
  Linear classifier;

  explicit JointHead(std::size_t latent, std::size_t classes = 2);
  void init(std::mt19937_64& rng);
  void collect(std::vector<Parameter*>& out);
};

struct JointOutput {
  Var h;
  GaussianPosterior posterior;
  Var z;
  Var logits;
  Var probs;
};

// Train mode samples z_h with `noise_h`; infer mode uses z_h = mu_h and
// ignores the noise argument.
JointOutput joint_forward(Tape& tape, Var contribution_f, Var contribution_i, JointHead& head,
                          const Tensor* noise_h, Mode mode);

}  // namespace urmf::uncertainty
