#pragma once

#include <array>
#include <vector>

#include "urmf/uncertainty.hpp"

// Training objective: information-bottleneck task loss, prior regularization,
// visual-anchored alignment and the uncertainty-driven contrastive loss.
namespace urmf::objectives {

using ad::Tensor;
using ad::Var;
using uncertainty::GaussianPosterior;

struct LossWeights {
  double lambda_IB = 1e-3;
  double lambda_1 = 1e-3;  // reg
  double lambda_2 = 1e-5;  // align
  double lambda_3 = 1e-3;  // ucl
  double tau = 0.5;

  void validate() const;
};

// Which terms are removed from the total (ablations).
struct TermMask {
  bool no_ib_kl = false;
  bool no_reg = false;
  bool no_align = false;
  bool no_ucl = false;
};

enum class UclDenominator {
  verbatim,  // positive term counted once per negative, (K - 1) times
  infonce,   // positive term counted once
};

// Mean over the batch of -log y_hat[true class], probabilities floored at 1e-12.
Var cross_entropy(Var probs, const std::vector<int>& labels);

// Batch mean of 0.5 * sum_d (mu^2 + sigma^2 - log sigma^2 - 1).
Var kl_to_standard_normal(const GaussianPosterior& p);

// Batch mean of KL(p || q) between diagonal Gaussians.
Var kl_gaussians(const GaussianPosterior& p, const GaussianPosterior& q);

Var ib_loss(Var task, const GaussianPosterior& joint, double lambda_IB);

struct ModalityPosteriors {
  GaussianPosterior text;
  GaussianPosterior image;
  GaussianPosterior interaction;
};

Var reg_loss(const ModalityPosteriors& p);

// KL(text || image) + KL(interaction || image); the image posterior is the
// anchor and receives gradients from both terms.
Var align_loss(const ModalityPosteriors& p);

// Contrastive term for one modality given two sample sets [K x D]: row k of
// `first` and row k of `second` are the positive pair, cosine similarity.
Var ucl_modality_loss(Var first, Var second, double tau, UclDenominator denominator = UclDenominator::verbatim);

// Two independent reparameterization noises per modality, ordered
// text, image, interaction.
using NoisePairs = std::array<std::array<Tensor, 2>, 3>;

Var ucl_loss(const ModalityPosteriors& p, const NoisePairs& noise, double tau,
             UclDenominator denominator = UclDenominator::verbatim);

struct LossInputs {
  Var task;
  Var kl_ib;
  Var reg;
  Var align;
  Var ucl;
};

struct LossBreakdown {
  double task = 0.0;
  double kl_ib = 0.0;
  double reg = 0.0;
  double align = 0.0;
  double ucl = 0.0;
  double total = 0.0;
};

struct WeightedTotal {
  Var total;
  LossBreakdown breakdown;
};

// total = task + lambda_IB kl_ib + lambda_1 reg + lambda_2 align + lambda_3 ucl.
// A masked term contributes exactly as if its weight were zero and is reported
// as 0. Inputs left unset count as zero.
WeightedTotal total_loss(const LossInputs& in, const LossWeights& w, const TermMask& mask = {});

}  // namespace urmf::objectives
