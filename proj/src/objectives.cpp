#include "urmf/objectives.hpp"

#include <limits>
#include <stdexcept>
#include <string>

namespace urmf::objectives {
namespace {

constexpr double kProbFloor = 1e-12;

void require_same_shape(const GaussianPosterior& p, const GaussianPosterior& q) {
  if (p.mu.shape() != q.mu.shape() || p.log_var.shape() != p.mu.shape() || q.log_var.shape() != q.mu.shape()) {
    throw ad::DimensionError("posterior shapes differ: " + ad::shape_to_string(p.mu.shape()) + " vs " +
                             ad::shape_to_string(q.mu.shape()));
  }
}

double batch_scale(const GaussianPosterior& p) {
  const ad::Shape& s = p.mu.shape();
  const std::size_t batch = s.size() >= 2 ? s[0] : 1;
  return 1.0 / static_cast<double>(batch);
}

}  // namespace

void LossWeights::validate() const {
  if (lambda_IB < 0 || lambda_1 < 0 || lambda_2 < 0 || lambda_3 < 0) {
    throw std::invalid_argument("loss weights must be non-negative");
  }
  if (!(tau > 0)) throw std::invalid_argument("temperature tau must be positive");
}

Var cross_entropy(Var probs, const std::vector<int>& labels) {
  if (probs.shape().size() != 2) throw ad::DimensionError("cross_entropy: probabilities must be [B x C]");
  const std::size_t classes = probs.shape()[1];
  std::vector<std::size_t> index;
  index.reserve(labels.size());
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw std::out_of_range("invalid label " + std::to_string(y) + " for " + std::to_string(classes) + " classes");
    }
    index.push_back(static_cast<std::size_t>(y));
  }
  Var picked = ad::clamp(ad::gather_cols(probs, index), kProbFloor, std::numeric_limits<double>::infinity());
  return ad::scale(ad::mean(ad::log(picked)), -1.0);
}

Var kl_to_standard_normal(const GaussianPosterior& p) {
  require_same_shape(p, p);
  Var terms = ad::add_scalar(ad::sub(ad::add(ad::square(p.mu), ad::exp(p.log_var)), p.log_var), -1.0);
  return ad::scale(ad::sum(terms), 0.5 * batch_scale(p));
}

Var kl_gaussians(const GaussianPosterior& p, const GaussianPosterior& q) {
  require_same_shape(p, q);
  Var spread = ad::add(ad::exp(p.log_var), ad::square(ad::sub(p.mu, q.mu)));
  Var ratio = ad::mul(spread, ad::exp(ad::scale(q.log_var, -1.0)));
  Var terms = ad::add_scalar(ad::add(ad::sub(q.log_var, p.log_var), ratio), -1.0);
  return ad::scale(ad::sum(terms), 0.5 * batch_scale(p));
}

Var ib_loss(Var task, const GaussianPosterior& joint, double lambda_IB) {
  return ad::add(task, ad::scale(kl_to_standard_normal(joint), lambda_IB));
}

Var reg_loss(const ModalityPosteriors& p) {
  return ad::add(ad::add(kl_to_standard_normal(p.text), kl_to_standard_normal(p.image)),
                 kl_to_standard_normal(p.interaction));
}

Var align_loss(const ModalityPosteriors& p) {
  return ad::add(kl_gaussians(p.text, p.image), kl_gaussians(p.interaction, p.image));
}

Var ucl_modality_loss(Var first, Var second, double tau, UclDenominator denominator) {
  if (!(tau > 0)) throw std::invalid_argument("temperature tau must be positive");
  if (first.shape() != second.shape() || first.shape().size() != 2) {
    throw ad::DimensionError("ucl: sample sets must be equal [K x D] tensors");
  }
  const std::size_t k = first.shape()[0];
  if (k < 2) {
    throw ad::ContrastiveBatchError("contrastive loss needs a batch of at least 2, got " + std::to_string(k));
  }
  Var sim = ad::matmul_nt(ad::l2_normalize_rows(first), ad::l2_normalize_rows(second));
  const double positive_weight = denominator == UclDenominator::verbatim ? static_cast<double>(k - 1) : 1.0;
  return ad::contrastive_nll(ad::scale(sim, 1.0 / tau), positive_weight);
}

Var ucl_loss(const ModalityPosteriors& p, const NoisePairs& noise, double tau, UclDenominator denominator) {
  const GaussianPosterior* posteriors[3] = {&p.text, &p.image, &p.interaction};
  Var total;
  for (std::size_t m = 0; m < 3; ++m) {
    Var first = uncertainty::sample_reparam(*posteriors[m], noise[m][0]);
    Var second = uncertainty::sample_reparam(*posteriors[m], noise[m][1]);
    Var term = ucl_modality_loss(first, second, tau, denominator);
    total = total.valid() ? ad::add(total, term) : term;
  }
  return total;
}

WeightedTotal total_loss(const LossInputs& in, const LossWeights& w, const TermMask& mask) {
  if (!in.task.valid()) throw std::invalid_argument("total_loss: task loss is required");
  WeightedTotal out;
  out.breakdown.task = in.task.value().item();
  Var total = in.task;
  auto accumulate = [&](const Var& term, double weight, bool masked, double& slot) {
    if (masked || !term.valid()) return;
    slot = term.value().item();
    if (weight != 0.0) total = ad::add(total, ad::scale(term, weight));
  };
  accumulate(in.kl_ib, w.lambda_IB, mask.no_ib_kl, out.breakdown.kl_ib);
  accumulate(in.reg, w.lambda_1, mask.no_reg, out.breakdown.reg);
  accumulate(in.align, w.lambda_2, mask.no_align, out.breakdown.align);
  accumulate(in.ucl, w.lambda_3, mask.no_ucl, out.breakdown.ucl);
  out.total = total;
  out.breakdown.total = total.value().item();
  return out;
}

}  // namespace urmf::objectives
