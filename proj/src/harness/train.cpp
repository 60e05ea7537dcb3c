#include "urmf/harness/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "urmf/rng.hpp"

namespace urmf::harness {
namespace {

enum StreamTag : std::uint64_t {
  kShuffle = 1,
  kCorruptText = 2,
  kCorruptImage = 3,
  kNoise = 4,
};

void check_dims(const TrainConfig& config, const data::Dataset& ds) {
  if (ds.n != config.n || ds.m != config.m || ds.d_t != config.d_t || ds.d_i != config.d_i) {
    throw ConfigError("dataset dims (n=" + std::to_string(ds.n) + ", m=" + std::to_string(ds.m) +
                      ", d_t=" + std::to_string(ds.d_t) + ", d_i=" + std::to_string(ds.d_i) +
                      ") do not match the config");
  }
}

void add_scaled(objectives::LossBreakdown& acc, const objectives::LossBreakdown& b, double w) {
  acc.task += w * b.task;
  acc.kl_ib += w * b.kl_ib;
  acc.reg += w * b.reg;
  acc.align += w * b.align;
  acc.ucl += w * b.ucl;
  acc.total += w * b.total;
}

}  // namespace

StepLoss compute_loss(Tape& tape, UrmfModel& model, const data::ModalBatch& batch, const ForwardNoise& noise,
                      const TrainConfig& config) {
  StepLoss out{urmf_forward(tape, batch, model, &noise, config.forward_options(uncertainty::Mode::train)), {}};
  const ForwardTrace& tr = out.trace;
  const objectives::TermMask mask = config.term_mask();

  objectives::LossInputs in;
  in.task = objectives::cross_entropy(tr.joint.probs, batch.labels);
  if (!mask.no_ib_kl) in.kl_ib = objectives::kl_to_standard_normal(tr.joint.posterior);
  if (!mask.no_reg) in.reg = objectives::reg_loss(tr.posteriors);
  if (!mask.no_align) in.align = objectives::align_loss(tr.posteriors);
  if (!mask.no_ucl) in.ucl = objectives::ucl_loss(tr.posteriors, noise.contrastive, config.tau, config.ucl_denominator);
  out.loss = objectives::total_loss(in, config.loss_weights(), mask);
  return out;
}

Adam::Adam(std::vector<Parameter*> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const Parameter* p : params_) {
    first_.emplace_back(p->value.shape());
    second_.emplace_back(p->value.shape());
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    Tensor& m = first_[k];
    Tensor& v = second_[k];
    for (std::size_t i = 0; i < p.value.numel(); ++i) {
      const double g = p.grad[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      p.value[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

TrainingDiverged::TrainingDiverged(std::size_t epoch, std::size_t step, double last_finite_total)
    : std::runtime_error("training diverged at epoch " + std::to_string(epoch) + ", step " + std::to_string(step) +
                         " (last finite total loss " + std::to_string(last_finite_total) + ")"),
      epoch(epoch),
      step(step),
      last_finite_total(last_finite_total) {}

TrainResult train(const TrainConfig& config, const data::Dataset& dataset, const ProgressSink& progress) {
  config.validate();
  check_dims(config, dataset);
  TrainResult result{UrmfModel(config.model_dims(), config.seed), {}};
  UrmfModel& model = result.model;
  Adam adam(model.parameters(), config.lr, config.beta1, config.beta2, config.adam_eps);
  const bool corrupt_text = config.train_corrupt_p > 0.0 && (config.train_corrupt_modality == CorruptionTarget::text ||
                                                             config.train_corrupt_modality == CorruptionTarget::both);
  const bool corrupt_image = config.train_corrupt_p > 0.0 && (config.train_corrupt_modality == CorruptionTarget::image ||
                                                              config.train_corrupt_modality == CorruptionTarget::both);

  Tape tape;
  double last_finite = 0.0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const std::uint64_t shuffle_seed = keyed_rng({config.seed, epoch, kShuffle})();
    const auto order = data::batch_indices(dataset.size(), config.batch_size, shuffle_seed, progress);
    objectives::LossBreakdown acc;
    std::size_t seen = 0;
    for (std::size_t step = 0; step < order.size(); ++step) {
      data::ModalBatch batch = data::make_batch(dataset, order[step]);
      if (corrupt_text) {
        batch = data::corrupt(std::move(batch), data::Target::text, config.train_corrupt_p,
                              keyed_rng({config.seed, epoch, step, kCorruptText})());
      }
      if (corrupt_image) {
        batch = data::corrupt(std::move(batch), data::Target::image, config.train_corrupt_p,
                              keyed_rng({config.seed, epoch, step, kCorruptImage})());
      }
      auto noise_rng = keyed_rng({config.seed, epoch, step, kNoise});
      const ForwardNoise noise = ForwardNoise::draw(noise_rng, batch.size(), config.D);

      tape.reset();
      StepLoss s = compute_loss(tape, model, batch, noise, config);
      if (!std::isfinite(s.loss.breakdown.total)) throw TrainingDiverged(epoch, step, last_finite);
      last_finite = s.loss.breakdown.total;
      model.zero_grad();
      tape.backward(s.loss.total);
      adam.step();

      add_scaled(acc, s.loss.breakdown, static_cast<double>(batch.size()));
      seen += batch.size();
    }
    objectives::LossBreakdown mean;
    add_scaled(mean, acc, seen ? 1.0 / static_cast<double>(seen) : 0.0);
    result.curve.push_back({epoch, mean});
    if (progress) {
      progress("epoch " + std::to_string(epoch + 1) + "/" + std::to_string(config.epochs) +
               " total=" + format_number(mean.total) + " task=" + format_number(mean.task));
    }
  }
  return result;
}

CsvTable loss_table(const std::vector<EpochLog>& curve) {
  CsvTable t({"epoch", "task", "kl_ib", "reg", "align", "ucl", "total"});
  for (const EpochLog& e : curve) {
    t.add_row({static_cast<long long>(e.epoch), e.mean.task, e.mean.kl_ib, e.mean.reg, e.mean.align, e.mean.ucl,
               e.mean.total});
  }
  return t;
}

Predictions predict(UrmfModel& model, const data::ModalBatch& batch, const ForwardOptions& options,
                    std::size_t chunk) {
  ForwardOptions infer = options;
  infer.mode = uncertainty::Mode::infer;
  Predictions out;
  const std::size_t total = batch.size();
  const std::size_t text_stride = total ? batch.text.numel() / total : 0;
  const std::size_t image_stride = total ? batch.image.numel() / total : 0;
  Tape tape(false);
  for (std::size_t start = 0; start < total; start += chunk) {
    const std::size_t len = std::min(chunk, total - start);
    data::ModalBatch part;
    part.text = Tensor({len, batch.text.dim(1), batch.text.dim(2)});
    part.image = Tensor({len, batch.image.dim(1), batch.image.dim(2)});
    std::copy_n(batch.text.data() + start * text_stride, len * text_stride, part.text.data());
    std::copy_n(batch.image.data() + start * image_stride, len * image_stride, part.image.data());
    tape.reset();
    ForwardTrace tr = urmf_forward(tape, part, model, nullptr, infer);
    const Tensor& probs = tr.joint.probs.value();
    for (std::size_t k = 0; k < len; ++k) {
      out.labels.push_back(probs.at(k, 1) > probs.at(k, 0) ? 1 : 0);
      out.prob_positive.push_back(probs.at(k, 1));
      out.alpha_f.push_back(tr.fusion.alpha_f.value()[k]);
      out.alpha_i.push_back(tr.fusion.alpha_i.value()[k]);
    }
  }
  return out;
}

MetricsReport evaluate(UrmfModel& model, const data::ModalBatch& batch, const ForwardOptions& options) {
  const Predictions p = predict(model, batch, options);
  MetricsReport report = compute_metrics(p.labels, batch.labels);
  std::vector<bool> corrupted(batch.size());
  for (std::size_t k = 0; k < batch.size(); ++k) corrupted[k] = batch.corrupted_text[k] || batch.corrupted_image[k];
  summarize_alpha(report, p.alpha_f, p.alpha_i, corrupted);
  return report;
}

MetricsReport evaluate(UrmfModel& model, const data::Dataset& dataset, const ForwardOptions& options) {
  return evaluate(model, data::full_batch(dataset), options);
}

}  // namespace urmf::harness
