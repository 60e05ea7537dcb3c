#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "urmf/data.hpp"
#include "urmf/harness/config.hpp"
#include "urmf/harness/csv.hpp"
#include "urmf/harness/metrics.hpp"
#include "urmf/model.hpp"

namespace urmf::harness {

struct StepLoss {
  ForwardTrace trace;
  objectives::WeightedTotal loss;
};

// Train-mode forward pass plus every active objective term.
StepLoss compute_loss(Tape& tape, UrmfModel& model, const data::ModalBatch& batch, const ForwardNoise& noise,
                      const TrainConfig& config);

class Adam {
 public:
  Adam(std::vector<Parameter*> params, double lr, double beta1, double beta2, double eps);
  void step();

 private:
  std::vector<Parameter*> params_;
  std::vector<Tensor> first_;
  std::vector<Tensor> second_;
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

struct EpochLog {
  std::size_t epoch = 0;
  objectives::LossBreakdown mean;  // sample-weighted over the epoch
};

struct TrainResult {
  UrmfModel model;
  std::vector<EpochLog> curve;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(std::size_t epoch, std::size_t step, double last_finite_total);
  std::size_t epoch, step;
  double last_finite_total;
};

using ProgressSink = std::function<void(const std::string&)>;

// Deterministic given (config, dataset): shuffles, train-time corruption and
// reparameterization noise are all keyed by (seed, epoch, step).
TrainResult train(const TrainConfig& config, const data::Dataset& dataset, const ProgressSink& progress = {});

CsvTable loss_table(const std::vector<EpochLog>& curve);

struct Predictions {
  std::vector<int> labels;
  std::vector<double> prob_positive;
  std::vector<double> alpha_f;
  std::vector<double> alpha_i;
};

// Infer-mode forward over `batch` in chunks; argmax prediction (ties -> 0).
Predictions predict(UrmfModel& model, const data::ModalBatch& batch, const ForwardOptions& options,
                    std::size_t chunk = 256);

MetricsReport evaluate(UrmfModel& model, const data::ModalBatch& batch, const ForwardOptions& options);
MetricsReport evaluate(UrmfModel& model, const data::Dataset& dataset, const ForwardOptions& options);

}  // namespace urmf::harness
