#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "urmf/autodiff/gradcheck.hpp"
#include "urmf/data.hpp"
#include "urmf/harness/csv.hpp"
#include "urmf/harness/train.hpp"

namespace urmf::harness {

struct Split {
  data::Dataset train;
  data::Dataset test;
};

// First `train_fraction` of the samples train, the rest test.
Split split_dataset(const data::Dataset& ds, double train_fraction = 0.8);

// Runs fn(0) .. fn(count - 1) on up to `workers` threads (0 = hardware
// concurrency). Rethrows the first exception after all workers finish.
void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& fn);

struct AblationVariant {
  std::string name;
  std::function<void(TrainConfig&)> apply;
};

// Six single-flag variants followed by the full model.
const std::vector<AblationVariant>& ablation_variants();

struct SeedScores {
  std::uint64_t seed = 0;
  MetricsReport metrics;
};

struct AblationRow {
  std::string variant;
  std::vector<SeedScores> runs;
  double acc_mean = 0.0, acc_std = 0.0;
  double f1_mean = 0.0, f1_std = 0.0;
};

// Fills the mean/std columns from `row.runs`.
void summarize(AblationRow& row);

std::vector<AblationRow> run_ablations(const TrainConfig& config, const Split& data,
                                       const std::vector<std::uint64_t>& seeds, const ProgressSink& progress = {},
                                       std::size_t workers = 0);
CsvTable ablation_table(const std::vector<AblationRow>& rows);

struct RobustnessRow {
  std::uint64_t seed = 0;
  std::string variant;  // "urmf" (config's fusion) or "equal_weight"
  double level = 0.0;
  MetricsReport metrics;
};

// Evaluates one trained model on `test` corrupted at each level, with its
// own fusion and with equal weights; level l is corrupted with seed (seed, l).
std::vector<RobustnessRow> corruption_sweep(UrmfModel& model, const TrainConfig& config, const data::Dataset& test,
                                            data::Target modality, const std::vector<double>& levels,
                                            std::uint64_t seed);

// Trains once per seed on clean data (plus the config's train-time
// corruption), then evaluates every corruption level with both the trained
// fusion and equal weights on identical corrupted test batches.
std::vector<RobustnessRow> run_robustness(const TrainConfig& config, const Split& data, data::Target modality,
                                          const std::vector<double>& levels, const std::vector<std::uint64_t>& seeds,
                                          const ProgressSink& progress = {}, std::size_t workers = 0);
CsvTable robustness_table(const std::vector<RobustnessRow>& rows);

enum class LossTerm { total, task, kl_ib, reg, align, ucl };
const char* loss_term_name(LossTerm t);

struct GradcheckRequest {
  LossTerm term = LossTerm::total;
  double tol = 1e-4;
  double step = 1e-5;
  std::uint64_t seed = 7;
  // Optional rewrite of the loss before differentiation (test fixtures).
  std::function<Var(Tape&, Var, UrmfModel&)> augment;
};

// d=8, H=2, n=4, m=3, D=8 with a batch of 3 samples.
TrainConfig tiny_gradcheck_config();

// Finite-difference check of one loss term over every parameter of a tiny
// model, all sampling noise frozen.
ad::GradcheckReport run_gradcheck(const GradcheckRequest& request);

// Logistic regression on mean-pooled text embeddings only; returns test
// accuracy.
double text_only_probe(const data::Dataset& train, const data::Dataset& test);

}  // namespace urmf::harness
