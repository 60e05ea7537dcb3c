#pragma once

#include <cstddef>
#include <vector>

namespace urmf::harness {

struct AlphaSummary {
  std::size_t count = 0;
  double mean_alpha_f = 0.0;
  double mean_alpha_i = 0.0;
};

// Binary metrics with the positive (sarcastic / incongruent) class = 1.
// Precision, recall and F1 are 0 when their denominators vanish.
struct MetricsReport {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  // Fusion weights split by whether the sample had a corrupted modality.
  AlphaSummary clean;
  AlphaSummary corrupted;

  std::size_t count() const { return tp + fp + fn + tn; }
};

MetricsReport compute_metrics(const std::vector<int>& predictions, const std::vector<int>& labels);

// Adds per-subgroup fusion-weight means to `report`.
void summarize_alpha(MetricsReport& report, const std::vector<double>& alpha_f, const std::vector<double>& alpha_i,
                     const std::vector<bool>& corrupted);

}  // namespace urmf::harness
