#include "urmf/harness/metrics.hpp"

#include <stdexcept>

namespace urmf::harness {

MetricsReport compute_metrics(const std::vector<int>& predictions, const std::vector<int>& labels) {
  if (predictions.size() != labels.size()) throw std::invalid_argument("prediction / label count mismatch");
  MetricsReport r;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    const bool pred = predictions[k] == 1;
    const bool truth = labels[k] == 1;
    if (pred && truth) ++r.tp;
    else if (pred) ++r.fp;
    else if (truth) ++r.fn;
    else ++r.tn;
  }
  const auto ratio = [](std::size_t num, std::size_t den) {
    return den ? static_cast<double>(num) / static_cast<double>(den) : 0.0;
  };
  r.accuracy = ratio(r.tp + r.tn, r.count());
  r.precision = ratio(r.tp, r.tp + r.fp);
  r.recall = ratio(r.tp, r.tp + r.fn);
  r.f1 = r.precision + r.recall > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

void summarize_alpha(MetricsReport& report, const std::vector<double>& alpha_f, const std::vector<double>& alpha_i,
                     const std::vector<bool>& corrupted) {
  if (alpha_f.size() != alpha_i.size() || alpha_f.size() != corrupted.size()) {
    throw std::invalid_argument("alpha / flag count mismatch");
  }
  report.clean = {};
  report.corrupted = {};
  for (std::size_t k = 0; k < alpha_f.size(); ++k) {
    AlphaSummary& s = corrupted[k] ? report.corrupted : report.clean;
    ++s.count;
    s.mean_alpha_f += alpha_f[k];
    s.mean_alpha_i += alpha_i[k];
  }
  for (AlphaSummary* s : {&report.clean, &report.corrupted}) {
    if (s->count) {
      s->mean_alpha_f /= static_cast<double>(s->count);
      s->mean_alpha_i /= static_cast<double>(s->count);
    }
  }
}

}  // namespace urmf::harness
