#include "urmf/harness/experiments.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "urmf/rng.hpp"

namespace urmf::harness {
namespace {

constexpr std::uint64_t kTestCorruption = 0x636f7272;

std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  // Sample standard deviation; 0 for a single run.
  const double sd = xs.size() > 1 ? std::sqrt(var / static_cast<double>(xs.size() - 1)) : 0.0;
  return {mean, sd};
}

ProgressSink serialized(const ProgressSink& sink, std::mutex& mu) {
  if (!sink) return {};
  return [&sink, &mu](const std::string& msg) {
    std::lock_guard lock(mu);
    sink(msg);
  };
}

}  // namespace

Split split_dataset(const data::Dataset& ds, double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw std::invalid_argument("train fraction outside (0, 1)");
  const auto cut = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(ds.size())));
  return {data::slice(ds, 0, cut), data::slice(ds, cut, ds.size())};
}

void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

const std::vector<AblationVariant>& ablation_variants() {
  static const std::vector<AblationVariant> variants = {
      {"w/o L_align", [](TrainConfig& c) { c.no_align = true; }},
      {"w/o L_IB", [](TrainConfig& c) { c.no_ib_kl = true; }},
      {"w/o L_reg", [](TrainConfig& c) { c.no_reg = true; }},
      {"w/o L_UCL", [](TrainConfig& c) { c.no_ucl = true; }},
      {"w/o Dynamic Fusion", [](TrainConfig& c) { c.no_dynamic_fusion = true; }},
      {"Standard Transformer", [](TrainConfig& c) { c.standard_transformer = true; }},
      {"URMF (Full)", [](TrainConfig&) {}},
  };
  return variants;
}

std::vector<AblationRow> run_ablations(const TrainConfig& config, const Split& data,
                                       const std::vector<std::uint64_t>& seeds, const ProgressSink& progress,
                                       std::size_t workers) {
  const auto& variants = ablation_variants();
  std::vector<AblationRow> rows(variants.size());
  for (std::size_t v = 0; v < variants.size(); ++v) {
    rows[v].variant = variants[v].name;
    rows[v].runs.resize(seeds.size());
  }
  std::mutex mu;
  const ProgressSink log = serialized(progress, mu);
  parallel_for(variants.size() * seeds.size(), workers, [&](std::size_t job) {
    const std::size_t v = job / seeds.size(), s = job % seeds.size();
    TrainConfig cfg = config;
    cfg.seed = seeds[s];
    variants[v].apply(cfg);
    TrainResult trained = train(cfg, data.train);
    MetricsReport m = evaluate(trained.model, data.test, cfg.forward_options(uncertainty::Mode::infer));
    rows[v].runs[s] = {seeds[s], m};
    if (log) log(variants[v].name + " seed " + std::to_string(seeds[s]) + ": acc=" + format_number(m.accuracy));
  });
  for (AblationRow& row : rows) summarize(row);
  return rows;
}

void summarize(AblationRow& row) {
  std::vector<double> acc, f1;
  for (const SeedScores& r : row.runs) {
    acc.push_back(r.metrics.accuracy);
    f1.push_back(r.metrics.f1);
  }
  std::tie(row.acc_mean, row.acc_std) = mean_std(acc);
  std::tie(row.f1_mean, row.f1_std) = mean_std(f1);
}

CsvTable ablation_table(const std::vector<AblationRow>& rows) {
  CsvTable t({"variant", "seeds", "acc_mean", "acc_std", "f1_mean", "f1_std"});
  for (const AblationRow& r : rows) {
    t.add_row({r.variant, static_cast<long long>(r.runs.size()), r.acc_mean, r.acc_std, r.f1_mean, r.f1_std});
  }
  return t;
}

std::vector<RobustnessRow> corruption_sweep(UrmfModel& model, const TrainConfig& config, const data::Dataset& test,
                                            data::Target modality, const std::vector<double>& levels,
                                            std::uint64_t seed) {
  for (double p : levels) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("corruption level outside [0, 1]");
  }
  const data::ModalBatch clean = data::full_batch(test);
  const ForwardOptions dynamic = config.forward_options(uncertainty::Mode::infer);
  ForwardOptions equal = dynamic;
  equal.dynamic_fusion = false;
  std::vector<RobustnessRow> rows;
  for (std::size_t l = 0; l < levels.size(); ++l) {
    const data::ModalBatch batch = data::corrupt(clean, modality, levels[l], keyed_rng({seed, l, kTestCorruption})());
    rows.push_back({seed, "urmf", levels[l], evaluate(model, batch, dynamic)});
    rows.push_back({seed, "equal_weight", levels[l], evaluate(model, batch, equal)});
  }
  return rows;
}

std::vector<RobustnessRow> run_robustness(const TrainConfig& config, const Split& data, data::Target modality,
                                          const std::vector<double>& levels, const std::vector<std::uint64_t>& seeds,
                                          const ProgressSink& progress, std::size_t workers) {
  for (double p : levels) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("corruption level outside [0, 1]");
  }
  std::vector<std::vector<RobustnessRow>> per_seed(seeds.size());
  std::mutex mu;
  const ProgressSink log = serialized(progress, mu);
  parallel_for(seeds.size(), workers, [&](std::size_t s) {
    TrainConfig cfg = config;
    cfg.seed = seeds[s];
    TrainResult trained = train(cfg, data.train);
    per_seed[s] = corruption_sweep(trained.model, cfg, data.test, modality, levels, seeds[s]);
    if (log) {
      for (std::size_t r = 0; r + 1 < per_seed[s].size(); r += 2) {
        log("seed " + std::to_string(seeds[s]) + " p=" + format_number(per_seed[s][r].level) +
            ": urmf acc=" + format_number(per_seed[s][r].metrics.accuracy) +
            " equal acc=" + format_number(per_seed[s][r + 1].metrics.accuracy));
      }
    }
  });
  std::vector<RobustnessRow> rows;
  for (auto& r : per_seed) rows.insert(rows.end(), r.begin(), r.end());
  return rows;
}

CsvTable robustness_table(const std::vector<RobustnessRow>& rows) {
  CsvTable t({"seed", "variant", "level", "accuracy", "precision", "recall", "f1", "alpha_i_clean",
              "alpha_i_corrupted", "alpha_f_clean", "alpha_f_corrupted", "n_clean", "n_corrupted"});
  for (const RobustnessRow& r : rows) {
    const MetricsReport& m = r.metrics;
    t.add_row({static_cast<long long>(r.seed), r.variant, r.level, m.accuracy, m.precision, m.recall, m.f1,
               m.clean.mean_alpha_i, m.corrupted.mean_alpha_i, m.clean.mean_alpha_f, m.corrupted.mean_alpha_f,
               static_cast<long long>(m.clean.count), static_cast<long long>(m.corrupted.count)});
  }
  return t;
}

const char* loss_term_name(LossTerm t) {
  switch (t) {
    case LossTerm::total: return "total";
    case LossTerm::task: return "task";
    case LossTerm::kl_ib: return "kl_ib";
    case LossTerm::reg: return "reg";
    case LossTerm::align: return "align";
    case LossTerm::ucl: return "ucl";
  }
  return "?";
}

TrainConfig tiny_gradcheck_config() {
  TrainConfig c;
  c.d = 8;
  c.H = 2;
  c.n = 4;
  c.m = 3;
  c.D = 8;
  c.d_t = 6;
  c.d_i = 5;
  c.batch_size = 3;
  return c;
}

ad::GradcheckReport run_gradcheck(const GradcheckRequest& request) {
  TrainConfig cfg = tiny_gradcheck_config();
  cfg.seed = request.seed;
  data::SynthSpec spec;
  spec.clusters = 2;
  spec.n = cfg.n;
  spec.m = cfg.m;
  spec.d_t = cfg.d_t;
  spec.d_i = cfg.d_i;
  spec.n_samples = cfg.batch_size;
  spec.seed = request.seed;
  const data::ModalBatch batch = data::full_batch(data::generate_synthetic(spec));

  UrmfModel model(cfg.model_dims(), request.seed);
  auto rng = keyed_rng({request.seed, 0x6772});
  const ForwardNoise noise = ForwardNoise::draw(rng, batch.size(), cfg.D);
  const ForwardOptions train_mode = cfg.forward_options(uncertainty::Mode::train);

  ad::LossBuilder loss = [&](Tape& tape) {
    Var out;
    if (request.term == LossTerm::total) {
      out = compute_loss(tape, model, batch, noise, cfg).loss.total;
    } else {
      ForwardTrace tr = urmf_forward(tape, batch, model, &noise, train_mode);
      switch (request.term) {
        case LossTerm::task: out = objectives::cross_entropy(tr.joint.probs, batch.labels); break;
        case LossTerm::kl_ib: out = objectives::kl_to_standard_normal(tr.joint.posterior); break;
        case LossTerm::reg: out = objectives::reg_loss(tr.posteriors); break;
        case LossTerm::align: out = objectives::align_loss(tr.posteriors); break;
        case LossTerm::ucl: out = objectives::ucl_loss(tr.posteriors, noise.contrastive, cfg.tau, cfg.ucl_denominator); break;
        case LossTerm::total: break;
      }
    }
    return request.augment ? request.augment(tape, out, model) : out;
  };
  return ad::finite_diff_check(loss, model.parameters(), request.step, request.tol);
}

double text_only_probe(const data::Dataset& train, const data::Dataset& test) {
  const std::size_t dim = train.d_t;
  auto pooled = [dim](const data::Dataset& ds) {
    std::vector<double> f(ds.size() * dim, 0.0);
    for (std::size_t k = 0; k < ds.size(); ++k)
      for (std::size_t t = 0; t < ds.n; ++t)
        for (std::size_t j = 0; j < dim; ++j) f[k * dim + j] += ds.text[(k * ds.n + t) * dim + j] / static_cast<double>(ds.n);
    return f;
  };
  const std::vector<double> xtr = pooled(train), xte = pooled(test);
  std::vector<double> w(dim, 0.0);
  double b = 0.0;
  const double lr = 0.5;
  std::vector<double> gw(dim);
  for (int it = 0; it < 500; ++it) {
    std::fill(gw.begin(), gw.end(), 0.0);
    double gb = 0.0;
    for (std::size_t k = 0; k < train.size(); ++k) {
      double z = b;
      for (std::size_t j = 0; j < dim; ++j) z += w[j] * xtr[k * dim + j];
      const double err = 1.0 / (1.0 + std::exp(-z)) - train.labels[k];
      for (std::size_t j = 0; j < dim; ++j) gw[j] += err * xtr[k * dim + j];
      gb += err;
    }
    const double inv = 1.0 / static_cast<double>(train.size());
    for (std::size_t j = 0; j < dim; ++j) w[j] -= lr * gw[j] * inv;
    b -= lr * gb * inv;
  }
  std::size_t correct = 0;
  for (std::size_t k = 0; k < test.size(); ++k) {
    double z = b;
    for (std::size_t j = 0; j < dim; ++j) z += w[j] * xte[k * dim + j];
    correct += static_cast<std::size_t>((z > 0.0 ? 1 : 0) == test.labels[k]);
  }
  return test.size() ? static_cast<double>(correct) / static_cast<double>(test.size()) : 0.0;
}

}  // namespace urmf::harness
