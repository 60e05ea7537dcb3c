#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "urmf/harness/checkpoint.hpp"
#include "urmf/harness/experiments.hpp"

using namespace urmf;
using namespace urmf::harness;

namespace {

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) out.push_back(std::stoull(item));
  if (out.empty()) throw std::invalid_argument("no seeds given");
  return out;
}

std::vector<double> parse_levels(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) out.push_back(std::stod(item));
  if (out.empty()) throw std::invalid_argument("no levels given");
  return out;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void log_line(const std::string& msg) { std::cerr << msg << '\n'; }

CsvTable metrics_table(const MetricsReport& m) {
  CsvTable t({"accuracy", "precision", "recall", "f1", "tp", "fp", "fn", "tn", "alpha_f_mean", "alpha_i_mean"});
  const double n = static_cast<double>(m.clean.count + m.corrupted.count);
  auto pooled = [&](double clean, double corrupted) {
    return n > 0 ? (clean * m.clean.count + corrupted * m.corrupted.count) / n : 0.0;
  };
  t.add_row({m.accuracy, m.precision, m.recall, m.f1, static_cast<long long>(m.tp), static_cast<long long>(m.fp),
             static_cast<long long>(m.fn), static_cast<long long>(m.tn),
             pooled(m.clean.mean_alpha_f, m.corrupted.mean_alpha_f),
             pooled(m.clean.mean_alpha_i, m.corrupted.mean_alpha_i)});
  return t;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Uncertainty-aware multimodal fusion: training, evaluation and experiments"};
  app.require_subcommand(1);

  std::size_t n_samples = 4000;
  std::uint64_t seed = 0;
  std::string spec_path, out, config_path, data_path, model_dir, csv_path, seeds_arg = "1,2,3,4,5";
  std::string modality = "image", levels_arg = "0,0.1,0.3,0.5";
  double tol = 1e-4;
  std::size_t workers = 0;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic embedding file");
  synth->add_option("--n-samples", n_samples, "Number of samples")->capture_default_str();
  synth->add_option("--seed", seed, "Generator seed")->capture_default_str();
  synth->add_option("--spec", spec_path, "key=value spec file (clusters, n, m, d_t, d_i, noise_text, noise_image)")
      ->check(CLI::ExistingFile);
  synth->add_option("--out", out, "Output embedding file")->required();

  auto* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint plus loss.csv");
  train_cmd->add_option("--config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--data", data_path, "Embedding file")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", out, "Output directory")->required();

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_cmd->add_option("--model", model_dir, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--data", data_path, "Embedding file")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--csv", csv_path, "Also write the report as CSV");

  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every loss term on a tiny model");
  grad_cmd->add_option("--tol", tol, "Max relative error")->capture_default_str();

  auto* ablate = app.add_subcommand("ablate", "Train the full model and every single-flag variant");
  ablate->add_option("--config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  ablate->add_option("--data", data_path, "Embedding file (first 80% train, rest test)")
      ->required()
      ->check(CLI::ExistingFile);
  ablate->add_option("--seeds", seeds_arg, "Comma-separated seeds")->capture_default_str();
  ablate->add_option("--out", out, "Output CSV")->required();
  ablate->add_option("--workers", workers, "Parallel training runs (0 = all cores)")->capture_default_str();

  auto* robust = app.add_subcommand("robustness", "Test-time corruption sweep, dynamic vs equal-weight fusion");
  robust->add_option("--config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  robust->add_option("--data", data_path, "Embedding file (first 80% train, rest test)")
      ->required()
      ->check(CLI::ExistingFile);
  robust->add_option("--modality", modality, "image or text")
      ->check(CLI::IsMember({"image", "text"}))
      ->capture_default_str();
  robust->add_option("--levels", levels_arg, "Comma-separated corruption proportions")->capture_default_str();
  robust->add_option("--seeds", seeds_arg, "Comma-separated seeds")->capture_default_str();
  robust->add_option("--out", out, "Output CSV")->required();
  robust->add_option("--workers", workers, "Parallel training runs (0 = all cores)")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      data::SynthSpec spec = spec_path.empty() ? data::SynthSpec{} : parse_synth_spec(read_text(spec_path));
      spec.n_samples = n_samples;
      spec.seed = seed;
      data::write_embeddings(out, data::generate_synthetic(spec));
      std::cerr << "wrote " << n_samples << " samples to " << out << '\n';
    } else if (*train_cmd) {
      const TrainConfig config = load_config(config_path);
      const data::Dataset ds = data::read_embeddings(data_path);
      TrainResult result = train(config, ds, log_line);
      save_checkpoint(out, config, result.model);
      loss_table(result.curve).write(std::filesystem::path(out) / "loss.csv");
    } else if (*eval_cmd) {
      Checkpoint ck = load_checkpoint(model_dir);
      const data::Dataset ds = data::read_embeddings(data_path);
      const MetricsReport m = evaluate(ck.model, ds, ck.config.forward_options(uncertainty::Mode::infer));
      std::printf("samples   %zu\naccuracy  %.6f\nprecision %.6f\nrecall    %.6f\nf1        %.6f\n", m.count(),
                  m.accuracy, m.precision, m.recall, m.f1);
      if (!csv_path.empty()) metrics_table(m).write(csv_path);
    } else if (*grad_cmd) {
      bool ok = true;
      for (LossTerm term : {LossTerm::total, LossTerm::task, LossTerm::kl_ib, LossTerm::reg, LossTerm::align,
                            LossTerm::ucl}) {
        GradcheckRequest req;
        req.term = term;
        req.tol = tol;
        const ad::GradcheckReport r = run_gradcheck(req);
        std::printf("%-6s max rel err %.3e (%s) %s\n", loss_term_name(term), r.max_rel_error,
                    r.worst_parameter().c_str(), r.passed ? "PASS" : "FAIL");
        ok = ok && r.passed;
      }
      return ok ? 0 : 1;
    } else if (*ablate) {
      const TrainConfig config = load_config(config_path);
      const Split split = split_dataset(data::read_embeddings(data_path));
      const auto rows = run_ablations(config, split, parse_seeds(seeds_arg), log_line, workers);
      const CsvTable table = ablation_table(rows);
      table.write(out);
      std::cout << table.str();
    } else if (*robust) {
      const TrainConfig config = load_config(config_path);
      const Split split = split_dataset(data::read_embeddings(data_path));
      const auto rows = run_robustness(config, split, data::parse_target(modality), parse_levels(levels_arg),
                                       parse_seeds(seeds_arg), log_line, workers);
      robustness_table(rows).write(out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
