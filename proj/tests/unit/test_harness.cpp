#include <doctest.h>

#include <filesystem>
#include <limits>

#include "helpers.hpp"
#include "urmf/harness/checkpoint.hpp"
#include "urmf/harness/experiments.hpp"

using namespace urmf;
using namespace urmf::harness;

namespace {

TrainConfig tiny_config() {
  TrainConfig c;
  c.d = 8;
  c.H = 2;
  c.D = 8;
  c.n = 4;
  c.m = 3;
  c.d_t = 6;
  c.d_i = 5;
  c.batch_size = 8;
  c.epochs = 2;
  c.seed = 3;
  return c;
}

data::Dataset tiny_data(std::size_t count = 64, std::uint64_t seed = 1) {
  data::SynthSpec s;
  s.n = 4;
  s.m = 3;
  s.d_t = 6;
  s.d_i = 5;
  s.n_samples = count;
  s.seed = seed;
  return data::generate_synthetic(s);
}

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("urmf_test_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("format and parse roundtrip") {
    TrainConfig c = tiny_config();
    c.lambda_2 = 0.1 + 0.2;
    c.no_align = true;
    c.ucl_denominator = objectives::UclDenominator::infonce;
    c.train_corrupt_modality = CorruptionTarget::image;
    const TrainConfig back = parse_config(format_config(c));
    CHECK(format_config(back) == format_config(c));
    CHECK(back.lambda_2 == c.lambda_2);
  }

  TEST_CASE("comments, blanks and defaults") {
    const TrainConfig c = parse_config("# desk run\n\nepochs = 5   # short\nno_ucl=true\n");
    CHECK(c.epochs == 5);
    CHECK(c.no_ucl);
    CHECK(c.lambda_IB == 1e-3);
    CHECK(c.batch_size == 32);
  }

  TEST_CASE("errors name the line") {
    auto message = [](const std::string& text) {
      try {
        parse_config(text);
      } catch (const ConfigError& e) {
        return std::string(e.what());
      }
      return std::string();
    };
    CHECK(message("epochs = 3\nlearning_rate = 1\n").find("line 2") != std::string::npos);
    CHECK(message("epochs = 3\nlearning_rate = 1\n").find("unknown key") != std::string::npos);
    CHECK(message("seed = 1\nseed = 2\n").find("duplicate") != std::string::npos);
    CHECK(message("lr = fast\n").find("line 1") != std::string::npos);
    CHECK(message("epochs = -1\n").find("line 1") != std::string::npos);
    CHECK(message("just words\n").find("key=value") != std::string::npos);
  }

  TEST_CASE("validation") {
    TrainConfig c = tiny_config();
    c.batch_size = 1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = tiny_config();
    c.epochs = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = tiny_config();
    c.lr = -1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = tiny_config();
    c.H = 3;
    CHECK_THROWS(c.validate());
  }

  TEST_CASE("synth spec keys") {
    const data::SynthSpec s = parse_synth_spec("clusters = 6\nnoise_image = 0.25\n");
    CHECK(s.clusters == 6);
    CHECK(s.noise_image == 0.25);
    CHECK_THROWS_AS(parse_synth_spec("lr = 1\n"), ConfigError);
  }
}

TEST_SUITE("metrics") {
  TEST_CASE("hand confusion matrix") {
    const MetricsReport m = compute_metrics({1, 1, 0, 0}, {1, 0, 0, 1});
    CHECK(m.tp == 1);
    CHECK(m.fp == 1);
    CHECK(m.fn == 1);
    CHECK(m.tn == 1);
    CHECK(m.accuracy == 0.5);
    CHECK(m.precision == 0.5);
    CHECK(m.recall == 0.5);
    CHECK(m.f1 == 0.5);
  }

  TEST_CASE("perfect and all-negative predictions") {
    const MetricsReport perfect = compute_metrics({1, 0, 1}, {1, 0, 1});
    CHECK(perfect.accuracy == 1.0);
    CHECK(perfect.precision == 1.0);
    CHECK(perfect.recall == 1.0);
    CHECK(perfect.f1 == 1.0);
    const MetricsReport negative = compute_metrics({0, 0, 0}, {1, 0, 1});
    CHECK(negative.recall == 0.0);
    CHECK(negative.precision == 0.0);
    CHECK(negative.f1 == 0.0);
    CHECK_THROWS(compute_metrics({0}, {0, 1}));
  }

  TEST_CASE("identities on random predictions") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t n = 1 + rng() % 40;
      std::vector<int> p(n), y(n);
      std::size_t agree = 0;
      for (std::size_t k = 0; k < n; ++k) {
        p[k] = static_cast<int>(rng() % 2);
        y[k] = static_cast<int>(rng() % 2);
        agree += p[k] == y[k];
      }
      const MetricsReport m = compute_metrics(p, y);
      CHECK(m.accuracy == doctest::Approx(static_cast<double>(agree) / n));
      for (double v : {m.accuracy, m.precision, m.recall, m.f1}) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
      if (m.precision + m.recall > 0)
        CHECK(m.f1 == doctest::Approx(2 * m.precision * m.recall / (m.precision + m.recall)));
      else
        CHECK(m.f1 == 0.0);
    }
  }

  TEST_CASE("alpha split by subgroup") {
    MetricsReport m = compute_metrics({0, 1, 1}, {0, 1, 0});
    summarize_alpha(m, {0.9, 0.6, 0.3}, {0.1, 0.4, 0.7}, {false, true, true});
    CHECK(m.clean.count == 1);
    CHECK(m.clean.mean_alpha_i == doctest::Approx(0.1));
    CHECK(m.corrupted.count == 2);
    CHECK(m.corrupted.mean_alpha_f == doctest::Approx(0.45));
  }
}

TEST_SUITE("csv") {
  TEST_CASE("six significant digits and integer cells") {
    CsvTable t({"name", "x", "n"});
    t.add_row({std::string("a"), 3.14159265, 7LL});
    t.add_row({std::string("b"), 1e-7, -2LL});
    CHECK(t.str() == "name,x,n\na,3.14159,7\nb,1e-07,-2\n");
    CHECK_THROWS(t.add_row({1.0}));
  }
}

TEST_SUITE("training") {
  TEST_CASE("loss decreases over a short run") {
    TrainConfig c = tiny_config();
    c.epochs = 6;
    c.lr = 0.01;
    const TrainResult r = train(c, tiny_data(256));
    REQUIRE(r.curve.size() == 6);
    CHECK(r.curve.back().mean.total < r.curve.front().mean.total);
    for (const EpochLog& e : r.curve) {
      const objectives::LossBreakdown& b = e.mean;
      CHECK(b.total == doctest::Approx(b.task + c.lambda_IB * b.kl_ib + c.lambda_1 * b.reg + c.lambda_2 * b.align +
                                       c.lambda_3 * b.ucl));
    }
  }

  TEST_CASE("identical runs give bitwise identical curves and parameters") {
    const data::Dataset ds = tiny_data();
    TrainResult a = train(tiny_config(), ds), b = train(tiny_config(), ds);
    CHECK(loss_table(a.curve).str() == loss_table(b.curve).str());
    for (std::size_t e = 0; e < a.curve.size(); ++e) CHECK(a.curve[e].mean.total == b.curve[e].mean.total);
    const auto pa = a.model.parameters(), pb = b.model.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value == pb[i]->value);
  }

  TEST_CASE("zero learning rate leaves parameters unchanged") {
    TrainConfig c = tiny_config();
    c.lr = 0.0;
    TrainResult r = train(c, tiny_data());
    UrmfModel fresh(c.model_dims(), c.seed);
    const auto trained = r.model.parameters(), init = fresh.parameters();
    for (std::size_t i = 0; i < trained.size(); ++i) CHECK(trained[i]->value == init[i]->value);
  }

  TEST_CASE("dimension mismatch and divergence") {
    TrainConfig c = tiny_config();
    c.d_t = 7;
    CHECK_THROWS_AS(train(c, tiny_data()), ConfigError);
    data::Dataset bad = tiny_data();
    bad.text[0] = std::numeric_limits<float>::quiet_NaN();
    c = tiny_config();
    c.train_corrupt_p = 0.0;
    c.batch_size = 64;
    CHECK_THROWS_AS(train(c, bad), TrainingDiverged);
  }

  TEST_CASE("modal heads diverge after training") {
    TrainConfig c = tiny_config();
    c.epochs = 1;
    TrainResult r = train(c, tiny_data(16));
    Tape tape(false);
    std::mt19937_64 rng(4);
    Var x = tape.constant(testing::random_tensor(rng, {2, 8}));
    const auto pt = uncertainty::gaussian_head(tape, x, r.model.text_head);
    const auto pi = uncertainty::gaussian_head(tape, x, r.model.image_head);
    CHECK(testing::max_abs_diff(pt.mu.value(), pi.mu.value()) > 1e-6);
    CHECK(testing::max_abs_diff(pt.log_var.value(), pi.log_var.value()) > 1e-6);
  }

  TEST_CASE("ablation flags only touch their own computation") {
    const data::ModalBatch batch = data::full_batch(tiny_data(6));
    UrmfModel model(tiny_config().model_dims(), 5);
    Tape tape(false);
    TrainConfig base = tiny_config();
    const ForwardTrace ref = urmf_forward(tape, batch, model, nullptr, base.forward_options(uncertainty::Mode::infer));
    const Tensor ref_probs = ref.joint.probs.value(), ref_text_mu = ref.posteriors.text.mu.value();
    const Tensor ref_image_mu = ref.posteriors.image.mu.value(), ref_f_mu = ref.posteriors.interaction.mu.value();

    for (auto flag : {&TrainConfig::no_align, &TrainConfig::no_ib_kl, &TrainConfig::no_reg, &TrainConfig::no_ucl}) {
      TrainConfig c = base;
      c.*flag = true;
      const ForwardTrace tr = urmf_forward(tape, batch, model, nullptr, c.forward_options(uncertainty::Mode::infer));
      CHECK(tr.joint.probs.value() == ref_probs);
    }
    TrainConfig c = base;
    c.no_dynamic_fusion = true;
    ForwardTrace tr = urmf_forward(tape, batch, model, nullptr, c.forward_options(uncertainty::Mode::infer));
    CHECK(tr.posteriors.interaction.mu.value() == ref_f_mu);
    CHECK(tr.posteriors.image.mu.value() == ref_image_mu);
    CHECK_FALSE(tr.joint.probs.value() == ref_probs);

    c = base;
    c.standard_transformer = true;
    tr = urmf_forward(tape, batch, model, nullptr, c.forward_options(uncertainty::Mode::infer));
    CHECK(tr.posteriors.text.mu.value() == ref_text_mu);
    CHECK(tr.posteriors.image.mu.value() == ref_image_mu);
    CHECK_FALSE(tr.posteriors.interaction.mu.value() == ref_f_mu);
  }

  TEST_CASE("masked terms are reported as zero") {
    TrainConfig c = tiny_config();
    c.no_reg = true;
    c.no_ucl = true;
    const TrainResult r = train(c, tiny_data());
    for (const EpochLog& e : r.curve) {
      CHECK(e.mean.reg == 0.0);
      CHECK(e.mean.ucl == 0.0);
      CHECK(e.mean.align > 0.0);
    }
  }
}

TEST_SUITE("checkpoint") {
  TEST_CASE("save and load reproduce predictions") {
    TrainConfig c = tiny_config();
    c.epochs = 1;
    TrainResult r = train(c, tiny_data());
    const auto dir = scratch_dir("ckpt");
    save_checkpoint(dir, c, r.model);
    Checkpoint back = load_checkpoint(dir);
    CHECK(format_config(back.config) == format_config(c));
    const data::ModalBatch batch = data::full_batch(tiny_data(20, 9));
    const auto opts = c.forward_options(uncertainty::Mode::infer);
    CHECK(predict(back.model, batch, opts).prob_positive == predict(r.model, batch, opts).prob_positive);
    std::filesystem::resize_file(dir / "model.bin", 100);
    CHECK_THROWS_AS(load_checkpoint(dir), data::ParseError);
    std::filesystem::remove_all(dir);
  }
}

TEST_SUITE("experiments") {
  TEST_CASE("prediction chunking does not change results") {
    TrainConfig c = tiny_config();
    UrmfModel model(c.model_dims(), 2);
    const data::ModalBatch batch = data::full_batch(tiny_data(37));
    const auto opts = c.forward_options(uncertainty::Mode::infer);
    const Predictions whole = predict(model, batch, opts, 256), pieces = predict(model, batch, opts, 5);
    CHECK(whole.prob_positive == pieces.prob_positive);
    CHECK(whole.alpha_i == pieces.alpha_i);
  }

  TEST_CASE("ablation table structure and full-model consistency") {
    TrainConfig c = tiny_config();
    c.epochs = 1;
    const Split split = split_dataset(tiny_data(80));
    const auto rows = run_ablations(c, split, {1, 2}, {}, 2);
    REQUIRE(rows.size() == 7);
    const char* names[] = {"w/o L_align", "w/o L_IB", "w/o L_reg", "w/o L_UCL", "w/o Dynamic Fusion",
                           "Standard Transformer", "URMF (Full)"};
    for (std::size_t i = 0; i < 7; ++i) CHECK(rows[i].variant == names[i]);
    TrainConfig plain = c;
    plain.seed = 2;
    TrainResult r = train(plain, split.train);
    const MetricsReport m = evaluate(r.model, split.test, plain.forward_options(uncertainty::Mode::infer));
    CHECK(rows[6].runs[1].metrics.accuracy == m.accuracy);
    CHECK(rows[6].runs[1].metrics.f1 == m.f1);
    CHECK(rows[6].acc_mean == doctest::Approx((rows[6].runs[0].metrics.accuracy + m.accuracy) / 2));
    CHECK(ablation_table(rows).rows().size() == 7);
  }

  TEST_CASE("robustness table structure and the p = 0 row") {
    TrainConfig c = tiny_config();
    c.epochs = 1;
    const Split split = split_dataset(tiny_data(80));
    const std::vector<double> levels = {0.0, 0.5, 1.0};
    const auto rows = run_robustness(c, split, data::Target::image, levels, {4, 5}, {}, 1);
    CHECK(rows.size() == levels.size() * 2 * 2);
    TrainConfig plain = c;
    plain.seed = 4;
    TrainResult r = train(plain, split.train);
    const MetricsReport m = evaluate(r.model, split.test, plain.forward_options(uncertainty::Mode::infer));
    CHECK(rows[0].variant == "urmf");
    CHECK(std::abs(rows[0].metrics.accuracy - m.accuracy) <= 1e-9);
    CHECK(rows[1].variant == "equal_weight");
    CHECK(rows[1].metrics.clean.mean_alpha_i == 0.5);
    CHECK(rows[4].metrics.corrupted.count == split.test.size());
    CHECK_THROWS(run_robustness(c, split, data::Target::image, {1.5}, {1}));
  }

  TEST_CASE("parallel and serial schedules agree") {
    TrainConfig c = tiny_config();
    c.epochs = 1;
    const Split split = split_dataset(tiny_data(80));
    const auto serial = run_robustness(c, split, data::Target::text, {0.5}, {1, 2, 3}, {}, 1);
    const auto parallel = run_robustness(c, split, data::Target::text, {0.5}, {1, 2, 3}, {}, 3);
    CHECK(robustness_table(serial).str() == robustness_table(parallel).str());
  }

  TEST_CASE("gradcheck passes on every term and catches a broken rule") {
    for (LossTerm term : {LossTerm::total, LossTerm::task, LossTerm::kl_ib, LossTerm::reg, LossTerm::align,
                          LossTerm::ucl}) {
      GradcheckRequest req;
      req.term = term;
      const ad::GradcheckReport r = run_gradcheck(req);
      CAPTURE(loss_term_name(term));
      CHECK_MESSAGE(r.passed, r.worst_parameter() << " " << r.max_rel_error);
    }
    GradcheckRequest broken;
    broken.augment = [](Tape& tape, Var loss, UrmfModel& model) {
      Var w = tape.leaf(model.find("classifier.bias"));
      // Records sum(w) but back-propagates twice the true gradient.
      Var s = tape.record(Tensor::scalar(w.value()[0] + w.value()[1]), {w}, [](const ad::BackwardArgs& a) {
        for (std::size_t i = 0; i < 2; ++i) (*a.grad_inputs[0])[i] += 2.0 * a.grad_output.item();
      });
      return loss + s;
    };
    const ad::GradcheckReport r = run_gradcheck(broken);
    CHECK_FALSE(r.passed);
    CHECK(r.worst_parameter() == "classifier.bias");
  }

  TEST_CASE("split") {
    const data::Dataset ds = tiny_data(10);
    const Split s = split_dataset(ds);
    CHECK(s.train.size() == 8);
    CHECK(s.test.size() == 2);
    CHECK(s.test.labels[1] == ds.labels[9]);
    CHECK_THROWS(split_dataset(ds, 1.0));
  }
}
