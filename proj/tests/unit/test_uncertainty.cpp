#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "urmf/data.hpp"
#include "urmf/model.hpp"
#include "urmf/uncertainty.hpp"

using namespace urmf::uncertainty;
using urmf::ad::Shape;
using testing::max_abs_diff;
using testing::random_tensor;

namespace {

// Fusion weights evaluated literally, without any stabilization.
std::pair<double, double> direct_fusion(double sf, double si, double eps) {
  const double af = std::exp(1.0 / (sf + eps)), ai = std::exp(1.0 / (si + eps));
  return {af / (af + ai), ai / (af + ai)};
}

}  // namespace

TEST_SUITE("gaussian head") {
  TEST_CASE("zero heads give the standard normal") {
    GaussianHead head("h", 3, 2);
    head.mean.set_zero();
    head.log_var.set_zero();
    Tape tape;
    const GaussianPosterior p = gaussian_head(tape, tape.constant(Tensor::from_rows({{1, 2, 3}})), head);
    CHECK(p.mu.value() == Tensor({1, 2}));
    CHECK(p.log_var.value() == Tensor({1, 2}));
  }

  TEST_CASE("log-variance is clamped") {
    GaussianHead head("h", 1, 2);
    head.log_var.set_zero();
    head.log_var.bias.value = Tensor::vector({25.0, -25.0});
    Tape tape;
    const GaussianPosterior p = gaussian_head(tape, tape.constant(Tensor::from_rows({{1}})), head);
    CHECK(p.log_var.value() == Tensor::from_rows({{10.0, -10.0}}));
  }
}

TEST_SUITE("reparameterization") {
  TEST_CASE("fixed noise examples and shape errors") {
    Tape tape;
    const GaussianPosterior p{tape.constant(Tensor::from_rows({{1.5, -2}})), tape.constant(Tensor({1, 2}))};
    CHECK(sample_reparam(p, Tensor({1, 2})).value() == p.mu.value());
    const GaussianPosterior std_normal{tape.constant(Tensor({1, 1})), tape.constant(Tensor({1, 1}))};
    CHECK(sample_reparam(std_normal, Tensor::filled({1, 1}, 0.5)).value().item() == 0.5);
    CHECK_THROWS_AS(sample_reparam(p, Tensor({2, 1})), urmf::ad::DimensionError);
  }

  TEST_CASE("empirical mean of many samples") {
    std::mt19937_64 rng(1);
    const std::size_t n = 100000;
    Tape tape;
    const double mu = 0.7, log_var = std::log(2.5);
    const GaussianPosterior p{tape.constant(Tensor::filled({n, 1}, mu)), tape.constant(Tensor::filled({n, 1}, log_var))};
    const Tensor z = sample_reparam(p, random_tensor(rng, {n, 1})).value();
    double mean = 0.0;
    for (double v : z.values()) mean += v / static_cast<double>(n);
    CHECK(std::abs(mean - mu) <= 0.02 * std::sqrt(2.5));
  }
}

TEST_SUITE("scalar uncertainty") {
  TEST_CASE("mean variance") {
    Tape tape;
    auto sigma = [&](std::vector<double> lv) {
      Tensor t({1, lv.size()}, lv);
      return scalar_uncertainty({tape.constant(Tensor({1, lv.size()})), tape.constant(t)}).value()[0];
    };
    CHECK(sigma({0.0, std::log(2.0), std::log(3.0)}) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(sigma({0.0, 0.0}) == 1.0);
    CHECK(sigma({-10.0, -10.0, -10.0}) == doctest::Approx(std::exp(-10.0)).epsilon(1e-12));
  }
}

TEST_SUITE("fusion weights") {
  TEST_CASE("examples") {
    auto [f, i] = fusion_weights(0.7, 0.7);
    CHECK(f == 0.5);
    CHECK(i == 0.5);
    std::tie(f, i) = fusion_weights(0.5, 1.0, 0.0);
    const double e = std::exp(1.0);
    CHECK(std::abs(f - e * e / (e * e + e)) <= 1e-9);
    CHECK(std::abs(f - 0.7311) < 1e-4);
    std::tie(f, i) = fusion_weights(std::exp(-10.0), 1.0);
    CHECK(std::isfinite(f));
    CHECK(std::isfinite(i));
    CHECK(f > 1.0 - 1e-9);
  }

  TEST_CASE("agrees with the direct formula where it does not overflow") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.01, 20.0);
    for (int trial = 0; trial < 1000; ++trial) {
      const double sf = u(rng), si = u(rng);
      const auto [f, i] = fusion_weights(sf, si);
      const auto [df, di] = direct_fusion(sf, si, kFusionEps);
      CHECK(std::abs(f - df) <= 1e-9 * df);
      CHECK(std::abs(i - di) <= 1e-9 * di);
      CHECK(std::abs(f + i - 1.0) <= 1e-9);
    }
  }

  TEST_CASE("strictly decreasing in own uncertainty") {
    for (double other : {0.05, 1.0, 7.0}) {
      double prev_f = 2.0, prev_i = 2.0;
      for (int k = 0; k < 100; ++k) {
        const double s = 0.05 + 0.05 * k;
        const double af = fusion_weights(s, other).first;
        const double ai = fusion_weights(other, s).second;
        CHECK(af < prev_f);
        CHECK(ai < prev_i);
        prev_f = af;
        prev_i = ai;
      }
    }
  }

  TEST_CASE("batched form matches the scalar form") {
    std::mt19937_64 rng(3);
    const Tensor sf = testing::uniform_tensor(rng, {20}, 1e-4, 5.0), si = testing::uniform_tensor(rng, {20}, 1e-4, 5.0);
    Tape tape;
    const FusionWeights w = fusion_weights(tape.constant(sf), tape.constant(si));
    for (std::size_t k = 0; k < 20; ++k) {
      const auto [f, i] = fusion_weights(sf[k], si[k]);
      CHECK(w.alpha_f.value()[k] == doctest::Approx(f).epsilon(1e-12));
      CHECK(w.alpha_i.value()[k] == doctest::Approx(i).epsilon(1e-12));
    }
  }

  TEST_CASE("weighted contribution") {
    Tape tape;
    const GaussianPosterior p{tape.constant(Tensor::from_rows({{4, 8}})), tape.constant(Tensor({1, 2}))};
    CHECK(weighted_contribution(tape.constant(Tensor::vector({0.25})), p).value() == Tensor::from_rows({{1, 2}}));
    CHECK(weighted_contribution(tape.constant(Tensor::vector({1.0})), p).value() == p.mu.value());
    const Tensor a = weighted_contribution(tape.constant(Tensor::vector({0.3})), p).value();
    const Tensor b = weighted_contribution(tape.constant(Tensor::vector({0.7})), p).value();
    for (std::size_t j = 0; j < 2; ++j) CHECK(a[j] + b[j] == doctest::Approx(p.mu.value()[j]));
  }

  TEST_CASE("equal weights when dynamic fusion is off") {
    std::mt19937_64 rng(4);
    Tape tape;
    const GaussianPosterior f{tape.constant(random_tensor(rng, {3, 2})), tape.constant(random_tensor(rng, {3, 2}))};
    const GaussianPosterior i{tape.constant(random_tensor(rng, {3, 2})), tape.constant(random_tensor(rng, {3, 2}))};
    const FusionState s = fuse(tape, f, i, false);
    CHECK(s.alpha_f.value() == Tensor::filled({3}, 0.5));
    CHECK(s.alpha_i.value() == Tensor::filled({3}, 0.5));
  }
}

TEST_SUITE("joint head") {
  TEST_CASE("zero weights give a uniform prediction") {
    JointHead head(4);
    for (Linear* l : {&head.phi, &head.posterior.mean, &head.posterior.log_var, &head.classifier}) l->set_zero();
    std::mt19937_64 rng(5);
    Tape tape;
    const JointOutput out = joint_forward(tape, tape.constant(random_tensor(rng, {3, 4})),
                                          tape.constant(random_tensor(rng, {3, 4})), head, nullptr, Mode::infer);
    CHECK(out.probs.value() == Tensor::filled({3, 2}, 0.5));
  }

  TEST_CASE("infer is deterministic and equals train at zero noise") {
    std::mt19937_64 rng(6);
    JointHead head(4);
    head.init(rng);
    const Tensor cf = random_tensor(rng, {3, 4}), ci = random_tensor(rng, {3, 4});
    Tape tape;
    const Tensor a = joint_forward(tape, tape.constant(cf), tape.constant(ci), head, nullptr, Mode::infer).probs.value();
    const Tensor b = joint_forward(tape, tape.constant(cf), tape.constant(ci), head, nullptr, Mode::infer).probs.value();
    const Tensor zero({3, 4});
    const Tensor c = joint_forward(tape, tape.constant(cf), tape.constant(ci), head, &zero, Mode::train).probs.value();
    CHECK(a == b);
    CHECK(a == c);
  }

  TEST_CASE("logit gradients over heads and fusion match finite differences") {
    std::mt19937_64 rng(7);
    GaussianHead hf("f", 5, 4), hi("i", 5, 4);
    JointHead joint(4);
    hf.init(rng);
    hi.init(rng);
    joint.init(rng);
    hf.log_var.init_glorot(rng);
    hi.log_var.init_glorot(rng);
    std::vector<Parameter*> params;
    hf.collect(params);
    hi.collect(params);
    joint.collect(params);
    const Tensor xf = random_tensor(rng, {3, 5}), xi = random_tensor(rng, {3, 5}), noise = random_tensor(rng, {3, 4});
    const Tensor w = random_tensor(rng, {3, 2});
    const auto r = testing::check(
        [&](Tape& t) {
          const FusionState s = fuse(t, gaussian_head(t, t.constant(xf), hf), gaussian_head(t, t.constant(xi), hi), true);
          return urmf::ad::sum(joint_forward(t, s.contribution_f, s.contribution_i, joint, &noise, Mode::train).logits *
                               t.constant(w));
        },
        params);
    CHECK_MESSAGE(r.passed, r.worst_parameter() << " " << r.max_rel_error);
  }
}

TEST_SUITE("forward pass") {
  TEST_CASE("shape contract and equal-weight flag") {
    urmf::data::SynthSpec spec;
    spec.n = 4;
    spec.m = 3;
    spec.d_t = 6;
    spec.d_i = 5;
    spec.n_samples = 5;
    const urmf::data::ModalBatch batch = urmf::data::full_batch(urmf::data::generate_synthetic(spec));
    urmf::ModelDims dims;
    dims.d_t = 6;
    dims.d_i = 5;
    dims.d = 8;
    dims.heads = 2;
    dims.latent = 7;
    urmf::UrmfModel model(dims, 1);
    Tape tape;
    urmf::ForwardOptions opts;
    urmf::ForwardTrace tr = urmf::urmf_forward(tape, batch, model, nullptr, opts);
    CHECK(tr.joint.probs.shape() == Shape{5, 2});
    for (const GaussianPosterior* p : {&tr.posteriors.text, &tr.posteriors.image, &tr.posteriors.interaction}) {
      CHECK(p->mu.shape() == Shape{5, 7});
      CHECK(p->log_var.shape() == Shape{5, 7});
    }
    CHECK(tr.fusion.alpha_f.shape() == Shape{5});
    CHECK(tr.fusion.sigma_i_sq.shape() == Shape{5});
    opts.dynamic_fusion = false;
    tr = urmf::urmf_forward(tape, batch, model, nullptr, opts);
    CHECK(tr.fusion.alpha_f.value() == Tensor::filled({5}, 0.5));
    CHECK(tr.fusion.alpha_i.value() == Tensor::filled({5}, 0.5));
    opts.mode = Mode::train;
    CHECK_THROWS(urmf::urmf_forward(tape, batch, model, nullptr, opts));
  }
}
