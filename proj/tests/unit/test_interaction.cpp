#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "helpers.hpp"
#include "urmf/interaction.hpp"

using namespace urmf::interaction;
using urmf::ad::Shape;
using urmf::ad::Tensor;
using testing::max_abs_diff;
using testing::random_tensor;

namespace {

void identity_attention(MultiHeadAttention& a) {
  for (Linear* l : {&a.query, &a.key, &a.value, &a.output}) l->set_identity();
}

void zero_block(BlockParams& p) {
  for (Linear* l : {&p.cross.query, &p.cross.key, &p.cross.value, &p.cross.output, &p.self.query, &p.self.key,
                    &p.self.value, &p.self.output, &p.ffn_in, &p.ffn_out}) {
    l->set_zero();
  }
}

Tensor repeat_row(const std::vector<double>& v, std::size_t rows) {
  Tensor t({rows, v.size()});
  for (std::size_t r = 0; r < rows; ++r) std::copy(v.begin(), v.end(), t.data() + r * v.size());
  return t;
}

// Reference layer norm with unit gain and zero shift.
Tensor plain_ln(const Tensor& x) {
  Tensor out(x.shape());
  const std::size_t c = x.last_dim(), rows = x.numel() / c;
  for (std::size_t r = 0; r < rows; ++r) {
    double mean = 0.0, var = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += x[r * c + j] / static_cast<double>(c);
    for (std::size_t j = 0; j < c; ++j) var += (x[r * c + j] - mean) * (x[r * c + j] - mean) / static_cast<double>(c);
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] = (x[r * c + j] - mean) / std::sqrt(var + 1e-5);
  }
  return out;
}

Tensor permute_rows(const Tensor& x, const std::vector<std::size_t>& perm) {
  const std::size_t c = x.last_dim();
  Tensor out(x.shape());
  for (std::size_t r = 0; r < perm.size(); ++r) std::copy_n(x.data() + perm[r] * c, c, out.data() + r * c);
  return out;
}

}  // namespace

TEST_SUITE("attention") {
  TEST_CASE("single key: every output row equals its value") {
    MultiHeadAttention a("a", 3, 1);
    identity_attention(a);
    Tape tape;
    const Tensor text = Tensor::from_rows({{1, 0, 2}, {-1, 3, 0}});
    const Tensor out = mhca(tape, tape.constant(text), tape.constant(Tensor::from_rows({{0.5, -2, 4}})), a).value();
    CHECK(out == repeat_row({0.5, -2, 4}, 2));
  }

  TEST_CASE("identical keys and values give that value") {
    MultiHeadAttention a("a", 4, 1);
    identity_attention(a);
    std::mt19937_64 rng(2);
    Tape tape;
    const Tensor out =
        mhca(tape, tape.constant(random_tensor(rng, {3, 4})), tape.constant(repeat_row({1, 2, 3, 4}, 5)), a).value();
    CHECK(max_abs_diff(out, repeat_row({1, 2, 3, 4}, 3)) < 1e-12);
  }

  TEST_CASE("zero output projection gives zeros") {
    std::mt19937_64 rng(3);
    MultiHeadAttention a("a", 4, 2);
    identity_attention(a);
    a.query.init_glorot(rng);
    a.output.set_zero();
    Tape tape;
    const Tensor out = mhca(tape, tape.constant(random_tensor(rng, {3, 4})), tape.constant(random_tensor(rng, {2, 4})), a).value();
    CHECK(out == Tensor({3, 4}));
  }

  TEST_CASE("self-attention over equal rows or a single row") {
    MultiHeadAttention a("a", 3, 1);
    identity_attention(a);
    Tape tape;
    CHECK(max_abs_diff(mhsa(tape, tape.constant(repeat_row({2, -1, 0.5}, 4)), a).value(), repeat_row({2, -1, 0.5}, 4)) <
          1e-12);

    std::mt19937_64 rng(4);
    a.value.init_glorot(rng);
    a.value.bias.value = Tensor::vector({0.1, 0.2, 0.3});
    const Tensor row = Tensor::from_rows({{1, 2, 3}});
    const Tensor expected = a.value(tape, tape.constant(row)).value();
    CHECK(max_abs_diff(mhsa(tape, tape.constant(row), a).value(), expected) < 1e-12);
  }

  TEST_CASE("self-attention is permutation equivariant") {
    std::mt19937_64 rng(5);
    MultiHeadAttention a("a", 8, 2);
    for (Linear* l : {&a.query, &a.key, &a.value, &a.output}) l->init_glorot(rng);
    const Tensor x = random_tensor(rng, {6, 8});
    std::vector<std::size_t> perm(6);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Tape tape;
    const Tensor y = mhsa(tape, tape.constant(x), a).value();
    const Tensor py = mhsa(tape, tape.constant(permute_rows(x, perm)), a).value();
    CHECK(max_abs_diff(py, permute_rows(y, perm)) < 1e-12);
  }

  TEST_CASE("contract errors") {
    CHECK_THROWS_AS(MultiHeadAttention("a", 6, 4), std::invalid_argument);
    MultiHeadAttention a("a", 4, 2);
    Tape tape;
    CHECK_THROWS_AS(mhca(tape, tape.constant(Tensor({2, 4})), tape.constant(Tensor({2, 3})), a), urmf::ad::DimensionError);
    CHECK_THROWS_AS(mhca(tape, tape.constant(Tensor({2, 4})), tape.constant(Tensor({0, 4})), a),
                    urmf::ad::EmptySequenceError);
  }
}

TEST_SUITE("ffn") {
  TEST_CASE("zero weights give zeros") {
    BlockParams p("b", 2, 1, 4);
    zero_block(p);
    Tape tape;
    CHECK(ffn(tape, tape.constant(Tensor::from_rows({{1, -2}, {3, 4}})), p).value() == Tensor({2, 2}));
  }

  TEST_CASE("identity weights apply ReLU") {
    BlockParams p("b", 2, 1, 4);
    p.ffn_in.set_identity();
    p.ffn_out.set_identity();
    Tape tape;
    CHECK(ffn(tape, tape.constant(Tensor::from_rows({{-1, 2}})), p).value() == Tensor::from_rows({{0, 2}}));
  }

  TEST_CASE("rows are processed independently") {
    std::mt19937_64 rng(6);
    BlockParams p("b", 4, 2, 4);
    p.init(rng);
    const Tensor row = random_tensor(rng, {1, 4});
    Tensor twice({2, 4});
    std::copy_n(row.data(), 4, twice.data());
    std::copy_n(row.data(), 4, twice.data() + 4);
    Tape tape;
    const Tensor out = ffn(tape, tape.constant(twice), p).value();
    for (std::size_t j = 0; j < 4; ++j) CHECK(out.at(0, j) == out.at(1, j));
  }
}

TEST_SUITE("interaction block") {
  TEST_CASE("zero sublayers reduce to three layer norms") {
    std::mt19937_64 rng(7);
    BlockParams p("b", 4, 2, 4);
    zero_block(p);
    const Tensor text = random_tensor(rng, {5, 4});
    Tape tape;
    const InteractionOutput out = interaction_block(tape, tape.constant(text), tape.constant(random_tensor(rng, {3, 4})), p);
    const Tensor ln3 = plain_ln(plain_ln(plain_ln(text)));
    std::vector<double> pooled(4, 0.0);
    for (std::size_t r = 0; r < 5; ++r)
      for (std::size_t j = 0; j < 4; ++j) pooled[j] += ln3.at(r, j) / 5.0;
    for (std::size_t j = 0; j < 4; ++j) CHECK(out.pooled.value()[j] == doctest::Approx(pooled[j]).epsilon(1e-12));
  }

  TEST_CASE("orderings differ on random weights but share parameters") {
    std::mt19937_64 rng(8);
    BlockParams p("b", 8, 2, 4);
    p.init(rng);
    Tape tape;
    Var text = tape.constant(random_tensor(rng, {4, 8})), image = tape.constant(random_tensor(rng, {3, 8}));
    const Tensor a = interaction_block(tape, text, image, p, Ordering::urmf).pooled.value();
    const Tensor b = interaction_block(tape, text, image, p, Ordering::standard).pooled.value();
    CHECK(max_abs_diff(a, b) > 1e-6);
    BlockParams q("c", 8, 2, 4);
    CHECK(p.parameter_count() == q.parameter_count());
    CHECK(p.parameter_count() == 4 * (8 * 8 + 8) * 2 - 2 * 8 + (8 * 32 + 32) + (32 * 8 + 8) + 3 * 2 * 8);
  }

  TEST_CASE("single token and patch") {
    std::mt19937_64 rng(9);
    BlockParams p("b", 8, 2, 4);
    p.init(rng);
    Tape tape;
    const InteractionOutput out =
        interaction_block(tape, tape.constant(random_tensor(rng, {1, 8})), tape.constant(random_tensor(rng, {1, 8})), p);
    CHECK(out.pooled.shape() == Shape{8});
    CHECK(out.refined.shape() == Shape{1, 8});
  }

  TEST_CASE("equivariance in text rows, invariance in image rows") {
    std::mt19937_64 rng(10);
    BlockParams p("b", 8, 2, 4);
    p.init(rng);
    const Tensor text = random_tensor(rng, {5, 8}), image = random_tensor(rng, {4, 8});
    std::vector<std::size_t> tp(5), ip(4);
    std::iota(tp.begin(), tp.end(), 0);
    std::iota(ip.begin(), ip.end(), 0);
    std::shuffle(tp.begin(), tp.end(), rng);
    std::shuffle(ip.begin(), ip.end(), rng);
    Tape tape;
    const InteractionOutput base = interaction_block(tape, tape.constant(text), tape.constant(image), p);
    const InteractionOutput moved =
        interaction_block(tape, tape.constant(permute_rows(text, tp)), tape.constant(permute_rows(image, ip)), p);
    CHECK(max_abs_diff(moved.refined.value(), permute_rows(base.refined.value(), tp)) < 1e-12);
    CHECK(max_abs_diff(moved.pooled.value(), base.pooled.value()) < 1e-12);
  }

  TEST_CASE("batched and per-sample evaluation agree") {
    std::mt19937_64 rng(11);
    BlockParams p("b", 8, 2, 4);
    p.init(rng);
    const Tensor text = random_tensor(rng, {3, 4, 8}), image = random_tensor(rng, {3, 2, 8});
    Tape tape;
    const Tensor batched = interaction_block(tape, tape.constant(text), tape.constant(image), p).pooled.value();
    CHECK(batched.shape() == Shape{3, 8});
    for (std::size_t k = 0; k < 3; ++k) {
      Tensor t({4, 8}), i({2, 8});
      std::copy_n(text.data() + k * 32, 32, t.data());
      std::copy_n(image.data() + k * 16, 16, i.data());
      const Tensor single = interaction_block(tape, tape.constant(t), tape.constant(i), p).pooled.value();
      for (std::size_t j = 0; j < 8; ++j) CHECK(single[j] == doctest::Approx(batched.at(k, j)).epsilon(1e-12));
    }
  }

  TEST_CASE("gradients through the block match finite differences") {
    std::mt19937_64 rng(12);
    BlockParams p("b", 4, 2, 2);
    p.init(rng);
    for (auto* ln : {&p.ln_cross, &p.ln_self, &p.ln_ffn}) {
      ln->gamma.value = testing::uniform_tensor(rng, {4}, 0.5, 1.5);
      ln->beta.value = random_tensor(rng, {4}, 0.1);
    }
    std::vector<Parameter*> params;
    p.collect(params);
    const Tensor text = random_tensor(rng, {2, 3, 4}), image = random_tensor(rng, {2, 2, 4});
    const Tensor weights = random_tensor(rng, {2, 4});
    for (Ordering o : {Ordering::urmf, Ordering::standard}) {
      const auto r = testing::check(
          [&](Tape& t) {
            return urmf::ad::sum(interaction_block(t, t.constant(text), t.constant(image), p, o).pooled * t.constant(weights));
          },
          params);
      CHECK_MESSAGE(r.passed, r.worst_parameter() << " " << r.max_rel_error);
    }
  }
}

TEST_SUITE("input projection") {
  TEST_CASE("identity, zero and shapes") {
    std::mt19937_64 rng(13);
    InputProjection proj(4, 4, 4);
    proj.text.set_identity();
    proj.image.set_identity();
    const Tensor t = random_tensor(rng, {3, 4}), i = random_tensor(rng, {2, 4});
    Tape tape;
    ProjectedInputs out = project_inputs(tape, tape.constant(t), tape.constant(i), proj);
    CHECK(out.text.value() == t);
    CHECK(out.image.value() == i);

    InputProjection wide(5, 3, 6);
    wide.init(rng);
    out = project_inputs(tape, tape.constant(random_tensor(rng, {2, 7, 5})), tape.constant(random_tensor(rng, {2, 4, 3})), wide);
    CHECK(out.text.shape() == Shape{2, 7, 6});
    CHECK(out.image.shape() == Shape{2, 4, 6});
    wide.text.set_zero();
    CHECK(project_inputs(tape, tape.constant(random_tensor(rng, {7, 5})), tape.constant(random_tensor(rng, {4, 3})), wide)
              .text.value() == Tensor({7, 6}));
  }
}
