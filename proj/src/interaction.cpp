#include "urmf/interaction.hpp"

#include <cmath>
#include <stdexcept>

namespace urmf::interaction {
namespace {

// Lifts a [n x d] sequence to [1 x n x d]; reports whether it did.
Var as_batched(Var x, bool& lifted) {
  const ad::Shape& s = x.shape();
  lifted = s.size() == 2;
  if (lifted) return ad::reshape(x, {1, s[0], s[1]});
  if (s.size() != 3) {
    throw ad::DimensionError("expected a [n x d] or [B x n x d] sequence, got " + ad::shape_to_string(s));
  }
  return x;
}

// [B x len x d] -> [B*H x len x d/H]
Var split_heads(Var x, std::size_t batch, std::size_t len, std::size_t heads, std::size_t head_dim) {
  Var r = ad::reshape(x, {batch, len, heads, head_dim});
  return ad::reshape(ad::transpose12(r), {batch * heads, len, head_dim});
}

// [B*H x len x d/H] -> [B*len x d]
Var merge_heads(Var x, std::size_t batch, std::size_t len, std::size_t heads, std::size_t head_dim) {
  Var r = ad::reshape(x, {batch, heads, len, head_dim});
  return ad::reshape(ad::transpose12(r), {batch * len, heads * head_dim});
}

Var attention(Tape& tape, Var queries, Var context, MultiHeadAttention& p) {
  bool lifted_q = false, lifted_c = false;
  Var q_in = as_batched(queries, lifted_q);
  Var c_in = as_batched(context, lifted_c);
  const std::size_t d = p.model_dim();
  const std::size_t batch = q_in.shape()[0], n = q_in.shape()[1], m = c_in.shape()[1];
  if (q_in.shape()[2] != d || c_in.shape()[2] != d || c_in.shape()[0] != batch) {
    throw ad::DimensionError("attention: query " + ad::shape_to_string(queries.shape()) + " and context " +
                             ad::shape_to_string(context.shape()) + " do not match model dim " +
                             std::to_string(d));
  }
  if (n == 0 || m == 0) throw ad::EmptySequenceError("attention: empty query or context sequence");
  const std::size_t heads = p.heads, head_dim = d / heads;

  Var q = split_heads(p.query(tape, ad::reshape(q_in, {batch * n, d})), batch, n, heads, head_dim);
  Var k = split_heads(p.key(tape, ad::reshape(c_in, {batch * m, d})), batch, m, heads, head_dim);
  Var v = split_heads(p.value(tape, ad::reshape(c_in, {batch * m, d})), batch, m, heads, head_dim);

  Var scores = ad::scale(ad::bmm_nt(q, k), 1.0 / std::sqrt(static_cast<double>(head_dim)));
  Var ctx = ad::bmm(ad::row_softmax(scores), v);
  Var out = p.output(tape, merge_heads(ctx, batch, n, heads, head_dim));
  return lifted_q ? ad::reshape(out, {n, d}) : ad::reshape(out, {batch, n, d});
}

}  // namespace

MultiHeadAttention::MultiHeadAttention(const std::string& name, std::size_t d, std::size_t heads)
    : heads(heads),
      query(name + ".query", d, d),
      key(name + ".key", d, d, false),
      value(name + ".value", d, d),
      output(name + ".output", d, d) {
  if (heads == 0 || d % heads != 0) {
    throw std::invalid_argument("model dim " + std::to_string(d) + " is not divisible by " +
                                std::to_string(heads) + " heads");
  }
}

void MultiHeadAttention::collect(std::vector<Parameter*>& out) {
  query.collect(out);
  key.collect(out);
  value.collect(out);
  output.collect(out);
}

BlockParams::BlockParams(const std::string& name, std::size_t d, std::size_t heads, std::size_t expansion)
    : cross(name + ".cross", d, heads),
      self(name + ".self", d, heads),
      ffn_in(name + ".ffn_in", d, expansion * d),
      ffn_out(name + ".ffn_out", expansion * d, d),
      ln_cross(name + ".ln_cross", d),
      ln_self(name + ".ln_self", d),
      ln_ffn(name + ".ln_ffn", d) {}

void BlockParams::init(std::mt19937_64& rng) {
  for (Linear* l : {&cross.query, &cross.key, &cross.value, &cross.output, &self.query, &self.key,
                    &self.value, &self.output, &ffn_in, &ffn_out}) {
    l->init_glorot(rng);
  }
}

void BlockParams::collect(std::vector<Parameter*>& out) {
  cross.collect(out);
  self.collect(out);
  ffn_in.collect(out);
  ffn_out.collect(out);
  ln_cross.collect(out);
  ln_self.collect(out);
  ln_ffn.collect(out);
}

std::size_t BlockParams::parameter_count() {
  std::vector<Parameter*> ps;
  collect(ps);
  std::size_t total = 0;
  for (const Parameter* p : ps) total += p->value.numel();
  return total;
}

Var mhca(Tape& tape, Var text, Var image, MultiHeadAttention& params) {
  return attention(tape, text, image, params);
}

Var mhsa(Tape& tape, Var x, MultiHeadAttention& params) { return attention(tape, x, x, params); }

Var ffn(Tape& tape, Var x, BlockParams& params) {
  return params.ffn_out(tape, ad::relu(params.ffn_in(tape, x)));
}

InteractionOutput interaction_block(Tape& tape, Var text, Var image, BlockParams& params, Ordering ordering) {
  InteractionOutput out;
  if (ordering == Ordering::urmf) {
    out.cross = params.ln_cross(tape, ad::add(mhca(tape, text, image, params.cross), text));
    out.self = params.ln_self(tape, ad::add(mhsa(tape, out.cross, params.self), out.cross));
    out.refined = params.ln_ffn(tape, ad::add(ffn(tape, out.self, params), out.self));
  } else {
    out.self = params.ln_self(tape, ad::add(mhsa(tape, text, params.self), text));
    out.cross = params.ln_cross(tape, ad::add(mhca(tape, out.self, image, params.cross), out.self));
    out.refined = params.ln_ffn(tape, ad::add(ffn(tape, out.cross, params), out.cross));
  }
  out.pooled = ad::mean_pool_rows(out.refined);
  return out;
}

InteractionOutput interaction_stack(Tape& tape, Var text, Var image, std::vector<BlockParams>& blocks,
                                    Ordering ordering) {
  if (blocks.empty()) throw std::invalid_argument("interaction_stack: no blocks");
  InteractionOutput out;
  Var x = text;
  for (BlockParams& block : blocks) {
    out = interaction_block(tape, x, image, block, ordering);
    x = out.refined;
  }
  return out;
}

InputProjection::InputProjection(std::size_t d_t, std::size_t d_i, std::size_t d)
    : text("project.text", d_t, d), image("project.image", d_i, d) {}

void InputProjection::init(std::mt19937_64& rng) {
  text.init_glorot(rng);
  image.init_glorot(rng);
}

ProjectedInputs project_inputs(Tape& tape, Var text_raw, Var image_raw, InputProjection& params) {
  return {params.text(tape, text_raw), params.image(tape, image_raw)};
}

}  // namespace urmf::interaction
