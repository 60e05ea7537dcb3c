#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "urmf/autodiff/layers.hpp"

// Cross-modal interaction: visual context is injected into the text sequence
// by cross-attention before self-attention and the feed-forward network.
namespace urmf::interaction {

using ad::Linear;
using ad::Parameter;
using ad::Tape;
using ad::Var;

enum class Ordering {
  urmf,      // MHCA -> MHSA -> FFN
  standard,  // MHSA -> MHCA -> FFN
};

// Multi-head scaled dot-product attention with query/key/value/output
// projections, all [d x d].
struct MultiHeadAttention {
  std::size_t heads;
  Linear query;
  Linear key;  // no bias: a shared key offset cancels in the softmax
  Linear value;
  Linear output;

  MultiHeadAttention(const std::string& name, std::size_t d, std::size_t heads);
  std::size_t model_dim() const { return query.in_features(); }
  void collect(std::vector<Parameter*>& out);
};

// All weights of one interaction block.
struct BlockParams {
  MultiHeadAttention cross;
  MultiHeadAttention self;
  Linear ffn_in;   // d -> expansion * d
  Linear ffn_out;  // expansion * d -> d
  ad::LayerNormParams ln_cross;
  ad::LayerNormParams ln_self;
  ad::LayerNormParams ln_ffn;

  BlockParams(const std::string& name, std::size_t d, std::size_t heads, std::size_t expansion);
  void init(std::mt19937_64& rng);
  void collect(std::vector<Parameter*>& out);
  std::size_t parameter_count();
};

struct InteractionOutput {
  Var cross;     // after the cross-attention sublayer (LN(MHCA + x))
  Var self;      // after the self-attention sublayer (LN(MHSA + x))
  Var refined;   // after the FFN sublayer: the block output
  Var pooled;    // mean over tokens of `refined`
};

// Sequences are [n x d] for a single sample or [B x n x d] for a batch; the
// returned tensors keep the input rank. These return the pre-residual term.
Var mhca(Tape& tape, Var text, Var image, MultiHeadAttention& params);
Var mhsa(Tape& tape, Var x, MultiHeadAttention& params);
Var ffn(Tape& tape, Var x, BlockParams& params);

InteractionOutput interaction_block(Tape& tape, Var text, Var image, BlockParams& params,
                                    Ordering ordering = Ordering::urmf);

// Stacked blocks; the image sequence is shared and each block refines the
// text sequence. `pooled` and the intermediates come from the last block.
InteractionOutput interaction_stack(Tape& tape, Var text, Var image, std::vector<BlockParams>& blocks,
                                    Ordering ordering = Ordering::urmf);

// Learned affine maps of both raw modalities into the shared width d.
struct InputProjection {
  Linear text;
  Linear image;

  InputProjection(std::size_t d_t, std::size_t d_i, std::size_t d);
  void init(std::mt19937_64& rng);
  void collect(std::vector<Parameter*>& out) { text.collect(out); image.collect(out); }
};

struct ProjectedInputs {
  Var text;
  Var image;
};

ProjectedInputs project_inputs(Tape& tape, Var text_raw, Var image_raw, InputProjection& params);

}  // namespace urmf::interaction
