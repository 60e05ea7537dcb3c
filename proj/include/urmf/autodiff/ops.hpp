#pragma once

#include <cstddef>
#include <vector>

#include "urmf/autodiff/tape.hpp"

// Differentiable kernels. Every op records its local gradient rule on the
// tape of its inputs; mixing Vars from different tapes throws.
namespace urmf::ad {

// ---- linear algebra --------------------------------------------------------

// [r x k] . [k x c] -> [r x c]
Var matmul(Var a, Var b);
// [r x k] . [c x k]^T -> [r x c]
Var matmul_nt(Var a, Var b);
// Batched: [g x r x k] . [g x k x c] -> [g x r x c]
Var bmm(Var a, Var b);
// Batched with transposed right operand: [g x r x k] . [g x c x k]^T -> [g x r x c]
Var bmm_nt(Var a, Var b);
// x . w + b with w [in x out], b [out]
Var affine(Var x, Var w, Var b);

// ---- elementwise -----------------------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double s);
Var add_scalar(Var x, double s);
Var exp(Var x);
Var log(Var x);
Var relu(Var x);
Var square(Var x);
Var reciprocal(Var x);
// Gradient is zero where the input lies outside (lo, hi).
Var clamp(Var x, double lo, double hi);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double s, Var x) { return scale(x, s); }
inline Var operator-(Var x) { return scale(x, -1.0); }

// ---- broadcasting ----------------------------------------------------------

// x [... x c] + b [c], added to every row.
Var add_bias(Var x, Var b);
// x [r x c] with row i multiplied by s[i]; s has shape [r].
Var scale_rows(Var x, Var s);

// ---- reductions and normalizations -----------------------------------------

// Softmax over the trailing axis, with per-row max subtraction.
Var row_softmax(Var x);
// Per-row standardization over the trailing axis with biased (1/c) variance,
// followed by gamma * xhat + beta.
Var layer_norm(Var x, Var gamma, Var beta, double eps);
// [... x r x c] -> [... x c], arithmetic mean over the r axis.
Var mean_pool_rows(Var x);
// [... x c] -> [...]
Var row_sum(Var x);
Var row_mean(Var x);
// Full reductions to a scalar.
Var sum(Var x);
Var mean(Var x);
// Rows divided by sqrt(|row|^2 + eps).
Var l2_normalize_rows(Var x, double eps = 1e-12);

// ---- shape manipulation ----------------------------------------------------

Var concat_last(Var a, Var b);
Var slice_last(Var x, std::size_t start, std::size_t length);
Var reshape(Var x, Shape shape);
// [a x b x c x e] -> [a x c x b x e]
Var transpose12(Var x);
// x [r x c] -> [r], picking x[i, index[i]].
Var gather_cols(Var x, const std::vector<std::size_t>& index);

// ---- losses ----------------------------------------------------------------

// Row-wise contrastive negative log-likelihood over a square logit matrix L
// [K x K] whose diagonal holds the positive pairs:
//   mean_k  -L_kk + log( w * exp(L_kk) + sum_{j != k} exp(L_kj) )
// `positive_weight` is the multiplicity of the positive term in the
// denominator (1 gives the conventional InfoNCE form). Requires K >= 2.
Var contrastive_nll(Var logits, double positive_weight);

class ContrastiveBatchError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class EmptySequenceError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace urmf::ad
