#include "urmf/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace urmf::ad {
namespace {

Tape& common_tape(const Var& a, const Var& b) {
  Tape& t = a.tape();
  if (&b.tape() != &t) throw std::logic_error("operands live on different tapes");
  return t;
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_to_string(a) +
                       " and " + shape_to_string(b));
}

void require_rank(const char* op, const Var& x, std::size_t rank) {
  if (x.shape().size() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + shape_to_string(x.shape()));
  }
}

// C[r x c] += A[r x k] . B[k x c]
void gemm_nn(const double* a, const double* b, double* c, std::size_t r, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < r; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[r x c] += A[r x k] . B[c x k]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t r, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < r; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
      std::size_t p = 0;
      for (; p + 4 <= k; p += 4) {
        s0 += arow[p] * brow[p];
        s1 += arow[p + 1] * brow[p + 1];
        s2 += arow[p + 2] * brow[p + 2];
        s3 += arow[p + 3] * brow[p + 3];
      }
      for (; p < k; ++p) s0 += arow[p] * brow[p];
      c[i * n + j] += (s0 + s1) + (s2 + s3);
    }
  }
}

// C[k x c] += A[r x k]^T . B[r x c]
void gemm_tn(const double* a, const double* b, double* c, std::size_t r, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < r; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename F, typename G>
Var unary(Var x, F forward, G derivative) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.numel(); ++i) out[i] = forward(xv[i]);
  return x.tape().record(std::move(out), {x}, [derivative](const BackwardArgs& a) {
    if (!a.grad_inputs[0]) return;
    const Tensor& in = *a.inputs[0];
    Tensor& gx = *a.grad_inputs[0];
    for (std::size_t i = 0; i < in.numel(); ++i) {
      gx[i] += a.grad_output[i] * derivative(in[i], a.output[i]);
    }
  });
}

std::size_t rows_of(const Tensor& t) { return t.numel() / std::max<std::size_t>(t.last_dim(), 1); }

}  // namespace

// ---- linear algebra --------------------------------------------------------

Var matmul(Var a, Var b) {
  Tape& tape = common_tape(a, b);
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t r = a.shape()[0], k = a.shape()[1], c = b.shape()[1];
  if (b.shape()[0] != k) shape_error("matmul", a.shape(), b.shape());
  Tensor out({r, c});
  gemm_nn(a.value().data(), b.value().data(), out.data(), r, k, c);
  return tape.record(std::move(out), {a, b}, [r, k, c](const BackwardArgs& g) {
    if (g.grad_inputs[0]) gemm_nt(g.grad_output.data(), g.inputs[1]->data(), g.grad_inputs[0]->data(), r, c, k);
    if (g.grad_inputs[1]) gemm_tn(g.inputs[0]->data(), g.grad_output.data(), g.grad_inputs[1]->data(), r, k, c);
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& tape = common_tape(a, b);
  require_rank("matmul_nt", a, 2);
  require_rank("matmul_nt", b, 2);
  const std::size_t r = a.shape()[0], k = a.shape()[1], c = b.shape()[0];
  if (b.shape()[1] != k) shape_error("matmul_nt", a.shape(), b.shape());
  Tensor out({r, c});
  gemm_nt(a.value().data(), b.value().data(), out.data(), r, k, c);
  return tape.record(std::move(out), {a, b}, [r, k, c](const BackwardArgs& g) {
    // dA = dC . B ; dB = dC^T . A
    if (g.grad_inputs[0]) gemm_nn(g.grad_output.data(), g.inputs[1]->data(), g.grad_inputs[0]->data(), r, c, k);
    if (g.grad_inputs[1]) gemm_tn(g.grad_output.data(), g.inputs[0]->data(), g.grad_inputs[1]->data(), r, c, k);
  });
}

Var bmm(Var a, Var b) {
  Tape& tape = common_tape(a, b);
  require_rank("bmm", a, 3);
  require_rank("bmm", b, 3);
  const std::size_t groups = a.shape()[0], r = a.shape()[1], k = a.shape()[2], c = b.shape()[2];
  if (b.shape()[0] != groups || b.shape()[1] != k) shape_error("bmm", a.shape(), b.shape());
  Tensor out({groups, r, c});
  for (std::size_t g = 0; g < groups; ++g) {
    gemm_nn(a.value().data() + g * r * k, b.value().data() + g * k * c, out.data() + g * r * c, r, k, c);
  }
  return tape.record(std::move(out), {a, b}, [groups, r, k, c](const BackwardArgs& g) {
    for (std::size_t i = 0; i < groups; ++i) {
      const double* dc = g.grad_output.data() + i * r * c;
      if (g.grad_inputs[0]) gemm_nt(dc, g.inputs[1]->data() + i * k * c, g.grad_inputs[0]->data() + i * r * k, r, c, k);
      if (g.grad_inputs[1]) gemm_tn(g.inputs[0]->data() + i * r * k, dc, g.grad_inputs[1]->data() + i * k * c, r, k, c);
    }
  });
}

Var bmm_nt(Var a, Var b) {
  Tape& tape = common_tape(a, b);
  require_rank("bmm_nt", a, 3);
  require_rank("bmm_nt", b, 3);
  const std::size_t groups = a.shape()[0], r = a.shape()[1], k = a.shape()[2], c = b.shape()[1];
  if (b.shape()[0] != groups || b.shape()[2] != k) shape_error("bmm_nt", a.shape(), b.shape());
  Tensor out({groups, r, c});
  for (std::size_t g = 0; g < groups; ++g) {
    gemm_nt(a.value().data() + g * r * k, b.value().data() + g * c * k, out.data() + g * r * c, r, k, c);
  }
  return tape.record(std::move(out), {a, b}, [groups, r, k, c](const BackwardArgs& g) {
    for (std::size_t i = 0; i < groups; ++i) {
      const double* dc = g.grad_output.data() + i * r * c;
      if (g.grad_inputs[0]) gemm_nn(dc, g.inputs[1]->data() + i * c * k, g.grad_inputs[0]->data() + i * r * k, r, c, k);
      if (g.grad_inputs[1]) gemm_tn(dc, g.inputs[0]->data() + i * r * k, g.grad_inputs[1]->data() + i * c * k, r, c, k);
    }
  });
}

Var affine(Var x, Var w, Var b) { return add_bias(matmul(x, w), b); }

// ---- elementwise -----------------------------------------------------------

namespace {

template <typename F, typename GA, typename GB>
Var binary(const char* name, Var a, Var b, F forward, GA da, GB db) {
  Tape& tape = common_tape(a, b);
  if (a.shape() != b.shape()) shape_error(name, a.shape(), b.shape());
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = forward(av[i], bv[i]);
  return tape.record(std::move(out), {a, b}, [da, db](const BackwardArgs& g) {
    const Tensor& x = *g.inputs[0];
    const Tensor& y = *g.inputs[1];
    if (Tensor* gx = g.grad_inputs[0]) {
      for (std::size_t i = 0; i < x.numel(); ++i) (*gx)[i] += g.grad_output[i] * da(x[i], y[i]);
    }
    if (Tensor* gy = g.grad_inputs[1]) {
      for (std::size_t i = 0; i < x.numel(); ++i) (*gy)[i] += g.grad_output[i] * db(x[i], y[i]);
    }
  });
}

}  // namespace

Var add(Var a, Var b) {
  return binary("add", a, b, [](double x, double y) { return x + y; },
                [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary("sub", a, b, [](double x, double y) { return x - y; },
                [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return binary("mul", a, b, [](double x, double y) { return x * y; },
                [](double, double y) { return y; }, [](double x, double) { return x; });
}

Var scale(Var x, double s) {
  return unary(x, [s](double v) { return s * v; }, [s](double, double) { return s; });
}

Var add_scalar(Var x, double s) {
  return unary(x, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Var exp(Var x) {
  return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(Var x) {
  return unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var relu(Var x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; },
               [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var square(Var x) {
  return unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var reciprocal(Var x) {
  return unary(x, [](double v) { return 1.0 / v; }, [](double, double y) { return -y * y; });
}

Var clamp(Var x, double lo, double hi) {
  return unary(x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
               [lo, hi](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

// ---- broadcasting ----------------------------------------------------------

Var add_bias(Var x, Var b) {
  Tape& tape = common_tape(x, b);
  const std::size_t c = x.value().last_dim();
  if (b.shape().size() != 1 || b.shape()[0] != c || x.shape().empty()) {
    shape_error("add_bias", x.shape(), b.shape());
  }
  Tensor out = x.value();
  const std::size_t rows = rows_of(out);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += b.value()[j];
  return tape.record(std::move(out), {x, b}, [rows, c](const BackwardArgs& g) {
    if (Tensor* gx = g.grad_inputs[0]) {
      for (std::size_t i = 0; i < gx->numel(); ++i) (*gx)[i] += g.grad_output[i];
    }
    if (Tensor* gb = g.grad_inputs[1]) {
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < c; ++j) (*gb)[j] += g.grad_output[i * c + j];
    }
  });
}

Var scale_rows(Var x, Var s) {
  Tape& tape = common_tape(x, s);
  require_rank("scale_rows", x, 2);
  const std::size_t r = x.shape()[0], c = x.shape()[1];
  if (s.shape() != Shape{r}) shape_error("scale_rows", x.shape(), s.shape());
  Tensor out(x.shape());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x.value()[i * c + j] * s.value()[i];
  return tape.record(std::move(out), {x, s}, [r, c](const BackwardArgs& g) {
    const Tensor& xv = *g.inputs[0];
    const Tensor& sv = *g.inputs[1];
    for (std::size_t i = 0; i < r; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        const double go = g.grad_output[i * c + j];
        if (g.grad_inputs[0]) (*g.grad_inputs[0])[i * c + j] += go * sv[i];
        acc += go * xv[i * c + j];
      }
      if (g.grad_inputs[1]) (*g.grad_inputs[1])[i] += acc;
    }
  });
}

// ---- reductions and normalizations -----------------------------------------

Var row_softmax(Var x) {
  const Tensor& xv = x.value();
  if (xv.rank() == 0) throw DimensionError("row_softmax: scalar input");
  const std::size_t c = xv.last_dim();
  const std::size_t rows = rows_of(xv);
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < rows; ++i) {
    const double* in = xv.data() + i * c;
    double* o = out.data() + i * c;
    const double mx = *std::max_element(in, in + c);
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) total += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < c; ++j) o[j] /= total;
  }
  return x.tape().record(std::move(out), {x}, [rows, c](const BackwardArgs& g) {
    if (!g.grad_inputs[0]) return;
    for (std::size_t i = 0; i < rows; ++i) {
      const double* y = g.output.data() + i * c;
      const double* dy = g.grad_output.data() + i * c;
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += dy[j] * y[j];
      double* dx = g.grad_inputs[0]->data() + i * c;
      for (std::size_t j = 0; j < c; ++j) dx[j] += y[j] * (dy[j] - dot);
    }
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  Tape& tape = common_tape(x, gamma);
  common_tape(x, beta);
  if (!(eps > 0.0)) throw std::invalid_argument("layer_norm: eps must be positive");
  const Tensor& xv = x.value();
  if (xv.rank() == 0) throw DimensionError("layer_norm: scalar input");
  const std::size_t c = xv.last_dim();
  if (c == 0) throw DimensionError("layer_norm: empty rows");
  if (gamma.shape() != Shape{c}) shape_error("layer_norm", xv.shape(), gamma.shape());
  if (beta.shape() != Shape{c}) shape_error("layer_norm", xv.shape(), beta.shape());
  const std::size_t rows = rows_of(xv);

  std::vector<double> xhat(xv.numel());
  std::vector<double> inv_std(rows);
  Tensor out(xv.shape());
  const double* gm = gamma.value().data();
  const double* bt = beta.value().data();
  for (std::size_t i = 0; i < rows; ++i) {
    const double* in = xv.data() + i * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += in[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= static_cast<double>(c);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[i] = is;
    for (std::size_t j = 0; j < c; ++j) {
      const double h = (in[j] - mu) * is;
      xhat[i * c + j] = h;
      out[i * c + j] = gm[j] * h + bt[j];
    }
  }
  return tape.record(std::move(out), {x, gamma, beta},
                     [rows, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](const BackwardArgs& g) {
    const double* gm = g.inputs[1]->data();
    std::vector<double> dh(c);
    for (std::size_t i = 0; i < rows; ++i) {
      const double* dy = g.grad_output.data() + i * c;
      const double* h = xhat.data() + i * c;
      if (Tensor* gg = g.grad_inputs[1]) {
        for (std::size_t j = 0; j < c; ++j) (*gg)[j] += dy[j] * h[j];
      }
      if (Tensor* gb = g.grad_inputs[2]) {
        for (std::size_t j = 0; j < c; ++j) (*gb)[j] += dy[j];
      }
      if (Tensor* gx = g.grad_inputs[0]) {
        double mean_dh = 0.0, mean_dh_h = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
          dh[j] = dy[j] * gm[j];
          mean_dh += dh[j];
          mean_dh_h += dh[j] * h[j];
        }
        mean_dh /= static_cast<double>(c);
        mean_dh_h /= static_cast<double>(c);
        double* dx = gx->data() + i * c;
        for (std::size_t j = 0; j < c; ++j) dx[j] += inv_std[i] * (dh[j] - mean_dh - h[j] * mean_dh_h);
      }
    }
  });
}

Var mean_pool_rows(Var x) {
  const Shape& s = x.shape();
  if (s.size() < 2) throw DimensionError("mean_pool_rows: need rank >= 2, got " + shape_to_string(s));
  const std::size_t r = s[s.size() - 2], c = s.back();
  if (r == 0) throw EmptySequenceError("mean_pool_rows: empty sequence (0 rows)");
  const std::size_t outer = x.numel() / (r * c);
  Shape out_shape(s.begin(), s.end() - 2);
  out_shape.push_back(c);
  Tensor out(out_shape);
  const double inv = 1.0 / static_cast<double>(r);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[o * c + j] += x.value()[(o * r + i) * c + j];
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= inv;
  return x.tape().record(std::move(out), {x}, [outer, r, c, inv](const BackwardArgs& g) {
    if (!g.grad_inputs[0]) return;
    Tensor& gx = *g.grad_inputs[0];
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gx[(o * r + i) * c + j] += g.grad_output[o * c + j] * inv;
  });
}

Var row_sum(Var x) {
  const Shape& s = x.shape();
  if (s.empty()) throw DimensionError("row_sum: scalar input");
  const std::size_t c = s.back();
  const std::size_t rows = c ? x.numel() / c : shape_numel(Shape(s.begin(), s.end() - 1));
  Tensor out(Shape(s.begin(), s.end() - 1));
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i] += x.value()[i * c + j];
  return x.tape().record(std::move(out), {x}, [rows, c](const BackwardArgs& g) {
    if (!g.grad_inputs[0]) return;
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < c; ++j) (*g.grad_inputs[0])[i * c + j] += g.grad_output[i];
  });
}

Var row_mean(Var x) {
  const std::size_t c = x.value().last_dim();
  if (c == 0) throw DimensionError("row_mean: empty rows");
  return scale(row_sum(x), 1.0 / static_cast<double>(c));
}

Var sum(Var x) {
  double total = 0.0;
  for (double v : x.value().values()) total += v;
  return x.tape().record(Tensor::scalar(total), {x}, [](const BackwardArgs& g) {
    if (!g.grad_inputs[0]) return;
    const double go = g.grad_output[0];
    for (double& v : g.grad_inputs[0]->values()) v += go;
  });
}

Var mean(Var x) {
  if (x.numel() == 0) throw DimensionError("mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Var l2_normalize_rows(Var x, double eps) {
  const Tensor& xv = x.value();
  if (xv.rank() == 0) throw DimensionError("l2_normalize_rows: scalar input");
  const std::size_t c = xv.last_dim();
  const std::size_t rows = rows_of(xv);
  Tensor out(xv.shape());
  std::vector<double> norms(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < c; ++j) ss += xv[i * c + j] * xv[i * c + j];
    norms[i] = std::sqrt(ss + eps);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = xv[i * c + j] / norms[i];
  }
  return x.tape().record(std::move(out), {x}, [rows, c, norms = std::move(norms)](const BackwardArgs& g) {
    if (!g.grad_inputs[0]) return;
    for (std::size_t i = 0; i < rows; ++i) {
      const double* y = g.output.data() + i * c;
      const double* dy = g.grad_output.data() + i * c;
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += dy[j] * y[j];
      double* dx = g.grad_inputs[0]->data() + i * c;
      for (std::size_t j = 0; j < c; ++j) dx[j] += (dy[j] - y[j] * dot) / norms[i];
    }
  });
}

// ---- shape manipulation ----------------------------------------------------

Var concat_last(Var a, Var b) {
  Tape& tape = common_tape(a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.empty() || sb.empty() || sa.size() != sb.size() ||
      !std::equal(sa.begin(), sa.end() - 1, sb.begin())) {
    shape_error("concat_last", sa, sb);
  }
  const std::size_t d1 = sa.back(), d2 = sb.back();
  const std::size_t rows = shape_numel(Shape(sa.begin(), sa.end() - 1));
  Shape os = sa;
  os.back() = d1 + d2;
  Tensor out(os);
  for (std::size_t i = 0; i < rows; ++i) {
    std::copy_n(a.value().data() + i * d1, d1, out.data() + i * (d1 + d2));
    std::copy_n(b.value().data() + i * d2, d2, out.data() + i * (d1 + d2) + d1);
  }
  return tape.record(std::move(out), {a, b}, [rows, d1, d2](const BackwardArgs& g) {
    for (std::size_t i = 0; i < rows; ++i) {
      const double* go = g.grad_output.data() + i * (d1 + d2);
      if (Tensor* ga = g.grad_inputs[0])
        for (std::size_t j = 0; j < d1; ++j) (*ga)[i * d1 + j] += go[j];
      if (Tensor* gb = g.grad_inputs[1])
        for (std::size_t j = 0; j < d2; ++j) (*gb)[i * d2 + j] += go[d1 + j];
    }
  });
}

Var slice_last(Var x, std::size_t start, std::size_t length) {
  const Shape& s = x.shape();
  if (s.empty() || start + length > s.back()) {
    throw DimensionError("slice_last: range [" + std::to_string(start) + ", " +
                         std::to_string(start + length) + ") outside shape " + shape_to_string(s));
  }
  const std::size_t c = s.back();
  const std::size_t rows = shape_numel(Shape(s.begin(), s.end() - 1));
  Shape os = s;
  os.back() = length;
  Tensor out(os);
  for (std::size_t i = 0; i < rows; ++i)
    std::copy_n(x.value().data() + i * c + start, length, out.data() + i * length);
  return x.tape().record(std::move(out), {x}, [rows, c, start, length](const BackwardArgs& g) {
    if (!g.grad_inputs[0]) return;
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < length; ++j)
        (*g.grad_inputs[0])[i * c + start + j] += g.grad_output[i * length + j];
  });
}

Var reshape(Var x, Shape shape) {
  if (shape_numel(shape) != x.numel()) shape_error("reshape", x.shape(), shape);
  Tensor out = x.value().reshaped(std::move(shape));
  return x.tape().record(std::move(out), {x}, [](const BackwardArgs& g) {
    if (!g.grad_inputs[0]) return;
    for (std::size_t i = 0; i < g.grad_output.numel(); ++i) (*g.grad_inputs[0])[i] += g.grad_output[i];
  });
}

Var transpose12(Var x) {
  require_rank("transpose12", x, 4);
  const Shape& s = x.shape();
  const std::size_t A = s[0], B = s[1], C = s[2], E = s[3];
  Tensor out({A, C, B, E});
  for (std::size_t a = 0; a < A; ++a)
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c)
        std::copy_n(x.value().data() + ((a * B + b) * C + c) * E, E, out.data() + ((a * C + c) * B + b) * E);
  return x.tape().record(std::move(out), {x}, [A, B, C, E](const BackwardArgs& g) {
    if (!g.grad_inputs[0]) return;
    for (std::size_t a = 0; a < A; ++a)
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c) {
          const double* src = g.grad_output.data() + ((a * C + c) * B + b) * E;
          double* dst = g.grad_inputs[0]->data() + ((a * B + b) * C + c) * E;
          for (std::size_t e = 0; e < E; ++e) dst[e] += src[e];
        }
  });
}

Var gather_cols(Var x, const std::vector<std::size_t>& index) {
  require_rank("gather_cols", x, 2);
  const std::size_t r = x.shape()[0], c = x.shape()[1];
  if (index.size() != r) {
    throw DimensionError("gather_cols: " + std::to_string(index.size()) + " indices for " +
                         std::to_string(r) + " rows");
  }
  Tensor out({r});
  for (std::size_t i = 0; i < r; ++i) {
    if (index[i] >= c) {
      throw std::out_of_range("gather_cols: index " + std::to_string(index[i]) + " >= " + std::to_string(c));
    }
    out[i] = x.value()[i * c + index[i]];
  }
  return x.tape().record(std::move(out), {x}, [c, index](const BackwardArgs& g) {
    if (!g.grad_inputs[0]) return;
    for (std::size_t i = 0; i < index.size(); ++i) (*g.grad_inputs[0])[i * c + index[i]] += g.grad_output[i];
  });
}

// ---- losses ----------------------------------------------------------------

Var contrastive_nll(Var logits, double positive_weight) {
  require_rank("contrastive_nll", logits, 2);
  const std::size_t k = logits.shape()[0];
  if (logits.shape()[1] != k) shape_error("contrastive_nll", logits.shape(), logits.shape());
  if (k < 2) {
    throw ContrastiveBatchError("contrastive loss needs at least 2 samples, got " + std::to_string(k));
  }
  const Tensor& lv = logits.value();
  // weights[i*k+j]: softmax-like responsibilities used by the backward pass.
  std::vector<double> weights(k * k);
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double* row = lv.data() + i * k;
    const double mx = *std::max_element(row, row + k);
    double denom = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double e = std::exp(row[j] - mx) * (i == j ? positive_weight : 1.0);
      weights[i * k + j] = e;
      denom += e;
    }
    for (std::size_t j = 0; j < k; ++j) weights[i * k + j] /= denom;
    total += -row[i] + mx + std::log(denom);
  }
  const double inv_k = 1.0 / static_cast<double>(k);
  return logits.tape().record(Tensor::scalar(total * inv_k), {logits},
                              [k, inv_k, weights = std::move(weights)](const BackwardArgs& g) {
    if (!g.grad_inputs[0]) return;
    const double go = g.grad_output[0] * inv_k;
    Tensor& gl = *g.grad_inputs[0];
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j)
        gl[i * k + j] += go * (weights[i * k + j] - (i == j ? 1.0 : 0.0));
  });
}

}  // namespace urmf::ad
