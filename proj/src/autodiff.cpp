#include "maskma/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>

#include "maskma/error.hpp"
#include "maskma/kernels.hpp"

namespace maskma {

void Parameter::zero_grad() {
  if (grad.shape() != value.shape()) grad = Tensor(value.shape());
  else grad.fill(0.0);
}

const Tensor& Var::value() const { return tape->value(id); }
const Tensor& Var::grad() const { return tape->grad(id); }

Var Tape::constant(Tensor value) { return push(std::move(value), {}, nullptr, "constant"); }

Var Tape::variable(Tensor value) {
  Var v = push(std::move(value), {}, nullptr, "variable");
  nodes_[v.id].requires_grad = grad_enabled_;
  return v;
}

Var Tape::parameter(Parameter& p) {
  if (!p.value.all_finite()) throw NumericError("parameter '" + p.name + "' is not finite");
  Node node;
  node.param = &p;
  node.requires_grad = grad_enabled_;
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::parameter(const Parameter& p) {
  if (grad_enabled_) throw Error("read-only parameter bound to a tape that records gradients");
  return parameter(const_cast<Parameter&>(p));
}

const Tensor& Tape::value(std::uint32_t id) const {
  const Node& n = nodes_[id];
  return n.param ? n.param->value : n.value;
}

const Tensor& Tape::grad(std::uint32_t id) const {
  const Node& n = nodes_[id];
  return n.param ? n.param->grad : n.grad;
}

Tensor& Tape::grad_buffer(std::uint32_t id) {
  Node& n = nodes_[id];
  Tensor& g = n.param ? n.param->grad : n.grad;
  const Shape& s = value(id).shape();
  if (g.shape() != s || g.numel() != shape_numel(s)) g = Tensor(s);
  return g;
}

Var Tape::push(Tensor value, std::span<const Var> inputs, BackwardFn fn, const char* op) {
  if (!value.all_finite()) throw NumericError(std::string("non-finite output from ") + op);
  Node node;
  node.value = std::move(value);
  if (grad_enabled_) {
    node.requires_grad = std::any_of(inputs.begin(), inputs.end(), [this](const Var& v) {
      return nodes_[v.id].requires_grad;
    });
    if (node.requires_grad) node.backward = std::move(fn);
  }
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw Error("backward: loss belongs to another tape");
  if (value(loss.id).numel() != 1)
    throw DimensionError("backward: loss must be scalar, got shape " +
                         shape_string(value(loss.id).shape()));
  if (!nodes_[loss.id].requires_grad) return;
  grad_buffer(loss.id)[0] += 1.0;
  for (std::uint32_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.backward || n.grad.numel() == 0) continue;
    n.backward(*this, id);
  }
}

namespace ops {
namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

bool needs(const Var& v) { return v.tape->requires_grad(v.id); }

Tape& same_tape(std::initializer_list<Var> vars) {
  Tape* t = vars.begin()->tape;
  for (const Var& v : vars)
    if (v.tape != t) throw Error("operands live on different tapes");
  return *t;
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& tape = same_tape({a, b});
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require(av.rank() == 2 && bv.rank() == 2 && av.shape()[1] == bv.shape()[0],
          "matmul: shapes " + shape_string(av.shape()) + " and " + shape_string(bv.shape()) +
              " do not agree");
  const std::size_t m = av.shape()[0], k = av.shape()[1], n = bv.shape()[1];
  Tensor out({m, n});
  kernels::gemm_nn(m, n, k, av.ptr(), bv.ptr(), out.ptr(), false);
  const Var in[] = {a, b};
  return tape.push(std::move(out), in, [a, b, m, n, k](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    if (needs(a)) kernels::gemm_nt(m, k, n, g.ptr(), b.value().ptr(), t.grad_buffer(a.id).ptr(), true);
    if (needs(b)) kernels::gemm_tn(k, n, m, a.value().ptr(), g.ptr(), t.grad_buffer(b.id).ptr(), true);
  }, "matmul");
}

Var linear(Var x, Var w, Var bias) {
  Tape& tape = same_tape({x, w, bias});
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = bias.value();
  require(wv.rank() == 2 && xv.rank() >= 1 && xv.cols() == wv.shape()[0] &&
              bv.numel() == wv.shape()[1],
          "linear: input " + shape_string(xv.shape()) + ", weight " + shape_string(wv.shape()) +
              ", bias " + shape_string(bv.shape()));
  const std::size_t m = xv.rows(), k = xv.cols(), n = wv.shape()[1];
  Shape out_shape = xv.shape();
  out_shape.back() = n;
  Tensor out(out_shape);
  for (std::size_t r = 0; r < m; ++r) std::copy(bv.ptr(), bv.ptr() + n, out.ptr() + r * n);
  kernels::gemm_nn(m, n, k, xv.ptr(), wv.ptr(), out.ptr(), true);
  const Var in[] = {x, w, bias};
  return tape.push(std::move(out), in, [x, w, bias, m, n, k](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    if (needs(x)) kernels::gemm_nt(m, k, n, g.ptr(), w.value().ptr(), t.grad_buffer(x.id).ptr(), true);
    if (needs(w)) kernels::gemm_tn(k, n, m, x.value().ptr(), g.ptr(), t.grad_buffer(w.id).ptr(), true);
    if (needs(bias)) {
      double* gb = t.grad_buffer(bias.id).ptr();
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) gb[c] += g[r * n + c];
    }
  }, "linear");
}

Var add(Var a, Var b) {
  Tape& tape = same_tape({a, b});
  require(a.shape() == b.shape(),
          "add: shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += bv[i];
  const Var in[] = {a, b};
  return tape.push(std::move(out), in, [a, b](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    for (Var v : {a, b}) {
      if (!needs(v)) continue;
      Tensor& gv = t.grad_buffer(v.id);
      for (std::size_t i = 0; i < g.numel(); ++i) gv[i] += g[i];
    }
  }, "add");
}

Var mul(Var a, Var b) {
  Tape& tape = same_tape({a, b});
  require(a.shape() == b.shape(),
          "mul: shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= bv[i];
  const Var in[] = {a, b};
  return tape.push(std::move(out), in, [a, b](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    if (needs(a)) {
      Tensor& ga = t.grad_buffer(a.id);
      const Tensor& bv = b.value();
      for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * bv[i];
    }
    if (needs(b)) {
      Tensor& gb = t.grad_buffer(b.id);
      const Tensor& av = a.value();
      for (std::size_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * av[i];
    }
  }, "mul");
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (double& v : out.data()) v *= factor;
  const Var in[] = {a};
  return a.tape->push(std::move(out), in, [a, factor](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * factor;
  }, "scale");
}

Var concat_cols(Var a, Var b) {
  Tape& tape = same_tape({a, b});
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require(av.rank() == bv.rank() && av.rank() >= 1 && av.rows() == bv.rows(),
          "concat_cols: shapes " + shape_string(av.shape()) + " and " + shape_string(bv.shape()));
  for (std::size_t d = 0; d + 1 < av.rank(); ++d)
    require(av.shape()[d] == bv.shape()[d], "concat_cols: leading dimensions differ");
  const std::size_t rows = av.rows(), ca = av.cols(), cb = bv.cols();
  Shape s = av.shape();
  s.back() = ca + cb;
  Tensor out(s);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy(av.ptr() + r * ca, av.ptr() + (r + 1) * ca, out.ptr() + r * (ca + cb));
    std::copy(bv.ptr() + r * cb, bv.ptr() + (r + 1) * cb, out.ptr() + r * (ca + cb) + ca);
  }
  const Var in[] = {a, b};
  return tape.push(std::move(out), in, [a, b, rows, ca, cb](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    if (needs(a)) {
      Tensor& ga = t.grad_buffer(a.id);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < ca; ++c) ga[r * ca + c] += g[r * (ca + cb) + c];
    }
    if (needs(b)) {
      Tensor& gb = t.grad_buffer(b.id);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cb; ++c) gb[r * cb + c] += g[r * (ca + cb) + ca + c];
    }
  }, "concat_cols");
}

Var embedding(Var table, std::span<const std::size_t> indices) {
  const Tensor& tv = table.value();
  require(tv.rank() == 2, "embedding: table must be rank 2, got " + shape_string(tv.shape()));
  const std::size_t n = tv.shape()[0], d = tv.shape()[1];
  Tensor out({indices.size(), d});
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= n)
      throw DimensionError("embedding: index " + std::to_string(indices[r]) +
                           " out of range for table " + shape_string(tv.shape()));
    std::copy(tv.ptr() + indices[r] * d, tv.ptr() + (indices[r] + 1) * d, out.ptr() + r * d);
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  const Var in[] = {table};
  return table.tape->push(std::move(out), in, [table, idx = std::move(idx), d](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gt = t.grad_buffer(table.id);
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t c = 0; c < d; ++c) gt[idx[r] * d + c] += g[r * d + c];
  }, "embedding");
}

Var gelu(Var x) {
  Tensor out = x.value();
  for (double& v : out.data()) v = 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
  const Var in[] = {x};
  return x.tape->push(std::move(out), in, [x](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& xv = x.value();
    Tensor& gx = t.grad_buffer(x.id);
    const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    for (std::size_t i = 0; i < g.numel(); ++i) {
      const double v = xv[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      gx[i] += g[i] * (cdf + v * pdf);
    }
  }, "gelu");
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  Tape& tape = same_tape({x, gain, bias});
  const Tensor& xv = x.value();
  const std::size_t d = xv.cols(), rows = xv.rows();
  require(gain.value().numel() == d && bias.value().numel() == d,
          "layer_norm: input " + shape_string(xv.shape()) + " with gain " +
              shape_string(gain.shape()) + " and bias " + shape_string(bias.shape()));
  Tensor out(xv.shape());
  // Normalized values and inverse std are kept for the backward pass.
  std::vector<double> xhat(xv.numel()), inv_std(rows);
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv.ptr() + r * d;
    double mu = 0.0;
    for (std::size_t c = 0; c < d; ++c) mu += xr[c];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (xr[c] - mu) * (xr[c] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t c = 0; c < d; ++c) {
      xhat[r * d + c] = (xr[c] - mu) * is;
      out[r * d + c] = xhat[r * d + c] * gv[c] + bv[c];
    }
  }
  const Var in[] = {x, gain, bias};
  return tape.push(std::move(out), in,
                   [x, gain, bias, d, rows, xhat = std::move(xhat),
                    inv_std = std::move(inv_std)](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& gv = gain.value();
    if (needs(gain) || needs(bias)) {
      Tensor* gg = needs(gain) ? &t.grad_buffer(gain.id) : nullptr;
      Tensor* gb = needs(bias) ? &t.grad_buffer(bias.id) : nullptr;
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < d; ++c) {
          if (gg) (*gg)[c] += g[r * d + c] * xhat[r * d + c];
          if (gb) (*gb)[c] += g[r * d + c];
        }
    }
    if (!needs(x)) return;
    Tensor& gx = t.grad_buffer(x.id);
    const double inv_d = 1.0 / static_cast<double>(d);
    for (std::size_t r = 0; r < rows; ++r) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double dy = g[r * d + c] * gv[c];
        sum_dy += dy;
        sum_dy_xhat += dy * xhat[r * d + c];
      }
      for (std::size_t c = 0; c < d; ++c) {
        const double dy = g[r * d + c] * gv[c];
        gx[r * d + c] +=
            inv_std[r] * (dy - inv_d * sum_dy - xhat[r * d + c] * inv_d * sum_dy_xhat);
      }
    }
  }, "layer_norm");
}

Var masked_softmax(Var scores, const BoolMatrix& mask) {
  const Tensor& sv = scores.value();
  const std::size_t rows = sv.rows(), cols = sv.cols();
  require(mask.rows == rows && mask.cols == cols,
          "masked_softmax: scores " + shape_string(sv.shape()) + " with mask [" +
              std::to_string(mask.rows) + "x" + std::to_string(mask.cols) + "]");
  Tensor out(sv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c)
      if (mask(r, c)) mx = std::max(mx, sv[r * cols + c]);
    if (mx == -std::numeric_limits<double>::infinity())
      throw Error("masked_softmax: row " + std::to_string(r) + " has no allowed entry");
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      if (!mask(r, c)) continue;
      out[r * cols + c] = std::exp(sv[r * cols + c] - mx);
      total += out[r * cols + c];
    }
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] /= total;
  }
  const Var in[] = {scores};
  return scores.tape->push(std::move(out), in, [scores, rows, cols](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& p = t.value(self);
    Tensor& gs = t.grad_buffer(scores.id);
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * p[r * cols + c];
      // p is exactly zero at masked entries, so they receive no gradient.
      for (std::size_t c = 0; c < cols; ++c)
        gs[r * cols + c] += p[r * cols + c] * (g[r * cols + c] - dot);
    }
  }, "masked_softmax");
}

Var sum(Var x) {
  double total = 0.0;
  for (double v : x.value().data()) total += v;
  const Var in[] = {x};
  return x.tape->push(Tensor::scalar(total), in, [x](Tape& t, std::uint32_t self) {
    const double g = t.grad(self)[0];
    for (double& v : t.grad_buffer(x.id).data()) v += g;
  }, "sum");
}

Var mean(Var x) {
  const std::size_t n = x.value().numel();
  if (n == 0) throw DimensionError("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

Var cross_entropy(Var logits, std::span<const int> targets, std::span<const double> weights) {
  const Tensor& lv = logits.value();
  const std::size_t rows = lv.rows(), cols = lv.cols();
  require(targets.size() == rows && weights.size() == rows,
          "cross_entropy: " + std::to_string(rows) + " logit rows but " +
              std::to_string(targets.size()) + " targets and " + std::to_string(weights.size()) +
              " weights");
  // Softmax probabilities of weighted rows, reused by backward.
  std::vector<double> probs(lv.numel(), 0.0);
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (weights[r] == 0.0) continue;
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= cols)
      throw DimensionError("cross_entropy: target " + std::to_string(targets[r]) +
                           " out of range for " + std::to_string(cols) + " classes");
    const double* lr = lv.ptr() + r * cols;
    const double mx = *std::max_element(lr, lr + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      probs[r * cols + c] = std::exp(lr[c] - mx);
      total += probs[r * cols + c];
    }
    for (std::size_t c = 0; c < cols; ++c) probs[r * cols + c] /= total;
    loss += weights[r] * (mx + std::log(total) - lr[targets[r]]);
  }
  std::vector<int> tgt(targets.begin(), targets.end());
  std::vector<double> w(weights.begin(), weights.end());
  const Var in[] = {logits};
  return logits.tape->push(Tensor::scalar(loss), in,
                           [logits, rows, cols, probs = std::move(probs), tgt = std::move(tgt),
                            w = std::move(w)](Tape& t, std::uint32_t self) {
    const double g = t.grad(self)[0];
    Tensor& gl = t.grad_buffer(logits.id);
    for (std::size_t r = 0; r < rows; ++r) {
      if (w[r] == 0.0) continue;
      for (std::size_t c = 0; c < cols; ++c) gl[r * cols + c] += g * w[r] * probs[r * cols + c];
      gl[r * cols + static_cast<std::size_t>(tgt[r])] -= g * w[r];
    }
  }, "cross_entropy");
}

Var attention(Var qkv, std::span<const BoolMatrix* const> masks, std::size_t tokens,
              std::size_t heads) {
  const Tensor& qv = qkv.value();
  require(qv.cols() % 3 == 0, "attention: packed width must be a multiple of 3");
  kernels::AttentionShape s;
  s.width = qv.cols() / 3;
  s.tokens = tokens;
  s.heads = heads;
  require(heads > 0 && s.width % heads == 0,
          "attention: width " + std::to_string(s.width) + " not divisible by " +
              std::to_string(heads) + " heads");
  require(tokens > 0 && qv.rows() % tokens == 0,
          "attention: " + std::to_string(qv.rows()) + " rows not a multiple of " +
              std::to_string(tokens) + " tokens");
  s.batch = qv.rows() / tokens;
  require(masks.size() == s.batch, "attention: need one mask per block");
  for (std::size_t b = 0; b < s.batch; ++b) {
    const BoolMatrix& m = *masks[b];
    require(m.rows == tokens && m.cols == tokens,
            "attention: mask [" + std::to_string(m.rows) + "x" + std::to_string(m.cols) +
                "] for " + std::to_string(tokens) + " tokens");
    for (std::size_t r = 0; r < tokens; ++r) {
      const auto* row = m.cells.data() + r * tokens;
      if (std::find(row, row + tokens, std::uint8_t{1}) == row + tokens)
        throw Error("attention: query row " + std::to_string(r) + " of block " +
                    std::to_string(b) + " has no allowed key");
    }
  }
  auto probs = std::make_shared<std::vector<double>>(s.batch * heads * tokens * tokens);
  Shape out_shape = qv.shape();
  out_shape.back() = s.width;
  Tensor out(out_shape);
  kernels::attention_forward(s, qv.ptr(), masks, probs->data(), out.ptr());
  // The backward pass may run after the caller's masks are gone.
  auto owned = std::make_shared<std::vector<BoolMatrix>>();
  owned->reserve(masks.size());
  for (const BoolMatrix* m : masks) owned->push_back(*m);
  const Var in[] = {qkv};
  return qkv.tape->push(std::move(out), in, [qkv, s, probs, owned](Tape& t, std::uint32_t self) {
    std::vector<const BoolMatrix*> mask_ptrs;
    for (const BoolMatrix& m : *owned) mask_ptrs.push_back(&m);
    kernels::attention_backward(s, qkv.value().ptr(), probs->data(), mask_ptrs,
                                t.grad(self).ptr(), t.grad_buffer(qkv.id).ptr());
  }, "attention");
}

Var pair_logits(Var uv, Var bias, std::size_t group) {
  Tape& tape = same_tape({uv, bias});
  const Tensor& u = uv.value();
  require(u.cols() == 2 && bias.value().numel() == 1 && group > 0 && u.rows() % group == 0,
          "pair_logits: input " + shape_string(u.shape()) + " with group " +
              std::to_string(group));
  const std::size_t rows = u.rows();
  const double b = bias.value()[0];
  Tensor out({rows, group});
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t first = r - r % group;
    for (std::size_t j = 0; j < group; ++j) out[r * group + j] = u[r * 2] + u[(first + j) * 2 + 1] + b;
  }
  const Var in[] = {uv, bias};
  return tape.push(std::move(out), in, [uv, bias, rows, group](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    if (needs(uv)) {
      Tensor& gu = t.grad_buffer(uv.id);
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t first = r - r % group;
        for (std::size_t j = 0; j < group; ++j) {
          gu[r * 2] += g[r * group + j];
          gu[(first + j) * 2 + 1] += g[r * group + j];
        }
      }
    }
    if (needs(bias)) {
      double total = 0.0;
      for (double v : g.data()) total += v;
      t.grad_buffer(bias.id)[0] += total;
    }
  }, "pair_logits");
}

Var gather_rows(Var x, std::span<const std::size_t> rows) {
  const Tensor& xv = x.value();
  const std::size_t cols = xv.cols(), n = xv.rows();
  Tensor out({rows.size(), cols});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= n) throw DimensionError("gather_rows: row index out of range");
    std::copy(xv.ptr() + rows[r] * cols, xv.ptr() + (rows[r] + 1) * cols, out.ptr() + r * cols);
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  const Var in[] = {x};
  return x.tape->push(std::move(out), in, [x, idx = std::move(idx), cols](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad_buffer(x.id);
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t c = 0; c < cols; ++c) gx[idx[r] * cols + c] += g[r * cols + c];
  }, "gather_rows");
}

}  // namespace ops
}  // namespace maskma
