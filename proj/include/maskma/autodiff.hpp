#pragma once

// Tape-based reverse-mode differentiation over dense tensors.
//
// A Tape records every operation applied to its Vars in construction order;
// backward() walks the records in reverse exactly once. A Tape and its Vars
// belong to one thread; independent tapes may run concurrently and share
// read-only Parameters.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "maskma/tensor.hpp"

namespace maskma {

// A trainable array. Gradients from backward() accumulate into `grad`.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  void zero_grad();
};

class Tape;

// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  const Tensor& value() const;
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::uint32_t self)>;

  // With gradients disabled no backward records are kept (inference).
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Leaf whose gradient stays on the tape (read it with grad()).
  Var variable(Tensor value);
  // Leaf backed by an external parameter; no copy of the value is made.
  Var parameter(Parameter& p);
  // Read-only binding; only valid on a tape with gradients disabled.
  Var parameter(const Parameter& p);

  // Seeds d(loss)/d(loss) = 1 and propagates to every leaf that requires
  // gradients. `loss` must be a single-element tensor.
  void backward(Var loss);

  const Tensor& value(std::uint32_t id) const;
  const Tensor& grad(std::uint32_t id) const;
  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }
  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }

  // Used by op implementations.
  Var push(Tensor value, std::span<const Var> inputs, BackwardFn fn, const char* op);
  // Gradient buffer of `id`, allocated (zeroed) on first use. For parameter
  // leaves this is the parameter's own grad.
  Tensor& grad_buffer(std::uint32_t id);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
  bool grad_enabled_;
};

namespace ops {

// Standard matrix product of rank-2 tensors.
Var matmul(Var a, Var b);
// x (rows x k) * w (k x n) + bias (n); leading dims of x are kept.
Var linear(Var x, Var w, Var bias);
Var add(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
// Concatenation along the last dimension.
Var concat_cols(Var a, Var b);
// Row i of the output is row indices[i] of `table`.
Var embedding(Var table, std::span<const std::size_t> indices);
// Exact GELU: x * Phi(x).
Var gelu(Var x);
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
// Row-wise softmax over entries allowed by `mask` (same shape as scores).
// Masked entries are exactly zero; a row with no allowed entry throws.
Var masked_softmax(Var scores, const BoolMatrix& mask);
Var sum(Var x);
Var mean(Var x);
// sum_r weight[r] * (logsumexp(logits[r]) - logits[r, target[r]]).
// Rows with weight 0 are skipped and may carry any target.
Var cross_entropy(Var logits, std::span<const int> targets, std::span<const double> weights);
// Multi-head self-attention core over B blocks of T tokens. `qkv` is
// (B*T x 3d) packed [q | k | v]; masks[b] is the T x T gate for block b.
Var attention(Var qkv, std::span<const BoolMatrix* const> masks, std::size_t tokens,
              std::size_t heads);
// Pairwise logits from per-token scalars: rows are grouped in consecutive
// blocks of `group` tokens and out[r, j] = uv[r, 0] + uv[g(r) + j, 1] + bias,
// where g(r) is the first row of r's block.
Var pair_logits(Var uv, Var bias, std::size_t group);
// Selected rows, in the order given.
Var gather_rows(Var x, std::span<const std::size_t> rows);

}  // namespace ops
}  // namespace maskma
