#pragma once

// Dense compute kernels behind the differentiable ops.
//
// Every kernel exists twice: a serial reference in kernels::serial and an
// OpenMP version in kernels::parallel. The parallel versions split work over
// output rows (or attention blocks) only, so each output element is summed in
// the same order as the serial reference and results are bit-identical.
// The unqualified entry points dispatch to the parallel version when more
// than one thread is available and we are not already inside a parallel
// region.

#include <cstddef>
#include <span>

#include "maskma/tensor.hpp"

namespace maskma::kernels {

// Shape of one batched attention call: B blocks of T tokens, model width d,
// split into `heads` heads. The packed qkv input has rows b*T + token and
// columns [q | k | v], each d wide.
struct AttentionShape {
  std::size_t batch = 0;
  std::size_t tokens = 0;
  std::size_t width = 0;
  std::size_t heads = 0;
  std::size_t head_width() const { return width / heads; }
};

namespace serial {
// C (m x n) = A (m x k) * B (k x n); accumulates into C when `accumulate`.
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate);
// C (m x n) = A (m x k) * B^T, B stored (n x k).
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate);
// C (m x n) = A^T * B, A stored (k x m), B stored (k x n).
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate);
void attention_forward(const AttentionShape& s, const double* qkv,
                       std::span<const BoolMatrix* const> masks, double* probs, double* out);
void attention_backward(const AttentionShape& s, const double* qkv, const double* probs,
                        std::span<const BoolMatrix* const> masks, const double* dout,
                        double* dqkv);
}  // namespace serial

namespace parallel {
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate);
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate);
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate);
void attention_forward(const AttentionShape& s, const double* qkv,
                       std::span<const BoolMatrix* const> masks, double* probs, double* out);
void attention_backward(const AttentionShape& s, const double* qkv, const double* probs,
                        std::span<const BoolMatrix* const> masks, const double* dout,
                        double* dqkv);
}  // namespace parallel

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate);
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate);
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate);
void attention_forward(const AttentionShape& s, const double* qkv,
                       std::span<const BoolMatrix* const> masks, double* probs, double* out);
void attention_backward(const AttentionShape& s, const double* qkv, const double* probs,
                        std::span<const BoolMatrix* const> masks, const double* dout,
                        double* dqkv);

// Worker threads available to the dispatching entry points (1 when built
// without OpenMP or when called from inside a parallel region).
int available_threads();

}  // namespace maskma::kernels
