#include "maskma/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace maskma::kernels {
namespace {

using Vec4 = double __attribute__((vector_size(32)));

inline Vec4 load4(const double* p) {
  Vec4 v;
  std::memcpy(&v, p, sizeof(v));
  return v;
}

constexpr std::size_t kTileRows = 4;
constexpr std::size_t kTileCols = 8;

// Rows [r0, r1) of C (+)= A * B where A(i, p) = a[i * ars + p * acs] and B is
// (k x n) row-major. Full 4x8 tiles keep their accumulators in registers
// across the whole k loop.
void gemm_rows_strided(std::size_t r0, std::size_t r1, std::size_t n, std::size_t k,
                       const double* __restrict a, std::size_t ars, std::size_t acs,
                       const double* __restrict b, double* __restrict c, bool accumulate) {
  std::size_t i = r0;
  for (; i + kTileRows <= r1; i += kTileRows) {
    std::size_t j = 0;
    for (; j + kTileCols <= n; j += kTileCols) {
      Vec4 acc[kTileRows][2] = {};
      const double* a0 = a + i * ars;
      for (std::size_t p = 0; p < k; ++p) {
        const Vec4 b0 = load4(b + p * n + j);
        const Vec4 b1 = load4(b + p * n + j + 4);
        const double* ap = a0 + p * acs;
        for (std::size_t r = 0; r < kTileRows; ++r) {
          const double av = ap[r * ars];
          acc[r][0] += av * b0;
          acc[r][1] += av * b1;
        }
      }
      for (std::size_t r = 0; r < kTileRows; ++r) {
        double* cr = c + (i + r) * n + j;
        if (accumulate) {
          acc[r][0] += load4(cr);
          acc[r][1] += load4(cr + 4);
        }
        std::memcpy(cr, &acc[r][0], sizeof(Vec4));
        std::memcpy(cr + 4, &acc[r][1], sizeof(Vec4));
      }
    }
    for (std::size_t r = i; r < i + kTileRows; ++r)
      for (std::size_t q = j; q < n; ++q) {
        double sum = 0.0;
        for (std::size_t p = 0; p < k; ++p) sum += a[r * ars + p * acs] * b[p * n + q];
        c[r * n + q] = accumulate ? c[r * n + q] + sum : sum;
      }
  }
  for (; i < r1; ++i) {
    double* ci = c + i * n;
    if (!accumulate) std::fill(ci, ci + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * ars + p * acs];
      const double* bp = b + p * n;
      for (std::size_t q = 0; q < n; ++q) ci[q] += av * bp[q];
    }
  }
}

// Row range of C = A * B, A (m x k), B (k x n), all row-major.
void gemm_nn_rows(std::size_t r0, std::size_t r1, std::size_t n, std::size_t k,
                  const double* __restrict a, const double* __restrict b, double* __restrict c,
                  bool accumulate) {
  gemm_rows_strided(r0, r1, n, k, a, k, 1, b, c, accumulate);
}

// Row range of C = A^T * B with A stored (k x m).
void gemm_tn_rows(std::size_t r0, std::size_t r1, std::size_t m, std::size_t n, std::size_t k,
                  const double* __restrict a, const double* __restrict b, double* __restrict c,
                  bool accumulate) {
  gemm_rows_strided(r0, r1, n, k, a, 1, m, b, c, accumulate);
}

std::vector<double> transpose(std::size_t rows, std::size_t cols, const double* src) {
  std::vector<double> t(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) t[c * rows + r] = src[r * cols + c];
  return t;
}

// One (batch, head) block of the forward pass.
void attention_block_forward(const AttentionShape& s, std::size_t blk, std::size_t head,
                             const double* qkv, const BoolMatrix& mask, double* probs,
                             double* out) {
  const std::size_t T = s.tokens, d = s.width, dh = s.head_width();
  const std::size_t stride = 3 * d;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const double* base = qkv + blk * T * stride;
  double* p_blk = probs + (blk * s.heads + head) * T * T;
  for (std::size_t i = 0; i < T; ++i) {
    const double* qi = base + i * stride + head * dh;
    double* prow = p_blk + i * T;
    double row_max = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < T; ++j) {
      if (!mask(i, j)) {
        prow[j] = 0.0;
        continue;
      }
      const double* kj = base + j * stride + d + head * dh;
      double dot = 0.0;
      for (std::size_t e = 0; e < dh; ++e) dot += qi[e] * kj[e];
      prow[j] = dot * scale;
      row_max = std::max(row_max, prow[j]);
    }
    double total = 0.0;
    for (std::size_t j = 0; j < T; ++j) {
      if (!mask(i, j)) continue;
      prow[j] = std::exp(prow[j] - row_max);
      total += prow[j];
    }
    const double inv = 1.0 / total;
    double* oi = out + (blk * T + i) * d + head * dh;
    std::fill(oi, oi + dh, 0.0);
    for (std::size_t j = 0; j < T; ++j) {
      if (!mask(i, j)) continue;
      prow[j] *= inv;
      const double* vj = base + j * stride + 2 * d + head * dh;
      for (std::size_t e = 0; e < dh; ++e) oi[e] += prow[j] * vj[e];
    }
  }
}

void attention_block_backward(const AttentionShape& s, std::size_t blk, std::size_t head,
                              const double* qkv, const double* probs, const BoolMatrix& mask,
                              const double* dout, double* dqkv) {
  const std::size_t T = s.tokens, d = s.width, dh = s.head_width();
  const std::size_t stride = 3 * d;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const double* base = qkv + blk * T * stride;
  double* dbase = dqkv + blk * T * stride;
  const double* p_blk = probs + (blk * s.heads + head) * T * T;
  std::vector<double> dp(T);
  for (std::size_t i = 0; i < T; ++i) {
    const double* prow = p_blk + i * T;
    const double* doi = dout + (blk * T + i) * d + head * dh;
    double weighted = 0.0;
    for (std::size_t j = 0; j < T; ++j) {
      if (!mask(i, j)) {
        dp[j] = 0.0;
        continue;
      }
      const double* vj = base + j * stride + 2 * d + head * dh;
      double* dvj = dbase + j * stride + 2 * d + head * dh;
      double dot = 0.0;
      for (std::size_t e = 0; e < dh; ++e) {
        dot += doi[e] * vj[e];
        dvj[e] += prow[j] * doi[e];
      }
      dp[j] = dot;
      weighted += prow[j] * dot;
    }
    const double* qi = base + i * stride + head * dh;
    double* dqi = dbase + i * stride + head * dh;
    for (std::size_t j = 0; j < T; ++j) {
      if (!mask(i, j)) continue;
      const double ds = prow[j] * (dp[j] - weighted) * scale;
      const double* kj = base + j * stride + d + head * dh;
      double* dkj = dbase + j * stride + d + head * dh;
      for (std::size_t e = 0; e < dh; ++e) {
        dqi[e] += ds * kj[e];
        dkj[e] += ds * qi[e];
      }
    }
  }
}

}  // namespace

namespace serial {

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate) {
  gemm_nn_rows(0, m, n, k, a, b, c, accumulate);
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate) {
  const std::vector<double> bt = transpose(n, k, b);
  gemm_nn_rows(0, m, n, k, a, bt.data(), c, accumulate);
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate) {
  gemm_tn_rows(0, m, m, n, k, a, b, c, accumulate);
}

void attention_forward(const AttentionShape& s, const double* qkv,
                       std::span<const BoolMatrix* const> masks, double* probs, double* out) {
  for (std::size_t blk = 0; blk < s.batch; ++blk)
    for (std::size_t h = 0; h < s.heads; ++h)
      attention_block_forward(s, blk, h, qkv, *masks[blk], probs, out);
}

void attention_backward(const AttentionShape& s, const double* qkv, const double* probs,
                        std::span<const BoolMatrix* const> masks, const double* dout,
                        double* dqkv) {
  for (std::size_t blk = 0; blk < s.batch; ++blk)
    for (std::size_t h = 0; h < s.heads; ++h)
      attention_block_backward(s, blk, h, qkv, probs, *masks[blk], dout, dqkv);
}

}  // namespace serial

namespace parallel {

namespace {
constexpr std::size_t kRowChunk = 16;
}

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate) {
  const std::ptrdiff_t chunks = static_cast<std::ptrdiff_t>((m + kRowChunk - 1) / kRowChunk);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ch = 0; ch < chunks; ++ch) {
    const std::size_t r0 = static_cast<std::size_t>(ch) * kRowChunk;
    gemm_nn_rows(r0, std::min(m, r0 + kRowChunk), n, k, a, b, c, accumulate);
  }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate) {
  const std::vector<double> bt = transpose(n, k, b);
  gemm_nn(m, n, k, a, bt.data(), c, accumulate);
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate) {
  const std::ptrdiff_t chunks = static_cast<std::ptrdiff_t>((m + kRowChunk - 1) / kRowChunk);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ch = 0; ch < chunks; ++ch) {
    const std::size_t r0 = static_cast<std::size_t>(ch) * kRowChunk;
    gemm_tn_rows(r0, std::min(m, r0 + kRowChunk), m, n, k, a, b, c, accumulate);
  }
}

void attention_forward(const AttentionShape& s, const double* qkv,
                       std::span<const BoolMatrix* const> masks, double* probs, double* out) {
  const std::ptrdiff_t blocks = static_cast<std::ptrdiff_t>(s.batch * s.heads);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t bh = 0; bh < blocks; ++bh) {
    const std::size_t blk = static_cast<std::size_t>(bh) / s.heads;
    const std::size_t h = static_cast<std::size_t>(bh) % s.heads;
    attention_block_forward(s, blk, h, qkv, *masks[blk], probs, out);
  }
}

void attention_backward(const AttentionShape& s, const double* qkv, const double* probs,
                        std::span<const BoolMatrix* const> masks, const double* dout,
                        double* dqkv) {
  // Heads write disjoint column ranges of dqkv, so (batch, head) blocks are
  // independent.
  const std::ptrdiff_t blocks = static_cast<std::ptrdiff_t>(s.batch * s.heads);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t bh = 0; bh < blocks; ++bh) {
    const std::size_t blk = static_cast<std::size_t>(bh) / s.heads;
    const std::size_t h = static_cast<std::size_t>(bh) % s.heads;
    attention_block_backward(s, blk, h, qkv, probs, *masks[blk], dout, dqkv);
  }
}

}  // namespace parallel

int available_threads() {
#ifdef _OPENMP
  if (omp_in_parallel()) return 1;
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace {
// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelWork = 1 << 15;

bool go_parallel(std::size_t work) { return work >= kParallelWork && available_threads() > 1; }
}  // namespace

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate) {
  if (go_parallel(m * n * k)) return parallel::gemm_nn(m, n, k, a, b, c, accumulate);
  serial::gemm_nn(m, n, k, a, b, c, accumulate);
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate) {
  if (go_parallel(m * n * k)) return parallel::gemm_nt(m, n, k, a, b, c, accumulate);
  serial::gemm_nt(m, n, k, a, b, c, accumulate);
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate) {
  if (go_parallel(m * n * k)) return parallel::gemm_tn(m, n, k, a, b, c, accumulate);
  serial::gemm_tn(m, n, k, a, b, c, accumulate);
}

void attention_forward(const AttentionShape& s, const double* qkv,
                       std::span<const BoolMatrix* const> masks, double* probs, double* out) {
  if (go_parallel(s.batch * s.tokens * s.tokens * s.width))
    return parallel::attention_forward(s, qkv, masks, probs, out);
  serial::attention_forward(s, qkv, masks, probs, out);
}

void attention_backward(const AttentionShape& s, const double* qkv, const double* probs,
                        std::span<const BoolMatrix* const> masks, const double* dout,
                        double* dqkv) {
  if (go_parallel(s.batch * s.tokens * s.tokens * s.width))
    return parallel::attention_backward(s, qkv, probs, masks, dout, dqkv);
  serial::attention_backward(s, qkv, probs, masks, dout, dqkv);
}

}  // namespace maskma::kernels
