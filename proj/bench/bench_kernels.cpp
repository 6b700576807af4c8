// Serial versus OpenMP kernels at the shapes a desk-preset training step
// produces, plus parallel rollouts. Prints median wall time over repeats and
// the largest elementwise difference between the two results.
//
//   bench_kernels [repeats]        thread count from OMP_NUM_THREADS

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <vector>

#include "maskma/eval.hpp"
#include "maskma/kernels.hpp"
#include "maskma/masks.hpp"

using namespace maskma;
using Clock = std::chrono::steady_clock;

namespace {

double median_ms(int repeats, const std::function<void()>& fn) {
  fn();  // warm-up
  std::vector<double> t;
  for (int r = 0; r < repeats; ++r) {
    const auto start = Clock::now();
    fn();
    t.push_back(std::chrono::duration<double, std::milli>(Clock::now() - start).count());
  }
  std::nth_element(t.begin(), t.begin() + static_cast<std::ptrdiff_t>(t.size() / 2), t.end());
  return t[t.size() / 2];
}

std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  std::vector<double> v(n);
  for (double& x : v) x = normal(rng);
  return v;
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

void row(const char* name, const char* shape, double serial, double parallel, double diff) {
  std::printf("%-20s %-22s %10.3f %10.3f %8.2fx %10.1e\n", name, shape, serial, parallel,
              serial / parallel, diff);
}

using Gemm = void (*)(std::size_t, std::size_t, std::size_t, const double*, const double*, double*,
                      bool);

void bench_gemm(const char* name, Gemm serial, Gemm parallel, std::size_t m, std::size_t n,
                std::size_t k, int repeats, std::mt19937_64& rng) {
  const auto a = random_vector(m * k, rng), b = random_vector(k * n, rng);
  std::vector<double> cs(m * n), cp(m * n);
  const double ts = median_ms(repeats, [&] { serial(m, n, k, a.data(), b.data(), cs.data(), false); });
  const double tp = median_ms(repeats, [&] { parallel(m, n, k, a.data(), b.data(), cp.data(), false); });
  char shape[64];
  std::snprintf(shape, sizeof(shape), "%zux%zux%zu", m, n, k);
  row(name, shape, ts, tp, max_diff(cs, cp));
}

}  // namespace

int main(int argc, char** argv) {
  const int repeats = argc > 1 ? std::max(1, std::atoi(argv[1])) : 20;
  std::mt19937_64 rng(42);
  std::printf("threads %d, repeats %d\n\n", omp_get_max_threads(), repeats);
  std::printf("%-20s %-22s %10s %10s %9s %10s\n", "kernel", "shape", "serial ms", "omp ms",
              "speedup", "max diff");

  // 32 windows of 5 steps x 9 units, hidden 64.
  const std::size_t rows = 32 * 5 * 9, d = 64;
  bench_gemm("gemm_nn qkv", kernels::serial::gemm_nn, kernels::parallel::gemm_nn, rows, 3 * d, d,
             repeats, rng);
  bench_gemm("gemm_nn ffn", kernels::serial::gemm_nn, kernels::parallel::gemm_nn, rows, 4 * d, d,
             repeats, rng);
  bench_gemm("gemm_nt dinput", kernels::serial::gemm_nt, kernels::parallel::gemm_nt, rows, d, 4 * d,
             repeats, rng);
  bench_gemm("gemm_tn dweight", kernels::serial::gemm_tn, kernels::parallel::gemm_tn, 4 * d, d, rows,
             repeats, rng);

  {
    kernels::AttentionShape s{32, 45, d, 4};
    const auto qkv = random_vector(s.batch * s.tokens * 3 * d, rng);
    const auto dout = random_vector(s.batch * s.tokens * d, rng);
    Rng mrng(3);
    std::vector<BoolMatrix> masks;
    for (std::size_t b = 0; b < s.batch; ++b)
      masks.push_back(sample_training_mask(build_base_mask(5, 9), 0.5, mrng).allow);
    std::vector<const BoolMatrix*> ptrs;
    for (const auto& m : masks) ptrs.push_back(&m);
    const std::size_t probs_size = s.batch * s.heads * s.tokens * s.tokens;
    std::vector<double> ps(probs_size), pp(probs_size), os(s.batch * s.tokens * d),
        op(s.batch * s.tokens * d);
    const double fs = median_ms(repeats, [&] {
      kernels::serial::attention_forward(s, qkv.data(), ptrs, ps.data(), os.data());
    });
    const double fp = median_ms(repeats, [&] {
      kernels::parallel::attention_forward(s, qkv.data(), ptrs, pp.data(), op.data());
    });
    row("attention fwd", "32 x 45 tok, 4 heads", fs, fp, max_diff(os, op));
    std::vector<double> gs(qkv.size()), gp(qkv.size());
    const double bs = median_ms(repeats, [&] {
      kernels::serial::attention_backward(s, qkv.data(), ps.data(), ptrs, dout.data(), gs.data());
    });
    const double bp = median_ms(repeats, [&] {
      kernels::parallel::attention_backward(s, qkv.data(), pp.data(), ptrs, dout.data(), gp.data());
    });
    row("attention bwd", "32 x 45 tok, 4 heads", bs, bp, max_diff(gs, gp));
  }

  // Episode-level parallelism: the expert through the evaluation harness.
  {
    const ExpertController expert;
    EvalOptions serial_opts;
    serial_opts.episodes = 16;
    serial_opts.seeds = 2;
    serial_opts.workers = 1;
    EvalOptions parallel_opts = serial_opts;
    parallel_opts.workers = 0;
    const auto scenarios = training_scenarios();
    double rs = 0.0, rp = 0.0;
    const double ts = median_ms(std::max(1, repeats / 5), [&] {
      rs = mean_win_rate(evaluate(expert, scenarios, serial_opts));
    });
    const double tp = median_ms(std::max(1, repeats / 5), [&] {
      rp = mean_win_rate(evaluate(expert, scenarios, parallel_opts));
    });
    row("expert rollouts", "8 scenarios x 32 ep", ts, tp, std::abs(rs - rp));
  }
  return 0;
}
