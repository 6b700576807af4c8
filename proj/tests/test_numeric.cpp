#include <cmath>
#include <random>

#include "doctest.h"
#include "gradcheck.hpp"
#include "maskma/autodiff.hpp"
#include "maskma/error.hpp"
#include "maskma/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace maskma;
using maskma::testing::max_gradient_error;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> n(0.0, scale);
  for (double& v : t.data()) v = n(rng);
  return t;
}

Parameter make_param(const char* name, Tensor value) {
  Parameter p;
  p.name = name;
  p.value = std::move(value);
  p.zero_grad();
  return p;
}

// Fixed random projection so every output entry feeds the scalar loss with
// a distinct weight.
Var project(Tape& tape, Var x, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  Tensor w = random_tensor(x.shape(), rng);
  return ops::sum(ops::mul(x, tape.constant(std::move(w))));
}

}  // namespace

TEST_CASE("matmul examples") {
  Tape tape(false);
  Var id = tape.constant(Tensor::matrix({{1, 0}, {0, 1}}));
  Var b = tape.constant(Tensor::matrix({{3, 4}, {5, 6}}));
  CHECK(ops::matmul(id, b).value() == Tensor::matrix({{3, 4}, {5, 6}}));
  Var row = tape.constant(Tensor::matrix({{1, 2}}));
  Var col = tape.constant(Tensor::matrix({{3}, {4}}));
  CHECK(ops::matmul(row, col).value() == Tensor::matrix({{11}}));
}

TEST_CASE("matmul matches triple-loop oracle") {
  std::mt19937_64 rng(1);
  Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
  Tape tape(false);
  const Tensor c = ops::matmul(tape.constant(a), tape.constant(b)).value();
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double ref = 0.0;
      for (std::size_t k = 0; k < 4; ++k) ref += a.at(i, k) * b.at(k, j);
      CHECK(std::abs(c.at(i, j) - ref) < 1e-12);
    }
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tape tape(false);
  Var a = tape.constant(Tensor({2, 3}));
  Var b = tape.constant(Tensor({2, 3}));
  try {
    ops::matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("and [2x3]") != std::string::npos);
  }
}

TEST_CASE("masked_softmax examples") {
  Tape tape(false);
  BoolMatrix all(1, 3, true);
  auto u = ops::masked_softmax(tape.constant(Tensor::matrix({{0, 0, 0}})), all).value();
  for (int i = 0; i < 3; ++i) CHECK(u[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));

  BoolMatrix first(1, 2);
  first.set(0, 0, true);
  auto s = ops::masked_softmax(tape.constant(Tensor::matrix({{5, 100}})), first).value();
  CHECK(s[0] == 1.0);
  CHECK(s[1] == 0.0);

  BoolMatrix two(1, 3, true);
  two.set(0, 2, false);
  auto p = ops::masked_softmax(tape.constant(Tensor::matrix({{1, 2, 3}})), two).value();
  const double e1 = std::exp(1.0), e2 = std::exp(2.0);
  CHECK(std::abs(p[0] - e1 / (e1 + e2)) < 1e-12);
  CHECK(std::abs(p[1] - e2 / (e1 + e2)) < 1e-12);
  CHECK(p[2] == 0.0);
  CHECK(std::abs(p[0] - 0.2689) < 1e-4);
}

TEST_CASE("masked_softmax rows sum to one and ignore masked scores") {
  std::mt19937_64 rng(2);
  std::bernoulli_distribution coin(0.5);
  for (int trial = 0; trial < 20; ++trial) {
    BoolMatrix mask(4, 6);
    for (std::size_t r = 0; r < 4; ++r) {
      for (std::size_t c = 0; c < 6; ++c) mask.set(r, c, coin(rng));
      mask.set(r, r, true);
    }
    Tensor scores = random_tensor({4, 6}, rng, 3.0);
    Tensor perturbed = scores;
    for (std::size_t i = 0; i < 24; ++i)
      if (!mask.cells[i]) perturbed[i] += 1e3 * (coin(rng) ? 1 : -1);
    Tape tape(false);
    const Tensor a = ops::masked_softmax(tape.constant(scores), mask).value();
    const Tensor b = ops::masked_softmax(tape.constant(perturbed), mask).value();
    CHECK(a == b);
    for (std::size_t r = 0; r < 4; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < 6; ++c) {
        total += a.at(r, c);
        if (!mask(r, c)) CHECK(a.at(r, c) == 0.0);
      }
      CHECK(std::abs(total - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("masked_softmax rejects a fully masked row") {
  Tape tape(false);
  BoolMatrix mask(2, 2, true);
  mask.set(1, 0, false);
  mask.set(1, 1, false);
  CHECK_THROWS_AS(ops::masked_softmax(tape.constant(Tensor({2, 2})), mask), Error);
}

TEST_CASE("masked positions receive no gradient") {
  Parameter s = make_param("s", Tensor::matrix({{0.3, -1.0, 2.0}}));
  BoolMatrix mask(1, 3, true);
  mask.set(0, 1, false);
  Tape tape;
  Var p = ops::masked_softmax(tape.parameter(s), mask);
  tape.backward(project(tape, p));
  CHECK(s.grad[1] == 0.0);
  CHECK(s.grad[0] != 0.0);
}

TEST_CASE("layer_norm examples") {
  Tape tape(false);
  Var g = tape.constant(Tensor({3}, 1.0)), b = tape.constant(Tensor({3}, 0.0));
  auto flat = ops::layer_norm(tape.constant(Tensor::matrix({{1, 1, 1}})), g, b).value();
  for (double v : flat.data()) CHECK(v == 0.0);

  Var g2 = tape.constant(Tensor({2}, 1.0)), b2 = tape.constant(Tensor({2}, 0.0));
  auto pair = ops::layer_norm(tape.constant(Tensor::matrix({{0, 2}})), g2, b2).value();
  // Population variance 1, epsilon 1e-5.
  CHECK(pair[0] == doctest::Approx(-1.0).epsilon(1e-5));
  CHECK(pair[1] == doctest::Approx(1.0).epsilon(1e-5));

  std::mt19937_64 rng(3);
  Tensor x = random_tensor({1, 16}, rng, 4.0);
  Var g3 = tape.constant(Tensor({16}, 1.0)), b3 = tape.constant(Tensor({16}, 0.0));
  auto y = ops::layer_norm(tape.constant(x), g3, b3).value();
  double mean = 0.0, var = 0.0;
  for (double v : y.data()) mean += v / 16.0;
  for (double v : y.data()) var += (v - mean) * (v - mean) / 16.0;
  CHECK(std::abs(mean) < 1e-10);
  CHECK(std::abs(var - 1.0) < 1e-4);
}

TEST_CASE("backward examples") {
  Parameter w = make_param("w", Tensor::vector({1, 2}));
  {
    Tape tape;
    Var v = tape.parameter(w);
    tape.backward(ops::sum(v));
    CHECK(w.grad[0] == 1.0);
    CHECK(w.grad[1] == 1.0);
  }
  w.zero_grad();
  {
    Tape tape;
    Var v = tape.parameter(w);
    tape.backward(ops::sum(ops::mul(v, v)));
    CHECK(w.grad[0] == 2.0);
    CHECK(w.grad[1] == 4.0);
  }
  Tape tape;
  Var v = tape.parameter(w);
  CHECK_THROWS_AS(tape.backward(ops::mul(v, v)), DimensionError);
}

TEST_CASE("non-finite results are reported") {
  Tape tape(false);
  Var x = tape.constant(Tensor::vector({1e308, 1.0}));
  CHECK_THROWS_AS(ops::scale(x, 10.0), NumericError);
}

TEST_CASE("gradient check of each op in isolation") {
  std::mt19937_64 rng(4);
  Parameter a = make_param("a", random_tensor({3, 4}, rng));
  Parameter b = make_param("b", random_tensor({4, 5}, rng));
  Parameter c = make_param("c", random_tensor({3, 4}, rng));
  Parameter bias = make_param("bias", random_tensor({5}, rng));
  Parameter gain = make_param("gain", random_tensor({4}, rng));
  Parameter shift = make_param("shift", random_tensor({4}, rng));
  Parameter table = make_param("table", random_tensor({5, 4}, rng));
  Parameter uv = make_param("uv", random_tensor({6, 2}, rng));
  Parameter pb = make_param("pb", random_tensor({1}, rng));

  SUBCASE("matmul") {
    CHECK(max_gradient_error({&a, &b}, [&](Tape& t) {
      return project(t, ops::matmul(t.parameter(a), t.parameter(b)));
    }) < 1e-6);
  }
  SUBCASE("linear") {
    CHECK(max_gradient_error({&a, &b, &bias}, [&](Tape& t) {
      return project(t, ops::linear(t.parameter(a), t.parameter(b), t.parameter(bias)));
    }) < 1e-6);
  }
  SUBCASE("add mul scale") {
    CHECK(max_gradient_error({&a, &c}, [&](Tape& t) {
      Var x = ops::mul(t.parameter(a), t.parameter(c));
      return project(t, ops::scale(ops::add(x, t.parameter(a)), 0.7));
    }) < 1e-6);
  }
  SUBCASE("concat") {
    CHECK(max_gradient_error({&a, &c}, [&](Tape& t) {
      return project(t, ops::concat_cols(t.parameter(a), t.parameter(c)));
    }) < 1e-6);
  }
  SUBCASE("embedding and gather") {
    const std::size_t idx[] = {4, 0, 4, 2};
    CHECK(max_gradient_error({&table}, [&](Tape& t) {
      Var e = ops::embedding(t.parameter(table), idx);
      const std::size_t rows[] = {3, 1, 1};
      return project(t, ops::gather_rows(e, rows));
    }) < 1e-6);
  }
  SUBCASE("gelu") {
    CHECK(max_gradient_error({&a}, [&](Tape& t) {
      return project(t, ops::gelu(t.parameter(a)));
    }) < 1e-6);
  }
  SUBCASE("layer_norm") {
    CHECK(max_gradient_error({&a, &gain, &shift}, [&](Tape& t) {
      return project(t, ops::layer_norm(t.parameter(a), t.parameter(gain), t.parameter(shift)));
    }) < 1e-5);
  }
  SUBCASE("masked_softmax") {
    BoolMatrix mask(3, 4, true);
    mask.set(0, 3, false);
    mask.set(2, 0, false);
    mask.set(2, 1, false);
    CHECK(max_gradient_error({&a}, [&](Tape& t) {
      return project(t, ops::masked_softmax(t.parameter(a), mask));
    }) < 1e-6);
  }
  SUBCASE("cross_entropy") {
    const int targets[] = {0, 3, 2};
    const double weights[] = {0.5, 0.0, 1.5};
    CHECK(max_gradient_error({&a}, [&](Tape& t) {
      return ops::cross_entropy(t.parameter(a), targets, weights);
    }) < 1e-6);
  }
  SUBCASE("pair_logits") {
    CHECK(max_gradient_error({&uv, &pb}, [&](Tape& t) {
      return project(t, ops::pair_logits(t.parameter(uv), t.parameter(pb), 3));
    }) < 1e-6);
  }
  SUBCASE("attention") {
    Parameter qkv = make_param("qkv", random_tensor({8, 12}, rng));
    BoolMatrix m0(4, 4, true), m1(4, 4);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j <= i; ++j) m1.set(i, j, true);
    const BoolMatrix* masks[] = {&m0, &m1};
    CHECK(max_gradient_error({&qkv}, [&](Tape& t) {
      return project(t, ops::attention(t.parameter(qkv), masks, 4, 2));
    }) < 1e-6);
  }
}

TEST_CASE("fused attention matches a direct per-head oracle") {
  std::mt19937_64 rng(5);
  const std::size_t T = 5, d = 6, H = 2, dh = 3;
  Tensor qkv = random_tensor({T, 3 * d}, rng);
  BoolMatrix mask(T, T);
  std::bernoulli_distribution coin(0.6);
  for (std::size_t i = 0; i < T; ++i) {
    for (std::size_t j = 0; j < T; ++j) mask.set(i, j, coin(rng));
    mask.set(i, i, true);
  }
  const BoolMatrix* masks[] = {&mask};
  Tape tape(false);
  const Tensor out = ops::attention(tape.constant(qkv), masks, T, H).value();
  for (std::size_t h = 0; h < H; ++h) {
    Tensor scores({T, T});
    for (std::size_t i = 0; i < T; ++i)
      for (std::size_t j = 0; j < T; ++j) {
        double s = 0.0;
        for (std::size_t e = 0; e < dh; ++e) s += qkv.at(i, h * dh + e) * qkv.at(j, d + h * dh + e);
        scores.at(i, j) = s / std::sqrt(static_cast<double>(dh));
      }
    const Tensor p = ops::masked_softmax(tape.constant(scores), mask).value();
    for (std::size_t i = 0; i < T; ++i)
      for (std::size_t e = 0; e < dh; ++e) {
        double ref = 0.0;
        for (std::size_t j = 0; j < T; ++j) ref += p.at(i, j) * qkv.at(j, 2 * d + h * dh + e);
        CHECK(std::abs(out.at(i, h * dh + e) - ref) < 1e-12);
      }
  }
}

TEST_CASE("parallel kernels are bit-identical to the serial reference") {
#ifdef _OPENMP
  const int saved = omp_get_max_threads();
  omp_set_num_threads(4);
#endif
  std::mt19937_64 rng(6);
  const std::size_t m = 37, n = 23, k = 19;
  Tensor a = random_tensor({m, k}, rng), b = random_tensor({k, n}, rng);
  Tensor bt = random_tensor({n, k}, rng), at = random_tensor({k, m}, rng);
  Tensor c1({m, n}), c2({m, n});
  kernels::serial::gemm_nn(m, n, k, a.ptr(), b.ptr(), c1.ptr(), false);
  kernels::parallel::gemm_nn(m, n, k, a.ptr(), b.ptr(), c2.ptr(), false);
  CHECK(c1 == c2);
  kernels::serial::gemm_nt(m, n, k, a.ptr(), bt.ptr(), c1.ptr(), true);
  kernels::parallel::gemm_nt(m, n, k, a.ptr(), bt.ptr(), c2.ptr(), true);
  CHECK(c1 == c2);
  kernels::serial::gemm_tn(m, n, k, at.ptr(), b.ptr(), c1.ptr(), false);
  kernels::parallel::gemm_tn(m, n, k, at.ptr(), b.ptr(), c2.ptr(), false);
  CHECK(c1 == c2);

  kernels::AttentionShape s{3, 7, 8, 2};
  Tensor qkv = random_tensor({s.batch * s.tokens, 3 * s.width}, rng);
  BoolMatrix mask(7, 7, true);
  const BoolMatrix* masks[] = {&mask, &mask, &mask};
  std::vector<double> p1(s.batch * s.heads * 49), p2(p1.size());
  Tensor o1({21, 8}), o2({21, 8});
  kernels::serial::attention_forward(s, qkv.ptr(), masks, p1.data(), o1.ptr());
  kernels::parallel::attention_forward(s, qkv.ptr(), masks, p2.data(), o2.ptr());
  CHECK(o1 == o2);
  CHECK(p1 == p2);
  Tensor dout = random_tensor({21, 8}, rng);
  Tensor g1({21, 24}), g2({21, 24});
  kernels::serial::attention_backward(s, qkv.ptr(), p1.data(), masks, dout.ptr(), g1.ptr());
  kernels::parallel::attention_backward(s, qkv.ptr(), p2.data(), masks, dout.ptr(), g2.ptr());
  CHECK(g1 == g2);
#ifdef _OPENMP
  omp_set_num_threads(saved);
#endif
}

TEST_CASE("ops are deterministic") {
  std::mt19937_64 rng(7);
  Tensor x = random_tensor({4, 6}, rng);
  auto run = [&] {
    Tape tape(false);
    Var v = tape.constant(x);
    return ops::gelu(ops::layer_norm(v, tape.constant(Tensor({6}, 1.0)),
                                     tape.constant(Tensor({6}, 0.0)))).value();
  };
  CHECK(run() == run());
}

TEST_CASE("backward visits each node once in reverse order") {
  // A diamond: y = x * x + x; dy/dx = 2x + 1 regardless of traversal.
  Parameter x = make_param("x", Tensor::vector({3.0}));
  Tape tape;
  Var v = tape.parameter(x);
  Var y = ops::add(ops::mul(v, v), v);
  tape.backward(ops::sum(y));
  CHECK(x.grad[0] == 7.0);
}
