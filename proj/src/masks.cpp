#include "maskma/masks.hpp"

#include <algorithm>
#include <string>

#include "maskma/error.hpp"

namespace maskma {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  return splitmix(splitmix(splitmix(base) ^ a) ^ b);
}

AttentionMask build_base_mask(std::size_t steps, std::size_t units) {
  if (steps == 0 || units == 0) throw ConfigError("mask needs at least one step and one unit");
  AttentionMask m{steps, units, BoolMatrix(steps * units, steps * units)};
  const std::size_t T = m.tokens();
  for (std::size_t q = 0; q < T; ++q) {
    // Keys up to the end of the query's own timestep block.
    const std::size_t limit = (q / units + 1) * units;
    for (std::size_t k = 0; k < limit; ++k) m.allow.set(q, k, true);
  }
  return m;
}

AttentionMask sample_training_mask(const AttentionMask& base, double ratio, Rng& rng) {
  if (!(ratio >= 0.0 && ratio <= 1.0))
    throw ConfigError("mask ratio " + std::to_string(ratio) + " outside [0, 1]");
  const std::size_t L = base.steps, N = base.units;
  // keep[(i * N + j) * L + t']: may unit i see unit j's token at step t'.
  std::vector<std::uint8_t> keep(N * N * L, 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < N; ++j)
      for (std::size_t kt = 0; kt < L; ++kt)
        if (i != j) keep[(i * N + j) * L + kt] = unit(rng) >= ratio ? 1 : 0;
  AttentionMask out = base;
  for (std::size_t qt = 0; qt < L; ++qt)
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t kt = 0; kt < L; ++kt)
        for (std::size_t j = 0; j < N; ++j) {
          const std::size_t q = out.token(qt, i), k = out.token(kt, j);
          if (out.allow(q, k) && !keep[(i * N + j) * L + kt]) out.allow.set(q, k, false);
        }
  return out;
}

double sample_ratio(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

AttentionMask build_local_mask(const VisibilitySet& vis, std::size_t steps, std::size_t units) {
  AttentionMask m = build_base_mask(steps, units);
  if (vis.size() != steps)
    throw ConfigError("visibility covers " + std::to_string(vis.size()) + " steps, expected " +
                      std::to_string(steps));
  for (std::size_t t = 0; t < steps; ++t) {
    if (vis[t].rows != units || vis[t].cols != units)
      throw ConfigError("visibility at step " + std::to_string(t) + " is not " +
                        std::to_string(units) + "x" + std::to_string(units));
    for (std::size_t i = 0; i < units; ++i)
      if (!vis[t](i, i))
        throw ConfigError("visibility of unit " + std::to_string(i) + " at step " +
                          std::to_string(t) + " is missing itself");
  }
  for (std::size_t qt = 0; qt < steps; ++qt)
    for (std::size_t i = 0; i < units; ++i)
      for (std::size_t kt = 0; kt <= qt; ++kt)
        for (std::size_t j = 0; j < units; ++j)
          m.allow.set(m.token(qt, i), m.token(kt, j), vis[kt](i, j));
  return m;
}

void apply_padding(AttentionMask& mask, std::size_t pad_steps) {
  const std::size_t T = mask.tokens();
  const std::size_t pad_tokens = std::min(pad_steps, mask.steps) * mask.units;
  for (std::size_t q = 0; q < T; ++q)
    for (std::size_t k = 0; k < T; ++k) {
      const bool q_pad = q < pad_tokens, k_pad = k < pad_tokens;
      if ((q_pad || k_pad) && q != k) mask.allow.set(q, k, false);
    }
  for (std::size_t q = 0; q < pad_tokens; ++q) mask.allow.set(q, q, true);
}

bool satisfies_invariants(const AttentionMask& mask) {
  const std::size_t T = mask.tokens();
  if (mask.allow.rows != T || mask.allow.cols != T) return false;
  for (std::size_t q = 0; q < T; ++q) {
    if (!mask.allow(q, q)) return false;
    for (std::size_t k = 0; k < T; ++k)
      if (k / mask.units > q / mask.units && mask.allow(q, k)) return false;
  }
  return true;
}

}  // namespace maskma
