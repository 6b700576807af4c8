#pragma once

// Attention masks over a window of L timesteps x N units. Token (t, u) sits
// at index t * N + u; mask rows are queries and columns are keys.

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "maskma/tensor.hpp"

namespace maskma {

using Rng = std::mt19937_64;

// SplitMix64-style combination of a base seed with stream indices, used to
// give every episode, worker and training step an independent generator.
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

struct AttentionMask {
  std::size_t steps = 0;  // L
  std::size_t units = 0;  // N
  BoolMatrix allow;

  std::size_t tokens() const { return steps * units; }
  std::size_t token(std::size_t t, std::size_t u) const { return t * units + u; }
  bool operator()(std::size_t qt, std::size_t qu, std::size_t kt, std::size_t ku) const {
    return allow(token(qt, qu), token(kt, ku));
  }
  friend bool operator==(const AttentionMask&, const AttentionMask&) = default;
};

// Who sees whom at one timestep: row i is the observer, (i, j) is set when
// unit j is in i's visibility set. Always contains the diagonal.
using Visibility = BoolMatrix;

// One Visibility per timestep of a window, oldest first.
using VisibilitySet = std::vector<Visibility>;

// Block-causal mask: (t, i) may attend (t', j) iff t' <= t.
AttentionMask build_base_mask(std::size_t steps, std::size_t units);

// Drops each allowed non-self (query unit, key unit, key step) triple with
// probability `ratio`; the decision is shared by every query step of that
// unit. Self entries and base-false entries are left unchanged.
AttentionMask sample_training_mask(const AttentionMask& base, double ratio, Rng& rng);

// Uniform mask ratio in [0, 1].
double sample_ratio(Rng& rng);

// (t, i) may attend (t', j) iff t' <= t and j was visible to i at t'.
AttentionMask build_local_mask(const VisibilitySet& vis, std::size_t steps, std::size_t units);

// Isolates the first `pad_steps` timesteps: pad tokens attend only to
// themselves and no real token attends to a pad token.
void apply_padding(AttentionMask& mask, std::size_t pad_steps);

// True when no entry looks into the future and every self entry is set.
bool satisfies_invariants(const AttentionMask& mask);

}  // namespace maskma
