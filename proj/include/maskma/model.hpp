#pragma once

// The MaskMA network: per-unit state embedding, mask-gated transformer
// encoder over all L x N unit tokens, and the generalizable action head
// (intrinsic logits per unit plus one pairwise logit per receiver unit).

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "maskma/autodiff.hpp"
#include "maskma/masks.hpp"
#include "maskma/tensor.hpp"

namespace maskma {

struct ModelConfig {
  std::size_t blocks = 2;
  std::size_t hidden = 64;
  std::size_t heads = 4;
  std::size_t context = 5;      // L, timesteps per window
  std::size_t state_width = 17;
  std::size_t intrinsic = 6;    // K_intr
  std::size_t max_units = 0;    // fixed slot count; only used by the MADT-lite baseline

  static ModelConfig full_scale() { return {6, 128, 8, 10, 17, 6, 0}; }
  static ModelConfig desk() { return {2, 64, 4, 5, 17, 6, 0}; }
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Ordered, named set of trainable arrays.
class ParameterStore {
 public:
  Parameter& add(std::string name, Tensor value);
  Parameter& get(std::string_view name);
  const Parameter& get(std::string_view name) const;
  bool contains(std::string_view name) const;
  std::vector<Parameter>& all() { return params_; }
  const std::vector<Parameter>& all() const { return params_; }
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Parameters of one pre-norm encoder block, bound to a tape.
struct BlockVars {
  Var ln1_gain, ln1_bias, qkv_w, qkv_b, out_w, out_b;
  Var ln2_gain, ln2_bias, ff1_w, ff1_b, ff2_w, ff2_b;
};

struct EncoderVars {
  std::vector<BlockVars> blocks;
  Var final_gain, final_bias;
};

// Adds the parameters of an encoder stack ("block<i>.*", "final_norm.*").
void init_encoder(ParameterStore& store, const ModelConfig& cfg, Rng& rng);
EncoderVars bind_encoder(Tape& tape, ParameterStore& store, const ModelConfig& cfg);
EncoderVars bind_encoder(Tape& tape, const ParameterStore& store, const ModelConfig& cfg);

// n_blocks x {x += attn(ln1(x)); x += ffn(ln2(x))}, then a final layer norm.
// `x` is (B*T x hidden); masks[b] gates block b. The same mask is used by
// every block and head.
Var encode(const EncoderVars& enc, Var x, std::span<const BoolMatrix* const> masks,
           std::size_t tokens, std::size_t heads);

// B independent token sets of equal size T. Token r of block b carries the
// state row b*T + r and its relative timestep within the window.
struct TokenBatch {
  std::size_t batch = 0;
  std::size_t tokens = 0;
  Tensor states;                        // (B*T x state_width)
  std::vector<std::size_t> step_index;  // B*T entries in [0, context)
  std::vector<BoolMatrix> masks;        // B masks of T x T

  std::vector<const BoolMatrix*> mask_ptrs() const;
};

// Per-agent logits over the combined action space [intrinsic | interactive].
struct GarLogits {
  std::vector<double> intrinsic;    // K_intr
  std::vector<double> interactive;  // N, one per receiver unit (self included)
  std::vector<std::uint8_t> available;  // K_intr + N

  std::size_t size() const { return intrinsic.size() + interactive.size(); }
  double logit(std::size_t action) const {
    return action < intrinsic.size() ? intrinsic[action] : interactive[action - intrinsic.size()];
  }
  // Softmax over available actions (0 for unavailable ones).
  std::vector<double> probabilities() const;
};

// Index into the combined action space: below K_intr intrinsic, otherwise the
// interactive action aimed at unit index - K_intr.
struct ActionId {
  std::size_t index = 0;
  friend bool operator==(ActionId, ActionId) = default;
};

enum class SelectMode { kArgmax, kSample };

// Unavailable actions are excluded; argmax breaks ties by lowest index.
ActionId select_action(const GarLogits& logits, SelectMode mode, Rng& rng);

class MaskMAModel {
 public:
  struct Vars {
    Var embed_w, embed_b, position;
    EncoderVars encoder;
    Var intrinsic_w, intrinsic_b, pair_w, pair_b;
  };

  MaskMAModel() = default;
  MaskMAModel(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

  // Binds parameters to a tape. The const overload requires a tape with
  // gradients disabled and may be used from several threads at once.
  Vars bind(Tape& tape);
  Vars bind(Tape& tape) const;

  // linear(state) + position[step]; (B*T x hidden).
  Var embed(const Vars& v, const TokenBatch& batch) const;
  Var encode(const Vars& v, Var tokens, const TokenBatch& batch) const;
  // Logits for every token of a grid batch whose tokens are laid out as
  // consecutive groups of `units` (one group per timestep):
  // (B*T x (K_intr + units)).
  Var gar_logits(const Vars& v, Var hidden, std::size_t units) const;
  // Full grid forward: embed, encode, head.
  Var forward(const Vars& v, const TokenBatch& batch, std::size_t units) const;

  // Inference helpers without a caller-managed tape.
  Tensor hidden(const TokenBatch& batch) const;
  // Logits of executor row `self` against receiver rows `receivers` of a
  // hidden matrix; interactive[k] refers to receivers[k].
  GarLogits head_logits(const Tensor& hidden, std::size_t self,
                        std::span<const std::size_t> receivers) const;

 private:
  ModelConfig cfg_;
  ParameterStore params_;
};

// Imitation objective: rows are split into `batch` equal blocks; each block
// contributes the mean cross-entropy over its included rows and the result
// is averaged over blocks with at least one included row.
Var imitation_loss(Var logits, std::span<const int> targets,
                   std::span<const std::uint8_t> include, std::size_t batch);

// Fraction of included rows whose argmax logit equals the target.
double imitation_accuracy(const Tensor& logits, std::span<const int> targets,
                          std::span<const std::uint8_t> include);

}  // namespace maskma
