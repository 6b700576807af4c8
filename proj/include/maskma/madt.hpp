#pragma once

// MADT-lite: the single-agent baseline. Each agent runs its own causal
// transformer over its observation history; an observation is the agent's
// own unit features followed by max_units slots holding the features of the
// units it can see (slot j = unit j, zero when unseen or absent). The output
// head has a fixed size of K_intr + max_units, with unavailable actions muted
// at execution.

#include <cstddef>
#include <span>

#include "maskma/model.hpp"
#include "maskma/training.hpp"

namespace maskma {

// Slot count used by the built-in suites: the largest scenario plus one
// inserted unit.
std::size_t default_max_units();

class MadtModel {
 public:
  struct Vars {
    Var embed_w, embed_b, position;
    EncoderVars encoder;
    Var head_w, head_b;
  };

  MadtModel() = default;
  // cfg.max_units must be positive.
  MadtModel(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  std::size_t input_width() const { return (cfg_.max_units + 1) * cfg_.state_width; }
  std::size_t action_count() const { return cfg_.intrinsic + cfg_.max_units; }

  Vars bind(Tape& tape);
  Vars bind(Tape& tape) const;

  // batch.states holds observation rows (input_width wide); one sequence per
  // block. Returns (B*T x action_count) logits.
  Var forward(const Vars& v, const TokenBatch& batch) const;
  Tensor logits(const TokenBatch& batch) const;

 private:
  ModelConfig cfg_;
  ParameterStore params_;
};

// Observation of `agent` from one step's row-major N x state_width global
// state and N x N visibility; `out` is (max_units + 1) * state_width wide.
// Throws when N exceeds max_units.
void madt_observation(std::span<const double> states, const Visibility& vis, std::size_t agent,
                      std::size_t max_units, std::span<double> out);

class MadtLearner : public Learner {
 public:
  explicit MadtLearner(MadtModel& model) : model_(model) {}
  ParameterStore& params() override { return model_.params(); }
  const ModelConfig& config() const override { return model_.config(); }
  std::uint32_t kind() const override { return kMadtKind; }
  // One sequence per unit of every window; the mask mode does not apply.
  GroupLoss group_loss(Tape& tape, std::span<const TrainingWindow* const> windows,
                       const MaskSpec& mask, Rng& rng) override;

 private:
  MadtModel& model_;
};

MadtModel load_madt(const std::string& path);

}  // namespace maskma
