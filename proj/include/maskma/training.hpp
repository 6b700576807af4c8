#pragma once

// Multi-task imitation learning with mask-based training, the RMSProp
// optimizer and the checkpoint container.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "maskma/data.hpp"
#include "maskma/masks.hpp"
#include "maskma/model.hpp"

namespace maskma {

enum class MaskMode { kNone, kFixed, kRandom, kLocal };

struct MaskSpec {
  MaskMode mode = MaskMode::kRandom;
  double ratio = 0.0;  // used by kFixed

  // "none", "fixed:<ratio>", "random" or "local".
  static MaskSpec parse(const std::string& text);
  std::string str() const;
  friend bool operator==(const MaskSpec&, const MaskSpec&) = default;
};

// Training mask for one window: base mask, mask mode, then padding
// isolation for the window's leading pad steps.
AttentionMask window_mask(const TrainingWindow& window, const MaskSpec& spec, Rng& rng);

struct TrainConfig {
  ModelConfig model = ModelConfig::desk();
  double learning_rate = 1e-4;
  double rms_alpha = 0.99;
  double rms_eps = 1e-8;
  double weight_decay = 1e-5;
  std::size_t batch = 32;
  std::size_t steps = 1000;
  MaskSpec mask;
  std::size_t log_every = 10;
  std::size_t eval_every = 0;        // 0 disables periodic evaluation
  std::size_t checkpoint_every = 0;  // 0 = only at the end
  std::uint64_t seed = 1;
  std::string out_dir;               // empty = no files
  std::string resume;                // checkpoint to continue from

  void validate() const;
};

// RMSProp with decoupled weight decay:
//   v <- a v + (1 - a) g^2;  p <- p - lr g / (sqrt(v) + eps) - lr wd p
class RmsProp {
 public:
  RmsProp() = default;
  RmsProp(const ParameterStore& params, double alpha, double eps);

  void step(ParameterStore& params, double lr, double weight_decay);
  std::vector<Tensor>& state() { return square_avg_; }
  const std::vector<Tensor>& state() const { return square_avg_; }

 private:
  double alpha_ = 0.99;
  double eps_ = 1e-8;
  std::vector<Tensor> square_avg_;
};

// Loss of one group of equal-width windows.
struct GroupLoss {
  Var loss;
  std::size_t correct = 0;
  std::size_t counted = 0;
};

// A trainable policy network.
class Learner {
 public:
  virtual ~Learner() = default;
  virtual ParameterStore& params() = 0;
  virtual const ModelConfig& config() const = 0;
  virtual std::uint32_t kind() const = 0;
  // Mean per-window loss over `windows` (all with the same unit count).
  virtual GroupLoss group_loss(Tape& tape, std::span<const TrainingWindow* const> windows,
                               const MaskSpec& mask, Rng& rng) = 0;
};

inline constexpr std::uint32_t kMaskMAKind = 0;
inline constexpr std::uint32_t kMadtKind = 1;

class MaskMALearner : public Learner {
 public:
  explicit MaskMALearner(MaskMAModel& model) : model_(model) {}
  ParameterStore& params() override { return model_.params(); }
  const ModelConfig& config() const override { return model_.config(); }
  std::uint32_t kind() const override { return kMaskMAKind; }
  GroupLoss group_loss(Tape& tape, std::span<const TrainingWindow* const> windows,
                       const MaskSpec& mask, Rng& rng) override;

  // Masks used by the most recent group_loss call (instrumentation).
  const std::vector<AttentionMask>& last_masks() const { return last_masks_; }

 private:
  MaskMAModel& model_;
  std::vector<AttentionMask> last_masks_;
};

// Token batch of equal-width windows with the given masks.
TokenBatch make_token_batch(std::span<const TrainingWindow* const> windows,
                            std::span<const AttentionMask> masks);

struct StepMetrics {
  std::size_t step = 0;
  double loss = 0.0;
  double accuracy = 0.0;
  std::size_t windows = 0;
};

// One optimizer update on `windows`: per unit-count group, forward and
// backward of the group loss weighted by its share of the batch, then a
// single RMSProp step. Throws NumericError on a non-finite loss.
StepMetrics train_step(Learner& learner, RmsProp& opt, const std::vector<TrainingWindow>& windows,
                       const TrainConfig& cfg, Rng& rng);

// Evaluation hook: returns the score used to keep the best checkpoint
// (decentralized win rate) and may add fields to the metrics record.
struct EvalResult {
  double score = 0.0;
  std::vector<std::pair<std::string, double>> fields;
};
using EvalHook = std::function<EvalResult(std::size_t step)>;

struct TrainResult {
  std::size_t first_step = 0;  // 1 for a fresh run
  std::size_t last_step = 0;
  std::vector<StepMetrics> history;
  std::optional<double> best_score;
  std::size_t best_step = 0;
};

// Runs cfg.steps updates (continuing from cfg.resume if set). Step s draws
// its windows from Rng(mix_seed(cfg.seed, s)), so a resumed run matches an
// uninterrupted one. Writes metrics.jsonl, checkpoint_latest.bin and
// checkpoint_best.bin under cfg.out_dir when it is set.
TrainResult train(Learner& learner, const Dataset& data, const TrainConfig& cfg,
                  const EvalHook& evaluate = {});

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  std::uint32_t kind = kMaskMAKind;
  std::uint64_t step = 0;
  std::vector<std::pair<std::string, Tensor>> arrays;

  const Tensor* find(const std::string& name) const;
};

Checkpoint make_checkpoint(const ParameterStore& params, const RmsProp* opt,
                           const ModelConfig& config, std::uint32_t kind, std::uint64_t step);
// Copies parameters (and optimizer state when `opt` is given and present)
// into place; shapes must match.
void restore_checkpoint(const Checkpoint& ck, ParameterStore& params, RmsProp* opt);

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

// Convenience for MaskMA checkpoints.
MaskMAModel load_maskma(const std::string& path);

}  // namespace maskma
