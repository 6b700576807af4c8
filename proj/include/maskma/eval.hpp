#pragma once

// Rollouts under the three execution modes, win-rate reports and the
// downstream protocols (varied policies, ally malfunction, ad hoc teamplay).

#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "maskma/arena.hpp"
#include "maskma/madt.hpp"
#include "maskma/model.hpp"

namespace maskma {

enum class ExecMode { kCentral, kStrict, kFast };

// "central", "strict" or "fast".
ExecMode parse_exec_mode(const std::string& text);
const char* exec_mode_name(ExecMode mode);

// The last `context` global states and visibilities, oldest first. When the
// unit count grows (a unit was inserted), earlier steps gain a placeholder
// row for the newcomer: team and type set, alive flag clear, seen by nobody.
class History {
 public:
  explicit History(std::size_t context);

  void push(const WorldState& w);

  std::size_t context() const { return context_; }
  std::size_t size() const { return states_.size(); }
  std::size_t units() const { return units_; }
  const Tensor& states(std::size_t k) const { return states_.at(k); }
  const Visibility& visibility(std::size_t k) const { return vis_.at(k); }
  // Mutable access for probes that tamper with recorded features.
  Tensor& states(std::size_t k) { return states_.at(k); }

 private:
  std::size_t context_;
  std::size_t units_ = 0;
  std::deque<Tensor> states_;
  std::deque<Visibility> vis_;
};

// Per-agent MaskMA logits for the current (last) history step. Unavailable
// actions follow available_actions(w, agent); in strict mode interactive
// logits of receivers the agent cannot see are left at 0 and marked
// unavailable.
std::vector<GarLogits> maskma_logits(const MaskMAModel& model, const History& history,
                                     const WorldState& w, std::span<const std::size_t> agents,
                                     ExecMode mode);

// Baseline logits (K_intr + max_units each) for the current step with
// unavailable actions and empty slots marked unavailable.
std::vector<GarLogits> madt_logits(const MadtModel& model, const History& history,
                                   const WorldState& w, std::span<const std::size_t> agents);

// Chooses actions for living controllable units.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual std::string name() const = 0;
  virtual std::vector<ActionId> act(const WorldState& w, const History& history,
                                    std::span<const std::size_t> agents) const = 0;
};

class ExpertController : public Controller {
 public:
  explicit ExpertController(ExpertOptions opts = {}) : opts_(opts) {}
  std::string name() const override { return opts_.kiting ? "expert" : "expert-nokite"; }
  std::vector<ActionId> act(const WorldState& w, const History& history,
                            std::span<const std::size_t> agents) const override;

 private:
  ExpertOptions opts_;
};

class MaskMAController : public Controller {
 public:
  MaskMAController(const MaskMAModel& model, ExecMode mode) : model_(model), mode_(mode) {}
  std::string name() const override;
  std::vector<ActionId> act(const WorldState& w, const History& history,
                            std::span<const std::size_t> agents) const override;

 private:
  const MaskMAModel& model_;
  ExecMode mode_;
};

// Always decentralized: every agent sees only its own observation history.
class MadtController : public Controller {
 public:
  explicit MadtController(const MadtModel& model) : model_(model) {}
  std::string name() const override { return "madt"; }
  std::vector<ActionId> act(const WorldState& w, const History& history,
                            std::span<const std::size_t> agents) const override;

 private:
  const MadtModel& model_;
};

// Interventions applied during one rollout.
struct EpisodeSetup {
  // Allies whose rank among allies is below this use the main controller;
  // the rest use `partner`.
  std::size_t model_allies = static_cast<std::size_t>(-1);
  const Controller* partner = nullptr;
  // From this step on the lowest-index living ally (chosen at that step)
  // is forced to stop.
  std::optional<int> malfunction_step;
  // At this step one ally of `insert_type` joins at the free cell nearest
  // the living allies' centroid.
  std::optional<int> insert_step;
  UnitType insert_type = UnitType::kHealer;
  bool record_actions = false;
};

struct EpisodeResult {
  std::uint64_t seed = 0;
  Outcome outcome = Outcome::kOngoing;
  int steps = 0;
  bool inserted = false;
  std::optional<std::size_t> malfunctioning;  // unit index, once chosen
  std::vector<std::vector<ActionId>> actions;  // per step when recorded

  friend bool operator==(const EpisodeResult&, const EpisodeResult&) = default;
};

// Plays one episode of `cfg` (with its seed replaced by `seed`) against
// enemy_policy.
EpisodeResult run_episode(const ScenarioConfig& cfg, std::uint64_t seed, const Controller& ctrl,
                          std::size_t context, const EpisodeSetup& setup = {});

struct EvalOptions {
  std::size_t episodes = 32;
  std::size_t seeds = 4;
  std::uint64_t seed = 1;
  std::size_t context = 5;
  int workers = 0;  // 0 = OpenMP default
};

struct EvalReport {
  std::string scenario;
  std::string controller;
  std::string setting;  // protocol parameter, e.g. "rho=0.5"; empty for plain runs
  std::size_t episodes = 0;
  std::size_t seeds = 0;
  std::vector<double> seed_win_rates;
  double win_rate = 0.0;  // mean over seeds
  double stddev = 0.0;    // sample deviation over seeds
  std::vector<EpisodeResult> results;  // seed-major

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

// episodes x seeds rollouts; episode e of seed s uses
// mix_seed(opts.seed, s, e). Draws count as non-wins.
EvalReport evaluate_scenario(const Controller& ctrl, const ScenarioConfig& cfg,
                             const EvalOptions& opts, const EpisodeSetup& setup = {},
                             const std::string& setting = "");
std::vector<EvalReport> evaluate(const Controller& ctrl, const std::vector<ScenarioConfig>& scenarios,
                                 const EvalOptions& opts);
double mean_win_rate(std::span<const EvalReport> reports);

// First ceil(rho * M) allies follow `ctrl`, the rest the expert without
// kiting. One report per fraction.
std::vector<EvalReport> run_varied_policies(const Controller& ctrl, const ScenarioConfig& cfg,
                                            std::span<const double> fractions,
                                            const EvalOptions& opts);
// Baseline report ("none") followed by one per malfunction time fraction f,
// the malfunction starting at floor(f * max_steps).
std::vector<EvalReport> run_ally_malfunction(const Controller& ctrl, const ScenarioConfig& cfg,
                                             std::span<const double> fractions,
                                             const EvalOptions& opts);
// No-insert report ("none") followed by one per insertion time fraction.
std::vector<EvalReport> run_adhoc_teamplay(const Controller& ctrl, const ScenarioConfig& cfg,
                                           std::span<const double> fractions,
                                           const EvalOptions& opts,
                                           UnitType insert_type = UnitType::kHealer);

// One JSON object per line: report fields plus per-episode outcomes.
std::string report_json(const EvalReport& report);
// Fixed-width summary table of win rates.
std::string summary_table(std::span<const EvalReport> reports);
// Writes <dir>/<stem>.jsonl and <dir>/<stem>_summary.txt.
void write_reports(const std::string& dir, const std::string& stem,
                   std::span<const EvalReport> reports);
// Whitespace-separated columns with a '#' header line.
void write_series(const std::string& path, const std::vector<std::string>& columns,
                  const std::vector<std::vector<double>>& rows);

}  // namespace maskma
