#include "maskma/eval.hpp"

#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <omp.h>

#include "json.hpp"
#include "maskma/error.hpp"

namespace maskma {

ExecMode parse_exec_mode(const std::string& text) {
  if (text == "central") return ExecMode::kCentral;
  if (text == "strict") return ExecMode::kStrict;
  if (text == "fast") return ExecMode::kFast;
  throw ConfigError("unknown execution mode '" + text + "' (central, strict, fast)");
}

const char* exec_mode_name(ExecMode mode) {
  switch (mode) {
    case ExecMode::kCentral: return "central";
    case ExecMode::kStrict: return "strict";
    case ExecMode::kFast: return "fast";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// History

History::History(std::size_t context) : context_(context) {
  if (context == 0) throw ConfigError("history needs a positive context length");
}

void History::push(const WorldState& w) {
  const std::size_t n = w.size();
  if (!states_.empty() && n < units_) throw ConfigError("unit count shrank within an episode");
  if (!states_.empty() && n > units_) {
    for (std::size_t k = 0; k < states_.size(); ++k) {
      Tensor grown({n, kStateWidth});
      std::copy(states_[k].data().begin(), states_[k].data().end(), grown.data().begin());
      Visibility vis(n, n);
      for (std::size_t i = 0; i < n; ++i) {
        vis.set(i, i, true);
        if (i >= units_) {
          auto row = grown.row(i);
          row[0] = w.units[i].team == Team::kAlly ? 1.0 : 0.0;
          row[2 + static_cast<std::size_t>(w.units[i].type)] = 1.0;
          continue;
        }
        for (std::size_t j = 0; j < units_; ++j) vis.set(i, j, vis_[k](i, j));
      }
      states_[k] = std::move(grown);
      vis_[k] = std::move(vis);
    }
  }
  units_ = n;
  states_.push_back(global_state(w));
  vis_.push_back(maskma::visibility(w));
  if (states_.size() > context_) {
    states_.pop_front();
    vis_.pop_front();
  }
}

// ---------------------------------------------------------------------------
// Logits

namespace {

void check_history(const History& h, const WorldState& w, std::size_t context) {
  if (h.size() == 0) throw ConfigError("empty history");
  if (h.size() > context)
    throw ConfigError("history of " + std::to_string(h.size()) + " steps exceeds context " +
                      std::to_string(context));
  if (h.units() != w.size()) throw DimensionError("history and world disagree on unit count");
}

void set_availability(GarLogits& g, const WorldState& w, std::size_t agent) {
  const auto avail = available_actions(w, agent);
  g.available.assign(g.size(), 0);
  std::copy(avail.begin(), avail.end(), g.available.begin());
}

// Tokens of the whole history in (step, unit) order, positioned so that the
// newest step sits at the last relative timestep.
TokenBatch full_batch(const History& h, std::size_t context) {
  const std::size_t n = h.units(), steps = h.size();
  TokenBatch b;
  b.batch = 1;
  b.tokens = steps * n;
  b.states = Tensor({b.tokens, kStateWidth});
  for (std::size_t k = 0; k < steps; ++k) {
    std::copy(h.states(k).data().begin(), h.states(k).data().end(),
              b.states.data().begin() + static_cast<std::ptrdiff_t>(k * n * kStateWidth));
    for (std::size_t u = 0; u < n; ++u) b.step_index.push_back(context - steps + k);
  }
  return b;
}

VisibilitySet history_visibility(const History& h) {
  VisibilitySet vis;
  for (std::size_t k = 0; k < h.size(); ++k) vis.push_back(h.visibility(k));
  return vis;
}

std::vector<GarLogits> logits_from_hidden(const MaskMAModel& model, const Tensor& hidden,
                                          const WorldState& w, std::size_t last,
                                          std::span<const std::size_t> agents) {
  const std::size_t n = w.size();
  std::vector<std::size_t> receivers(n);
  for (std::size_t j = 0; j < n; ++j) receivers[j] = last * n + j;
  std::vector<GarLogits> out;
  for (std::size_t i : agents) {
    GarLogits g = model.head_logits(hidden, last * n + i, receivers);
    set_availability(g, w, i);
    out.push_back(std::move(g));
  }
  return out;
}

GarLogits strict_logits(const MaskMAModel& model, const History& h, const AttentionMask& local,
                        const WorldState& w, std::size_t agent) {
  const std::size_t n = h.units(), steps = h.size(), context = model.config().context;
  // Tokens the agent saw at each step: (step, unit) in index order.
  std::vector<std::size_t> token_ids;
  for (std::size_t k = 0; k < steps; ++k)
    for (std::size_t u = 0; u < n; ++u)
      if (h.visibility(k)(agent, u)) token_ids.push_back(k * n + u);
  const std::size_t m = token_ids.size();
  TokenBatch b;
  b.batch = 1;
  b.tokens = m;
  b.states = Tensor({m, kStateWidth});
  BoolMatrix mask(m, m);
  for (std::size_t a = 0; a < m; ++a) {
    const std::size_t k = token_ids[a] / n, u = token_ids[a] % n;
    const auto src = h.states(k).row(u);
    std::copy(src.begin(), src.end(), b.states.row(a).begin());
    b.step_index.push_back(context - steps + k);
    for (std::size_t c = 0; c < m; ++c) mask.set(a, c, local.allow(token_ids[a], token_ids[c]));
  }
  b.masks.push_back(std::move(mask));
  const Tensor hidden = model.hidden(b);

  std::size_t self = m;
  std::vector<std::size_t> rows, targets;
  for (std::size_t a = 0; a < m; ++a) {
    if (token_ids[a] / n != steps - 1) continue;
    const std::size_t u = token_ids[a] % n;
    if (u == agent) self = a;
    rows.push_back(a);
    targets.push_back(u);
  }
  const GarLogits seen = model.head_logits(hidden, self, rows);
  GarLogits g;
  g.intrinsic = seen.intrinsic;
  g.interactive.assign(n, 0.0);
  for (std::size_t r = 0; r < targets.size(); ++r) g.interactive[targets[r]] = seen.interactive[r];
  set_availability(g, w, agent);
  const std::size_t k_intr = g.intrinsic.size();
  for (std::size_t j = 0; j < n; ++j)
    if (!h.visibility(steps - 1)(agent, j)) g.available[k_intr + j] = 0;
  return g;
}

}  // namespace

std::vector<GarLogits> maskma_logits(const MaskMAModel& model, const History& history,
                                     const WorldState& w, std::span<const std::size_t> agents,
                                     ExecMode mode) {
  const std::size_t context = model.config().context;
  check_history(history, w, context);
  const std::size_t steps = history.size(), n = history.units();
  if (mode == ExecMode::kStrict) {
    const AttentionMask local = build_local_mask(history_visibility(history), steps, n);
    std::vector<GarLogits> out;
    for (std::size_t i : agents) out.push_back(strict_logits(model, history, local, w, i));
    return out;
  }
  TokenBatch b = full_batch(history, context);
  b.masks.push_back(mode == ExecMode::kCentral
                        ? build_base_mask(steps, n).allow
                        : build_local_mask(history_visibility(history), steps, n).allow);
  return logits_from_hidden(model, model.hidden(b), w, steps - 1, agents);
}

std::vector<GarLogits> madt_logits(const MadtModel& model, const History& history,
                                   const WorldState& w, std::span<const std::size_t> agents) {
  const ModelConfig& cfg = model.config();
  check_history(history, w, cfg.context);
  const std::size_t steps = history.size();
  std::vector<GarLogits> out;
  for (std::size_t i : agents) {
    TokenBatch b;
    b.batch = 1;
    b.tokens = steps;
    b.states = Tensor({steps, model.input_width()});
    for (std::size_t k = 0; k < steps; ++k) {
      madt_observation(history.states(k).data(), history.visibility(k), i, cfg.max_units,
                       b.states.row(k));
      b.step_index.push_back(cfg.context - steps + k);
    }
    b.masks.push_back(build_base_mask(steps, 1).allow);
    const Tensor logits = model.logits(b);
    const auto last = logits.row(steps - 1);
    GarLogits g;
    g.intrinsic.assign(last.begin(), last.begin() + static_cast<std::ptrdiff_t>(cfg.intrinsic));
    g.interactive.assign(last.begin() + static_cast<std::ptrdiff_t>(cfg.intrinsic), last.end());
    set_availability(g, w, i);
    out.push_back(std::move(g));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Controllers

namespace {

std::vector<ActionId> argmax_all(const std::vector<GarLogits>& logits) {
  Rng unused(0);
  std::vector<ActionId> out;
  out.reserve(logits.size());
  for (const auto& g : logits) out.push_back(select_action(g, SelectMode::kArgmax, unused));
  return out;
}

}  // namespace

std::vector<ActionId> ExpertController::act(const WorldState& w, const History&,
                                            std::span<const std::size_t> agents) const {
  std::vector<ActionId> out;
  for (std::size_t i : agents) out.push_back(expert_policy(w, i, opts_));
  return out;
}

std::string MaskMAController::name() const { return std::string("maskma-") + exec_mode_name(mode_); }

std::vector<ActionId> MaskMAController::act(const WorldState& w, const History& history,
                                            std::span<const std::size_t> agents) const {
  if (agents.empty()) return {};
  return argmax_all(maskma_logits(model_, history, w, agents, mode_));
}

std::vector<ActionId> MadtController::act(const WorldState& w, const History& history,
                                          std::span<const std::size_t> agents) const {
  if (agents.empty()) return {};
  return argmax_all(madt_logits(model_, history, w, agents));
}

// ---------------------------------------------------------------------------
// Rollouts

EpisodeResult run_episode(const ScenarioConfig& cfg, std::uint64_t seed, const Controller& ctrl,
                          std::size_t context, const EpisodeSetup& setup) {
  ScenarioConfig seeded = cfg;
  seeded.seed = seed;
  WorldState w = reset(seeded);
  History history(context);
  EpisodeResult r;
  r.seed = seed;
  while (terminal(w) == Outcome::kOngoing) {
    if (setup.insert_step && w.step == *setup.insert_step) {
      Cell cell;
      if (nearest_free_cell_to_allies(w, cell)) {
        insert_unit(w, {setup.insert_type, cell}, Team::kAlly);
        r.inserted = true;
      }
    }
    history.push(w);
    if (setup.malfunction_step && w.step >= *setup.malfunction_step && !r.malfunctioning) {
      for (std::size_t i = 0; i < w.size(); ++i)
        if (w.controllable(i) && w.units[i].alive) {
          r.malfunctioning = i;
          break;
        }
    }
    std::vector<ActionId> joint(w.size(), ActionId{action::kNoOp});
    std::vector<std::size_t> mine, partners;
    std::size_t rank = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (!w.controllable(i)) continue;
      const std::size_t my_rank = rank++;
      if (!w.units[i].alive) continue;
      if (r.malfunctioning == i) {
        joint[i] = {action::kStop};
        continue;
      }
      (my_rank < setup.model_allies || !setup.partner ? mine : partners).push_back(i);
    }
    const auto own = ctrl.act(w, history, mine);
    for (std::size_t k = 0; k < mine.size(); ++k) joint[mine[k]] = own[k];
    if (!partners.empty()) {
      const auto other = setup.partner->act(w, history, partners);
      for (std::size_t k = 0; k < partners.size(); ++k) joint[partners[k]] = other[k];
    }
    for (std::size_t i = 0; i < w.size(); ++i)
      if (!w.controllable(i) && w.units[i].alive) joint[i] = enemy_policy(w, i);
    if (setup.record_actions) r.actions.push_back(joint);
    step(w, joint);
  }
  r.outcome = terminal(w);
  r.steps = w.step;
  return r;
}

EvalReport evaluate_scenario(const Controller& ctrl, const ScenarioConfig& cfg,
                             const EvalOptions& opts, const EpisodeSetup& setup,
                             const std::string& setting) {
  if (opts.episodes == 0 || opts.seeds == 0) throw ConfigError("evaluation needs episodes and seeds");
  EvalReport rep;
  rep.scenario = cfg.name;
  rep.controller = ctrl.name();
  rep.setting = setting;
  rep.episodes = opts.episodes;
  rep.seeds = opts.seeds;
  const std::size_t total = opts.episodes * opts.seeds;
  rep.results.resize(total);
  std::exception_ptr failure;
  const int threads = opts.workers > 0 ? opts.workers : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (std::size_t k = 0; k < total; ++k) {
    try {
      const std::size_t s = k / opts.episodes, e = k % opts.episodes;
      rep.results[k] = run_episode(cfg, mix_seed(opts.seed, s, e), ctrl, opts.context, setup);
    } catch (...) {
#pragma omp critical(maskma_eval_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  for (std::size_t s = 0; s < opts.seeds; ++s) {
    std::size_t wins = 0;
    for (std::size_t e = 0; e < opts.episodes; ++e)
      wins += rep.results[s * opts.episodes + e].outcome == Outcome::kWin ? 1 : 0;
    rep.seed_win_rates.push_back(static_cast<double>(wins) / static_cast<double>(opts.episodes));
  }
  double sum = 0.0;
  for (double v : rep.seed_win_rates) sum += v;
  rep.win_rate = sum / static_cast<double>(opts.seeds);
  if (opts.seeds > 1) {
    double sq = 0.0;
    for (double v : rep.seed_win_rates) sq += (v - rep.win_rate) * (v - rep.win_rate);
    rep.stddev = std::sqrt(sq / static_cast<double>(opts.seeds - 1));
  }
  return rep;
}

std::vector<EvalReport> evaluate(const Controller& ctrl, const std::vector<ScenarioConfig>& scenarios,
                                 const EvalOptions& opts) {
  std::vector<EvalReport> out;
  for (const auto& cfg : scenarios) out.push_back(evaluate_scenario(ctrl, cfg, opts));
  return out;
}

double mean_win_rate(std::span<const EvalReport> reports) {
  if (reports.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& r : reports) sum += r.win_rate;
  return sum / static_cast<double>(reports.size());
}

// ---------------------------------------------------------------------------
// Downstream protocols

namespace {

std::string setting_label(const char* key, double value) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%s=%g", key, value);
  return buf;
}

int fraction_step(const ScenarioConfig& cfg, double f) {
  if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("time fraction outside [0, 1]");
  return static_cast<int>(std::floor(f * cfg.max_steps));
}

}  // namespace

std::vector<EvalReport> run_varied_policies(const Controller& ctrl, const ScenarioConfig& cfg,
                                            std::span<const double> fractions,
                                            const EvalOptions& opts) {
  const ExpertController partner(ExpertOptions{false});
  const double allies = static_cast<double>(cfg.allies.size());
  std::vector<EvalReport> out;
  for (double rho : fractions) {
    if (!(rho >= 0.0 && rho <= 1.0)) throw ConfigError("policy fraction outside [0, 1]");
    EpisodeSetup setup;
    setup.model_allies = static_cast<std::size_t>(std::ceil(rho * allies - 1e-9));
    setup.partner = &partner;
    out.push_back(evaluate_scenario(ctrl, cfg, opts, setup, setting_label("rho", rho)));
  }
  return out;
}

std::vector<EvalReport> run_ally_malfunction(const Controller& ctrl, const ScenarioConfig& cfg,
                                             std::span<const double> fractions,
                                             const EvalOptions& opts) {
  std::vector<EvalReport> out{evaluate_scenario(ctrl, cfg, opts, {}, "none")};
  for (double f : fractions) {
    EpisodeSetup setup;
    setup.malfunction_step = fraction_step(cfg, f);
    out.push_back(evaluate_scenario(ctrl, cfg, opts, setup, setting_label("f", f)));
  }
  return out;
}

std::vector<EvalReport> run_adhoc_teamplay(const Controller& ctrl, const ScenarioConfig& cfg,
                                           std::span<const double> fractions,
                                           const EvalOptions& opts, UnitType insert_type) {
  std::vector<EvalReport> out{evaluate_scenario(ctrl, cfg, opts, {}, "none")};
  for (double f : fractions) {
    EpisodeSetup setup;
    setup.insert_step = fraction_step(cfg, f);
    setup.insert_type = insert_type;
    out.push_back(evaluate_scenario(ctrl, cfg, opts, setup, setting_label("f", f)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Output

std::string report_json(const EvalReport& r) {
  nlohmann::json outcomes = nlohmann::json::array();
  for (std::size_t k = 0; k < r.results.size(); ++k) {
    const auto& e = r.results[k];
    nlohmann::json item = {{"seed_index", k / r.episodes},
                           {"episode", k % r.episodes},
                           {"seed", e.seed},
                           {"outcome", outcome_name(e.outcome)},
                           {"steps", e.steps}};
    if (e.inserted) item["inserted"] = true;
    outcomes.push_back(std::move(item));
  }
  nlohmann::json j = {{"scenario", r.scenario},        {"controller", r.controller},
                      {"setting", r.setting},          {"episodes", r.episodes},
                      {"seeds", r.seeds},              {"win_rate", r.win_rate},
                      {"stddev", r.stddev},            {"seed_win_rates", r.seed_win_rates},
                      {"outcomes", std::move(outcomes)}};
  return j.dump();
}

std::string summary_table(std::span<const EvalReport> reports) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-20s %-16s %-10s %9s %8s\n", "scenario", "controller",
                "setting", "win_rate", "std");
  out << line;
  for (const auto& r : reports) {
    std::snprintf(line, sizeof(line), "%-20s %-16s %-10s %9.4f %8.4f\n", r.scenario.c_str(),
                  r.controller.c_str(), r.setting.empty() ? "-" : r.setting.c_str(), r.win_rate,
                  r.stddev);
    out << line;
  }
  if (reports.size() > 1) {
    std::snprintf(line, sizeof(line), "%-20s %-16s %-10s %9.4f\n", "mean", "", "",
                  mean_win_rate(reports));
    out << line;
  }
  return out.str();
}

void write_reports(const std::string& dir, const std::string& stem,
                   std::span<const EvalReport> reports) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream jsonl(fs::path(dir) / (stem + ".jsonl"), std::ios::trunc);
  std::ofstream summary(fs::path(dir) / (stem + "_summary.txt"), std::ios::trunc);
  if (!jsonl || !summary) throw IoError("cannot write reports under " + dir);
  for (const auto& r : reports) jsonl << report_json(r) << "\n";
  summary << summary_table(reports);
  if (!jsonl || !summary) throw IoError("write failed under " + dir);
}

void write_series(const std::string& path, const std::vector<std::string>& columns,
                  const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << "#";
  for (const auto& c : columns) out << " " << c;
  out << "\n";
  char buf[32];
  for (const auto& row : rows) {
    if (row.size() != columns.size()) throw DimensionError("series row width");
    for (std::size_t k = 0; k < row.size(); ++k) {
      std::snprintf(buf, sizeof(buf), "%.6g", row[k]);
      out << (k ? " " : "") << buf;
    }
    out << "\n";
  }
  if (!out) throw IoError("write failed on " + path);
}

}  // namespace maskma
