// maskma: data generation, training, evaluation, ablations and downstream
// protocols from the command line.
//
// Exit codes: 0 success, 1 unexpected failure, 2 invalid arguments or
// configuration, 3 expert gate failure, 4 I/O failure.

#include <omp.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "maskma/error.hpp"
#include "maskma/experiments.hpp"

#ifndef MASKMA_VERSION
#define MASKMA_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace maskma;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitValidation = 2;
constexpr int kExitGate = 3;
constexpr int kExitIo = 4;

struct GateFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Worker count for rollouts and data generation; 0 leaves OpenMP's default.
int env_workers() {
  const char* text = std::getenv("MASKMA_WORKERS");
  if (!text || !*text) return 0;
  char* end = nullptr;
  const long n = std::strtol(text, &end, 10);
  if (*end != '\0' || n < 1 || n > 4096)
    throw ConfigError(std::string("MASKMA_WORKERS must be a positive integer, got '") + text + "'");
  return static_cast<int>(n);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

// Suite names, built-in scenario names and scenario files, comma separated.
std::vector<ScenarioConfig> resolve_scenarios(const std::string& text) {
  std::vector<ScenarioConfig> out;
  for (const auto& item : split_list(text)) {
    if (item == "train" || item == "all") {
      const auto s = training_scenarios();
      out.insert(out.end(), s.begin(), s.end());
    }
    if (item == "test" || item == "all") {
      const auto s = test_scenarios();
      out.insert(out.end(), s.begin(), s.end());
    }
    if (item == "adhoc" || item == "all") out.push_back(adhoc_scenario());
    if (item == "train" || item == "test" || item == "adhoc" || item == "all") continue;
    if (fs::is_regular_file(item))
      out.push_back(load_scenario(item));
    else
      out.push_back(scenario_by_name(item));
  }
  if (out.empty()) throw ConfigError("no scenarios selected by '" + text + "'");
  return out;
}

struct Common {
  std::uint64_t seed = 1;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, const std::string& default_out) {
  c.out = default_out;
  cmd->add_option("--seed", c.seed, "Master seed")->capture_default_str();
  cmd->add_option("--out", c.out, "Output directory")->capture_default_str();
}

// Written before anything else; settings.toml replays the run with --config.
void write_manifest(const CLI::App& app, const CLI::App& cmd, const Common& c, int argc,
                    char** argv) {
  fs::create_directories(c.out);
  const std::string settings = "[" + cmd.get_name() + "]\n" + cmd.config_to_str(true, false);
  json m;
  m["command"] = cmd.get_name();
  m["version"] = MASKMA_VERSION;
  m["seed"] = c.seed;
  m["out"] = c.out;
  m["config_files"] = json::array();
  if (const auto* opt = app.get_option_no_throw("--config"); opt && opt->count() > 0)
    for (const auto& f : opt->results()) m["config_files"].push_back(f);
  m["argv"] = std::vector<std::string>(argv, argv + argc);
  m["workers_env"] = std::getenv("MASKMA_WORKERS") ? std::getenv("MASKMA_WORKERS") : "";
  m["settings"] = settings;

  std::ofstream mf(fs::path(c.out) / "manifest.json", std::ios::trunc);
  std::ofstream sf(fs::path(c.out) / "settings.toml", std::ios::trunc);
  if (!mf || !sf) throw IoError("cannot write the manifest under " + c.out);
  mf << m.dump(2) << "\n";
  sf << settings;
  if (!mf || !sf) throw IoError("manifest write failed under " + c.out);
}

// ---------------------------------------------------------------------------

struct TrainFlags {
  std::string mask = "random";
  std::size_t timestep = 5;
  std::size_t steps = 6250;
  std::size_t batch = 32;
  double lr = 1e-4;
  double weight_decay = 1e-5;
  std::size_t blocks = 2, hidden = 64, heads = 4;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--mask-mode", f.mask, "none | fixed:<ratio> | random | local")
      ->capture_default_str();
  cmd->add_option("--timestep", f.timestep, "Context length L")->capture_default_str();
  cmd->add_option("--steps", f.steps, "Optimizer updates")->capture_default_str();
  cmd->add_option("--batch", f.batch, "Windows per update")->capture_default_str();
  cmd->add_option("--lr", f.lr, "Learning rate")->capture_default_str();
  cmd->add_option("--weight-decay", f.weight_decay, "Decoupled weight decay")->capture_default_str();
  cmd->add_option("--blocks", f.blocks, "Transformer blocks")->capture_default_str();
  cmd->add_option("--hidden", f.hidden, "Hidden width")->capture_default_str();
  cmd->add_option("--heads", f.heads, "Attention heads")->capture_default_str();
}

TrainConfig make_train_config(const TrainFlags& f, std::uint64_t seed) {
  TrainConfig c;
  c.model.blocks = f.blocks;
  c.model.hidden = f.hidden;
  c.model.heads = f.heads;
  c.model.context = f.timestep;
  c.mask = MaskSpec::parse(f.mask);
  c.steps = f.steps;
  c.batch = f.batch;
  c.learning_rate = f.lr;
  c.weight_decay = f.weight_decay;
  c.seed = seed;
  c.validate();
  return c;
}

struct EvalFlags {
  std::size_t episodes = 32;
  std::size_t seeds = 4;
};

void add_eval_flags(CLI::App* cmd, EvalFlags& f) {
  cmd->add_option("--episodes", f.episodes, "Episodes per seed")->capture_default_str();
  cmd->add_option("--seeds", f.seeds, "Evaluation seeds")->capture_default_str();
}

EvalOptions make_eval_options(const EvalFlags& f, std::uint64_t seed, int workers) {
  if (f.episodes == 0 || f.seeds == 0) throw ConfigError("episodes and seeds must be positive");
  EvalOptions o;
  o.episodes = f.episodes;
  o.seeds = f.seeds;
  o.seed = seed;
  o.workers = workers;
  return o;
}

// A trained policy of either kind, or the scripted expert.
struct Policy {
  std::unique_ptr<MaskMAModel> maskma;
  std::unique_ptr<MadtModel> madt;
  std::unique_ptr<Controller> controller;
  std::size_t context = 5;
};

Policy load_policy(const std::string& checkpoint, ExecMode mode) {
  Policy p;
  if (checkpoint == "expert") {
    p.controller = std::make_unique<ExpertController>();
    return p;
  }
  if (checkpoint == "expert-nokite") {
    p.controller = std::make_unique<ExpertController>(ExpertOptions{false});
    return p;
  }
  const Checkpoint ck = load_checkpoint(checkpoint);
  p.context = ck.config.context;
  if (ck.kind == kMadtKind) {
    p.madt = std::make_unique<MadtModel>(ck.config, 0);
    restore_checkpoint(ck, p.madt->params(), nullptr);
    p.controller = std::make_unique<MadtController>(*p.madt);
  } else {
    p.maskma = std::make_unique<MaskMAModel>(ck.config, 0);
    restore_checkpoint(ck, p.maskma->params(), nullptr);
    p.controller = std::make_unique<MaskMAController>(*p.maskma, mode);
  }
  return p;
}

// ---------------------------------------------------------------------------

int run_scenarios(const std::string& suite, const Common& c) {
  const auto scenarios = resolve_scenarios(suite);
  for (const auto& s : scenarios) {
    const fs::path path = fs::path(c.out) / (s.name + ".scn");
    std::ofstream out(path, std::ios::trunc);
    if (!out || !(out << write_scenario(s))) throw IoError("cannot write " + path.string());
    std::printf("%-20s allies %2zu  enemies %2zu  grid %dx%d  -> %s\n", s.name.c_str(),
                s.allies.size(), s.enemies.size(), s.width, s.height, path.c_str());
  }
  return 0;
}

int run_gen_data(const std::string& scenarios_text, std::size_t episodes, double threshold,
                 const Common& c, int workers) {
  if (episodes == 0) throw ConfigError("--episodes must be positive");
  const auto scenarios = resolve_scenarios(scenarios_text);
  const Dataset data = generate_dataset(scenarios, episodes, c.seed, workers);
  const auto gate = expert_gate(data);
  std::ofstream gf(fs::path(c.out) / "expert_gate.txt", std::ios::trunc);
  for (const auto& g : gate) {
    char line[128];
    std::snprintf(line, sizeof(line), "%-20s episodes %6zu  expert win rate %.4f%s\n",
                  g.scenario.c_str(), g.episodes, g.win_rate, g.win_rate >= threshold ? "" : "  FAIL");
    std::fputs(line, stdout);
    gf << line;
  }
  if (!gate_passed(gate, threshold)) {
    char msg[96];
    std::snprintf(msg, sizeof(msg), "expert gate failed (threshold %.2f); no dataset written", threshold);
    throw GateFailure(msg);
  }
  const fs::path path = fs::path(c.out) / "dataset.bin";
  write_dataset(path.string(), data);
  std::printf("wrote %zu episodes (%zu steps) to %s\n", data.episodes.size(), data.total_steps(),
              path.c_str());
  return 0;
}

int run_train(const std::string& data_path, const std::string& model_kind, const TrainFlags& tf,
              std::size_t eval_every, const EvalFlags& ef, std::size_t checkpoint_every,
              std::size_t log_every, const std::string& resume, const Common& c, int workers) {
  const Dataset data = read_dataset(data_path);
  TrainConfig cfg = make_train_config(tf, c.seed);
  cfg.out_dir = c.out;
  cfg.resume = resume;
  cfg.eval_every = eval_every;
  cfg.checkpoint_every = checkpoint_every;
  cfg.log_every = log_every;
  cfg.validate();
  const EvalOptions eo = make_eval_options(ef, c.seed, workers);

  auto report = [](const TrainResult& r) {
    for (const auto& h : r.history)
      std::printf("step %6zu  loss %.5f  accuracy %.4f\n", h.step, h.loss, h.accuracy);
    if (r.best_score)
      std::printf("best strict win rate %.4f at step %zu\n", *r.best_score, r.best_step);
  };

  if (model_kind == "madt") {
    cfg.model.max_units = default_max_units();
    MadtModel model(cfg.model, cfg.seed);
    MadtLearner learner(model);
    EvalHook hook;
    if (eval_every)
      hook = [&](std::size_t) {
        EvalOptions o = eo;
        o.context = cfg.model.context;
        const double w = mean_win_rate(evaluate(MadtController(model), data.scenarios, o));
        return EvalResult{w, {{"eval_win_rate", w}}};
      };
    report(train(learner, data, cfg, hook));
  } else if (model_kind == "maskma") {
    MaskMAModel model(cfg.model, cfg.seed);
    MaskMALearner learner(model);
    EvalHook hook;
    if (eval_every)
      hook = [&](std::size_t) {
        EvalOptions o = eo;
        o.context = cfg.model.context;
        const double strict =
            mean_win_rate(evaluate(MaskMAController(model, ExecMode::kStrict), data.scenarios, o));
        const double central =
            mean_win_rate(evaluate(MaskMAController(model, ExecMode::kCentral), data.scenarios, o));
        return EvalResult{strict, {{"eval_strict", strict}, {"eval_central", central}}};
      };
    report(train(learner, data, cfg, hook));
  } else {
    throw ConfigError("--model must be maskma or madt, got '" + model_kind + "'");
  }
  return 0;
}

int run_eval(const std::string& checkpoint, const std::string& scenarios_text,
             const std::string& mode_text, const EvalFlags& ef, const Common& c, int workers) {
  const ExecMode mode = parse_exec_mode(mode_text);
  const Policy policy = load_policy(checkpoint, mode);
  EvalOptions o = make_eval_options(ef, c.seed, workers);
  o.context = policy.context;
  const auto reports = evaluate(*policy.controller, resolve_scenarios(scenarios_text), o);
  write_reports(c.out, "eval", reports);
  std::fputs(summary_table(reports).c_str(), stdout);
  return 0;
}

int run_ablate(const std::string& data_path, const std::string& which, const std::string& held_out,
               const TrainFlags& tf, const EvalFlags& ef, const Common& c, int workers) {
  const Dataset data = read_dataset(data_path);
  const TrainConfig cfg = make_train_config(tf, c.seed);
  const EvalOptions eo = make_eval_options(ef, c.seed, workers);
  Table table;
  if (which == "mask_ratio")
    table = ablate_mask_ratio(data, cfg, eo);
  else if (which == "timestep")
    table = ablate_timestep(data, cfg, eo);
  else if (which == "map_count")
    table = ablate_map_count(data, cfg, eo, resolve_scenarios(held_out));
  else
    throw ConfigError("--which must be mask_ratio, timestep or map_count, got '" + which + "'");
  write_table(c.out, "ablate_" + which, table);
  std::fputs(table.text().c_str(), stdout);
  return 0;
}

int run_downstream(const std::string& checkpoint, const std::string& task,
                   const std::string& mode_text, std::string scenario, const EvalFlags& ef,
                   const Common& c, int workers) {
  const Policy policy = load_policy(checkpoint, parse_exec_mode(mode_text));
  EvalOptions o = make_eval_options(ef, c.seed, workers);
  o.context = policy.context;

  std::vector<EvalReport> reports;
  std::vector<double> xs;
  std::string axis;
  if (task == "collab") {
    if (scenario.empty()) scenario = "5f1h_v_7f";
    xs = {0.0, 0.25, 0.5, 0.75, 1.0};
    axis = "rho";
    reports = run_varied_policies(*policy.controller, resolve_scenarios(scenario).at(0), xs, o);
  } else if (task == "malfunction") {
    if (scenario.empty()) scenario = "6f_v_6f";
    xs = {0.2, 0.4, 0.6, 0.8};
    axis = "f";
    reports = run_ally_malfunction(*policy.controller, resolve_scenarios(scenario).at(0), xs, o);
  } else if (task == "adhoc") {
    if (scenario.empty()) scenario = "adhoc";
    xs = {0.2, 0.4, 0.6, 0.8};
    axis = "f";
    reports = run_adhoc_teamplay(*policy.controller, resolve_scenarios(scenario).at(0), xs, o);
  } else {
    throw ConfigError("--task must be collab, malfunction or adhoc, got '" + task + "'");
  }
  write_reports(c.out, task, reports);

  // Protocols with a "none" reference report it on its own line.
  std::vector<std::vector<double>> rows;
  const std::size_t offset = reports.size() - xs.size();
  if (offset == 1)
    rows.push_back({-1.0, reports[0].win_rate, reports[0].stddev});
  for (std::size_t k = 0; k < xs.size(); ++k)
    rows.push_back({xs[k], reports[offset + k].win_rate, reports[offset + k].stddev});
  write_series((fs::path(c.out) / (task + ".dat")).string(), {axis, "win_rate", "std"}, rows);
  std::fputs(summary_table(reports).c_str(), stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Masked multi-agent pretraining on the ArenaLite grid battles"};
  app.set_config("--config", "", "TOML or INI file with option values (flags override)");
  app.require_subcommand(1);
  app.set_version_flag("--version", MASKMA_VERSION);

  Common common;

  auto* scn = app.add_subcommand("scenarios", "Write scenario files for a suite");
  std::string suite = "all";
  scn->add_option("--scenarios", suite, "train | test | adhoc | all | names | files")
      ->capture_default_str();
  add_common(scn, common, "scenarios");

  auto* gen = app.add_subcommand("gen-data", "Record expert episodes into a dataset");
  std::string gen_scenarios = "train";
  std::size_t gen_episodes = 2000;
  double threshold = 0.9;
  gen->add_option("--scenarios", gen_scenarios, "Scenario selection")->capture_default_str();
  gen->add_option("--episodes", gen_episodes, "Episodes per scenario")->capture_default_str();
  gen->add_option("--gate", threshold, "Minimum expert win rate per scenario")
      ->capture_default_str();
  add_common(gen, common, "runs/data");

  auto* tr = app.add_subcommand("train", "Train a policy on a dataset");
  std::string data_path, model_kind = "maskma", resume;
  TrainFlags train_flags;
  EvalFlags train_eval{8, 1};
  std::size_t eval_every = 0, checkpoint_every = 0, log_every = 50;
  tr->add_option("--data", data_path, "Dataset file")->required();
  tr->add_option("--model", model_kind, "maskma | madt")->capture_default_str();
  add_train_flags(tr, train_flags);
  tr->add_option("--eval-every", eval_every, "Steps between evaluations (0 = never)")
      ->capture_default_str();
  tr->add_option("--eval-episodes", train_eval.episodes, "Episodes per periodic evaluation")
      ->capture_default_str();
  tr->add_option("--checkpoint-every", checkpoint_every, "Steps between checkpoints (0 = end only)")
      ->capture_default_str();
  tr->add_option("--log-every", log_every, "Steps between metric records")->capture_default_str();
  tr->add_option("--resume", resume, "Checkpoint to continue from");
  add_common(tr, common, "runs/train");

  auto* ev = app.add_subcommand("eval", "Win rates of a checkpoint (or 'expert')");
  std::string checkpoint, eval_scenarios = "test", mode = "strict";
  EvalFlags eval_flags;
  ev->add_option("--checkpoint", checkpoint, "Checkpoint file, 'expert' or 'expert-nokite'")
      ->required();
  ev->add_option("--scenarios", eval_scenarios, "Scenario selection")->capture_default_str();
  ev->add_option("--mode", mode, "central | strict | fast")->capture_default_str();
  add_eval_flags(ev, eval_flags);
  add_common(ev, common, "runs/eval");

  auto* ab = app.add_subcommand("ablate", "Mask ratio, timestep or map count sweep");
  std::string which, held_out = "test";
  TrainFlags ablate_train;
  EvalFlags ablate_eval;
  ab->add_option("--data", data_path, "Dataset file")->required();
  ab->add_option("--which", which, "mask_ratio | timestep | map_count")->required();
  ab->add_option("--held-out", held_out, "Zero-shot scenarios for map_count")->capture_default_str();
  add_train_flags(ab, ablate_train);
  add_eval_flags(ab, ablate_eval);
  add_common(ab, common, "runs/ablate");

  auto* ds = app.add_subcommand("downstream", "Collaboration, malfunction or ad hoc protocol");
  std::string task, ds_scenario, ds_mode = "strict";
  EvalFlags ds_eval;
  ds->add_option("--checkpoint", checkpoint, "Checkpoint file or 'expert'")->required();
  ds->add_option("--task", task, "collab | malfunction | adhoc")->required();
  ds->add_option("--mode", ds_mode, "central | strict | fast")->capture_default_str();
  ds->add_option("--scenario", ds_scenario, "Scenario (default depends on the task)");
  add_eval_flags(ds, ds_eval);
  add_common(ds, common, "runs/downstream");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    const int workers = env_workers();
    if (workers > 0) omp_set_num_threads(workers);
    const CLI::App* cmd = app.get_subcommands().front();
    write_manifest(app, *cmd, common, argc, argv);
    if (cmd == scn) return run_scenarios(suite, common);
    if (cmd == gen) return run_gen_data(gen_scenarios, gen_episodes, threshold, common, workers);
    if (cmd == tr)
      return run_train(data_path, model_kind, train_flags, eval_every, train_eval,
                       checkpoint_every, log_every, resume, common, workers);
    if (cmd == ev) return run_eval(checkpoint, eval_scenarios, mode, eval_flags, common, workers);
    if (cmd == ab)
      return run_ablate(data_path, which, held_out, ablate_train, ablate_eval, common, workers);
    if (cmd == ds) return run_downstream(checkpoint, task, ds_mode, ds_scenario, ds_eval, common, workers);
  } catch (const GateFailure& e) {
    std::fprintf(stderr, "maskma: %s\n", e.what());
    return kExitGate;
  } catch (const IoError& e) {
    std::fprintf(stderr, "maskma: %s\n", e.what());
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "maskma: %s\n", e.what());
    return kExitIo;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "maskma: %s\n", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "maskma: %s\n", e.what());
    return kExitFailure;
  }
  return kExitFailure;
}
