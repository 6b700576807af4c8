#include "maskma/experiments.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "maskma/error.hpp"

namespace maskma {

std::vector<GateEntry> expert_gate(const Dataset& data) {
  std::vector<GateEntry> gate(data.scenarios.size());
  std::vector<std::size_t> wins(gate.size(), 0);
  for (std::size_t s = 0; s < gate.size(); ++s) gate[s].scenario = data.scenarios[s].name;
  for (const auto& e : data.episodes) {
    if (e.scenario >= gate.size()) throw ConfigError("episode refers to a missing scenario");
    ++gate[e.scenario].episodes;
    if (e.outcome == Outcome::kWin) ++wins[e.scenario];
  }
  for (std::size_t s = 0; s < gate.size(); ++s)
    if (gate[s].episodes)
      gate[s].win_rate = static_cast<double>(wins[s]) / static_cast<double>(gate[s].episodes);
  return gate;
}

bool gate_passed(const std::vector<GateEntry>& gate, double threshold) {
  return !gate.empty() && std::all_of(gate.begin(), gate.end(), [&](const GateEntry& g) {
    return g.episodes > 0 && g.win_rate >= threshold;
  });
}

Dataset first_scenarios(const Dataset& data, std::size_t count) {
  if (count == 0 || count > data.scenarios.size())
    throw ConfigError("cannot keep " + std::to_string(count) + " of " +
                      std::to_string(data.scenarios.size()) + " scenarios");
  Dataset out;
  out.scenarios.assign(data.scenarios.begin(), data.scenarios.begin() + static_cast<std::ptrdiff_t>(count));
  for (const auto& e : data.episodes)
    if (e.scenario < count) out.episodes.push_back(e);
  return out;
}

MaskMAModel train_maskma(const Dataset& data, const TrainConfig& cfg) {
  MaskMAModel model(cfg.model, cfg.seed);
  MaskMALearner learner(model);
  train(learner, data, cfg);
  return model;
}

MadtModel train_madt(const Dataset& data, const TrainConfig& cfg, std::size_t max_units) {
  TrainConfig c = cfg;
  c.model.max_units = max_units ? max_units : default_max_units();
  MadtModel model(c.model, c.seed);
  MadtLearner learner(model);
  train(learner, data, c);
  return model;
}

double Table::at(const std::string& row, const std::string& column) const {
  const auto r = std::find(rows.begin(), rows.end(), row);
  const auto c = std::find(columns.begin(), columns.end(), column);
  if (r == rows.end() || c == columns.end())
    throw ConfigError("no cell (" + row + ", " + column + ") in " + title);
  return cells[static_cast<std::size_t>(r - rows.begin())][static_cast<std::size_t>(c - columns.begin())];
}

std::string Table::text() const {
  std::ostringstream out;
  char buf[64];
  out << title << "\n";
  std::snprintf(buf, sizeof(buf), "%-12s", row_header.c_str());
  out << buf;
  for (const auto& c : columns) {
    std::snprintf(buf, sizeof(buf), " %12s", c.c_str());
    out << buf;
  }
  out << "\n";
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::snprintf(buf, sizeof(buf), "%-12s", rows[r].c_str());
    out << buf;
    for (double v : cells[r]) {
      std::snprintf(buf, sizeof(buf), " %12.2f", 100.0 * v);
      out << buf;
    }
    out << "\n";
  }
  return out.str();
}

void write_table(const std::string& dir, const std::string& stem, const Table& table) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream txt(fs::path(dir) / (stem + ".txt"), std::ios::trunc);
  if (!txt) throw IoError("cannot write " + stem + ".txt under " + dir);
  txt << table.text();
  if (!txt) throw IoError("write failed under " + dir);

  // Column file: row position followed by every column.
  std::vector<std::string> cols{"row"};
  cols.insert(cols.end(), table.columns.begin(), table.columns.end());
  std::vector<std::vector<double>> series;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    std::vector<double> line{static_cast<double>(r)};
    line.insert(line.end(), table.cells[r].begin(), table.cells[r].end());
    series.push_back(std::move(line));
  }
  write_series((fs::path(dir) / (stem + ".dat")).string(), cols, series);
}

namespace {

double scenario_mean(const Controller& ctrl, const std::vector<ScenarioConfig>& scenarios,
                     const EvalOptions& opts) {
  const auto reports = evaluate(ctrl, scenarios, opts);
  return mean_win_rate(reports);
}

std::vector<double> central_and_strict(const MaskMAModel& model,
                                       const std::vector<ScenarioConfig>& scenarios,
                                       const EvalOptions& opts) {
  EvalOptions o = opts;
  o.context = model.config().context;
  return {scenario_mean(MaskMAController(model, ExecMode::kCentral), scenarios, o),
          scenario_mean(MaskMAController(model, ExecMode::kStrict), scenarios, o)};
}

}  // namespace

Table ablate_mask_ratio(const Dataset& data, const TrainConfig& cfg, const EvalOptions& opts) {
  Table t;
  t.title = "mask ratio ablation (win rate %, training scenarios)";
  t.row_header = "mask";
  t.columns = {"central", "strict"};
  for (const char* spec : {"none", "fixed:0.2", "fixed:0.5", "fixed:0.8", "local", "random"}) {
    TrainConfig c = cfg;
    c.mask = MaskSpec::parse(spec);
    c.out_dir.clear();
    c.resume.clear();
    const MaskMAModel model = train_maskma(data, c);
    t.rows.push_back(spec);
    t.cells.push_back(central_and_strict(model, data.scenarios, opts));
  }
  return t;
}

Table ablate_timestep(const Dataset& data, const TrainConfig& cfg, const EvalOptions& opts,
                      const std::vector<std::size_t>& contexts) {
  Table t;
  t.title = "timestep ablation (win rate %, training scenarios)";
  t.row_header = "L";
  t.columns = {"central", "strict"};
  for (std::size_t L : contexts) {
    TrainConfig c = cfg;
    c.model.context = L;
    c.out_dir.clear();
    c.resume.clear();
    const MaskMAModel model = train_maskma(data, c);
    t.rows.push_back(std::to_string(L));
    t.cells.push_back(central_and_strict(model, data.scenarios, opts));
  }
  return t;
}

Table ablate_map_count(const Dataset& data, const TrainConfig& cfg, const EvalOptions& opts,
                       const std::vector<ScenarioConfig>& held_out,
                       const std::vector<std::size_t>& counts) {
  Table t;
  t.title = "training map count ablation (zero-shot win rate %, held-out scenarios)";
  t.row_header = "maps";
  t.columns = {"central", "strict"};
  for (std::size_t k : counts) {
    TrainConfig c = cfg;
    c.out_dir.clear();
    c.resume.clear();
    const MaskMAModel model = train_maskma(first_scenarios(data, k), c);
    t.rows.push_back(std::to_string(k));
    t.cells.push_back(central_and_strict(model, held_out, opts));
  }
  return t;
}

}  // namespace maskma
