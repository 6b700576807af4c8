#pragma once

// Training sweeps shared by the command line tool and the acceptance suite:
// the expert gate, the three ablations and the model/baseline comparison.

#include <cstddef>
#include <string>
#include <vector>

#include "maskma/data.hpp"
#include "maskma/eval.hpp"
#include "maskma/madt.hpp"
#include "maskma/training.hpp"

namespace maskma {

struct GateEntry {
  std::string scenario;
  std::size_t episodes = 0;
  double win_rate = 0.0;
};

// Expert win rate per scenario, read from the recorded outcomes.
std::vector<GateEntry> expert_gate(const Dataset& data);
bool gate_passed(const std::vector<GateEntry>& gate, double threshold = 0.9);

// The dataset cut down to its first `count` scenarios.
Dataset first_scenarios(const Dataset& data, std::size_t count);

MaskMAModel train_maskma(const Dataset& data, const TrainConfig& cfg);
// Same optimizer and budget; the slot count defaults to default_max_units().
MadtModel train_madt(const Dataset& data, const TrainConfig& cfg, std::size_t max_units = 0);

// Labelled grid of win rates.
struct Table {
  std::string title;
  std::string row_header;
  std::vector<std::string> rows;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> cells;  // rows x columns

  double at(const std::string& row, const std::string& column) const;
  std::string text() const;
};

void write_table(const std::string& dir, const std::string& stem, const Table& table);

// Mask modes none, fixed 0.2/0.5/0.8, local and random; centralized and
// strict win rates over the dataset's scenarios.
Table ablate_mask_ratio(const Dataset& data, const TrainConfig& cfg, const EvalOptions& opts);

// Random-mask models trained at each context length; strict and centralized
// win rates over the dataset's scenarios.
Table ablate_timestep(const Dataset& data, const TrainConfig& cfg, const EvalOptions& opts,
                      const std::vector<std::size_t>& contexts = {1, 3, 5, 10});

// Models trained on the first k dataset scenarios for each k, all scored by
// strict zero-shot win rate on `held_out`.
Table ablate_map_count(const Dataset& data, const TrainConfig& cfg, const EvalOptions& opts,
                       const std::vector<ScenarioConfig>& held_out,
                       const std::vector<std::size_t>& counts = {2, 4, 6, 8});

}  // namespace maskma
