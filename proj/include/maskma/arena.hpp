#pragma once

// ArenaLite: a deterministic grid micro-battle.
//
// Units live on a width x height grid and interact through Chebyshev
// distances. Each unit has K_intr = 6 intrinsic actions (no-op, stop and four
// moves) followed by one interactive action per unit index (attack an enemy
// or heal an ally). Allies are the controllable team.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "maskma/masks.hpp"
#include "maskma/model.hpp"
#include "maskma/tensor.hpp"

namespace maskma {

enum class UnitType : std::uint8_t { kFighter = 0, kHealer = 1, kTank = 2, kReserved = 3 };
enum class Team : std::uint8_t { kAlly = 0, kEnemy = 1 };

inline constexpr std::size_t kUnitTypes = 4;
inline constexpr std::size_t kStateWidth = 17;

namespace action {
inline constexpr std::size_t kNoOp = 0;
inline constexpr std::size_t kStop = 1;
inline constexpr std::size_t kNorth = 2;
inline constexpr std::size_t kEast = 3;
inline constexpr std::size_t kSouth = 4;
inline constexpr std::size_t kWest = 5;
inline constexpr std::size_t kIntrinsic = 6;
}  // namespace action

const char* type_name(UnitType t);
UnitType parse_type(const std::string& name);

struct UnitStats {
  int max_hp = 10;
  int damage = 3;
  int heal = 0;
  int attack_range = 2;
  int sight_range = 6;
  int cooldown = 1;
  friend bool operator==(const UnitStats&, const UnitStats&) = default;
};

using StatTable = std::array<UnitStats, kUnitTypes>;
StatTable default_stats();

struct Cell {
  int x = 0;
  int y = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

int chebyshev(Cell a, Cell b);

struct UnitSpawn {
  UnitType type = UnitType::kFighter;
  Cell cell;
  friend bool operator==(const UnitSpawn&, const UnitSpawn&) = default;
};

struct ScenarioConfig {
  std::string name;
  int width = 16;
  int height = 16;
  std::vector<UnitSpawn> allies;
  std::vector<UnitSpawn> enemies;
  StatTable stats = default_stats();
  int max_steps = 60;
  std::uint64_t seed = 0;
  // Each spawn is shifted by up to `jitter` cells per axis at reset.
  int jitter = 1;

  void validate() const;
  std::size_t unit_count() const { return allies.size() + enemies.size(); }
  friend bool operator==(const ScenarioConfig&, const ScenarioConfig&) = default;
};

// Scenario text format (see docs/formats.md).
std::string write_scenario(const ScenarioConfig& cfg);
ScenarioConfig parse_scenario(const std::string& text);
ScenarioConfig load_scenario(const std::string& path);

struct Unit {
  UnitType type = UnitType::kFighter;
  Team team = Team::kAlly;
  Cell cell;
  int hp = 0;
  int cooldown = 0;
  bool alive = true;
  int last_action = -1;  // -1 before the first step

  friend bool operator==(const Unit&, const Unit&) = default;
};

struct WorldState {
  int step = 0;
  int width = 16;
  int height = 16;
  int max_steps = 60;
  std::uint64_t seed = 0;
  StatTable stats = default_stats();
  std::vector<Unit> units;

  std::size_t size() const { return units.size(); }
  const UnitStats& stats_of(std::size_t i) const {
    return stats[static_cast<std::size_t>(units[i].type)];
  }
  bool controllable(std::size_t i) const { return units[i].team == Team::kAlly; }
  bool occupied(Cell c) const;
  bool in_bounds(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < width && c.y < height; }
  std::vector<std::size_t> controllable_units() const;
};

enum class Outcome { kOngoing, kWin, kLoss, kDraw };
const char* outcome_name(Outcome o);

struct StepEvents {
  std::vector<int> damage_taken;  // per unit, before clamping
  std::vector<int> healed;        // per unit, before clamping
  int ally_deaths = 0;
  int enemy_deaths = 0;
  int enemy_hp_lost = 0;
};

Cell move_target(Cell from, std::size_t direction);

WorldState reset(const ScenarioConfig& cfg);
std::vector<std::uint8_t> available_actions(const WorldState& w, std::size_t unit);
// Applies one action per unit (dead units must no-op). Throws when an action
// is not available to its unit.
StepEvents step(WorldState& w, std::span<const ActionId> joint);
Visibility visibility(const WorldState& w);
Outcome terminal(const WorldState& w);

struct ExpertOptions {
  bool kiting = true;
};
ActionId expert_policy(const WorldState& w, std::size_t unit, ExpertOptions opts = {});
ActionId enemy_policy(const WorldState& w, std::size_t unit);

// Appends a unit at the end of the index order with full hp.
void insert_unit(WorldState& w, UnitSpawn spawn, Team team);
// Free cell closest (Chebyshev, then scan order) to the living allies'
// centroid, if any.
bool nearest_free_cell_to_allies(const WorldState& w, Cell& out);

// Per-unit feature vector (kStateWidth values) and the N x kStateWidth
// global state.
void unit_features(const WorldState& w, std::size_t unit, std::span<double> out);
Tensor global_state(const WorldState& w);

// Built-in scenario suite.
std::vector<ScenarioConfig> training_scenarios();
std::vector<ScenarioConfig> test_scenarios();
// Under-manned scenario used for ad hoc team play (one ally short).
ScenarioConfig adhoc_scenario();
// Formation helper: allies on the left, enemies on the right.
ScenarioConfig make_scenario(const std::string& name, const std::vector<UnitType>& allies,
                             const std::vector<UnitType>& enemies);
// Suite lookup by name; otherwise parses a composition such as "4f1h_v_5f"
// (counts followed by f/h/t) into a make_scenario layout.
ScenarioConfig scenario_by_name(const std::string& name);

}  // namespace maskma
