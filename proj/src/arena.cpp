#include "maskma/arena.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>

#include "maskma/error.hpp"

namespace maskma {

const char* type_name(UnitType t) {
  switch (t) {
    case UnitType::kFighter: return "fighter";
    case UnitType::kHealer: return "healer";
    case UnitType::kTank: return "tank";
    case UnitType::kReserved: return "reserved";
  }
  return "?";
}

UnitType parse_type(const std::string& name) {
  for (std::size_t t = 0; t < kUnitTypes; ++t)
    if (name == type_name(static_cast<UnitType>(t))) return static_cast<UnitType>(t);
  throw ConfigError("unknown unit type '" + name + "'");
}

StatTable default_stats() {
  StatTable s;
  s[static_cast<std::size_t>(UnitType::kFighter)] = {10, 3, 0, 2, 6, 1};
  s[static_cast<std::size_t>(UnitType::kHealer)] = {8, 0, 3, 3, 6, 0};
  s[static_cast<std::size_t>(UnitType::kTank)] = {20, 2, 0, 1, 6, 1};
  s[static_cast<std::size_t>(UnitType::kReserved)] = {10, 0, 0, 1, 6, 0};
  return s;
}

int chebyshev(Cell a, Cell b) { return std::max(std::abs(a.x - b.x), std::abs(a.y - b.y)); }

Cell move_target(Cell from, std::size_t direction) {
  switch (direction) {
    case action::kNorth: return {from.x, from.y - 1};
    case action::kEast: return {from.x + 1, from.y};
    case action::kSouth: return {from.x, from.y + 1};
    case action::kWest: return {from.x - 1, from.y};
    default: return from;
  }
}

void ScenarioConfig::validate() const {
  if (width <= 0 || height <= 0) throw ConfigError(name + ": grid must be positive");
  if (allies.empty() || enemies.empty())
    throw ConfigError(name + ": each team needs at least one unit");
  if (max_steps <= 0) throw ConfigError(name + ": max_steps must be positive");
  if (jitter < 0) throw ConfigError(name + ": jitter must be non-negative");
  for (const auto& s : stats)
    if (s.max_hp <= 0 || s.damage < 0 || s.heal < 0 || s.attack_range < 0 ||
        s.sight_range < 0 || s.cooldown < 0)
      throw ConfigError(name + ": unit stats out of range");
  std::vector<Cell> seen;
  for (const auto* team : {&allies, &enemies})
    for (const auto& u : *team) {
      if (u.cell.x < 0 || u.cell.y < 0 || u.cell.x >= width || u.cell.y >= height)
        throw ConfigError(name + ": spawn (" + std::to_string(u.cell.x) + "," +
                          std::to_string(u.cell.y) + ") out of bounds");
      if (std::find(seen.begin(), seen.end(), u.cell) != seen.end())
        throw ConfigError(name + ": duplicate spawn (" + std::to_string(u.cell.x) + "," +
                          std::to_string(u.cell.y) + ")");
      seen.push_back(u.cell);
    }
}

// ---------------------------------------------------------------------------
// Scenario files

std::string write_scenario(const ScenarioConfig& cfg) {
  std::ostringstream os;
  os << "# ArenaLite scenario\n";
  os << "schema 1\n";
  os << "name " << cfg.name << "\n";
  os << "grid " << cfg.width << " " << cfg.height << "\n";
  os << "max_steps " << cfg.max_steps << "\n";
  os << "seed " << cfg.seed << "\n";
  os << "jitter " << cfg.jitter << "\n";
  os << "# stats <type> max_hp damage heal attack_range sight_range cooldown\n";
  for (std::size_t t = 0; t < kUnitTypes; ++t) {
    const auto& s = cfg.stats[t];
    os << "stats " << type_name(static_cast<UnitType>(t)) << " " << s.max_hp << " " << s.damage
       << " " << s.heal << " " << s.attack_range << " " << s.sight_range << " " << s.cooldown
       << "\n";
  }
  for (const auto& u : cfg.allies)
    os << "ally " << type_name(u.type) << " " << u.cell.x << " " << u.cell.y << "\n";
  for (const auto& u : cfg.enemies)
    os << "enemy " << type_name(u.type) << " " << u.cell.x << " " << u.cell.y << "\n";
  return os.str();
}

ScenarioConfig parse_scenario(const std::string& text) {
  ScenarioConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  bool have_schema = false;
  auto fail = [&](const std::string& what) {
    throw ConfigError("scenario line " + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    if (key == "schema") {
      int v = 0;
      if (!(ls >> v)) fail("schema needs a number");
      if (v != 1) throw VersionError("unsupported scenario schema " + std::to_string(v));
      have_schema = true;
    } else if (key == "name") {
      if (!(ls >> cfg.name)) fail("name needs a value");
    } else if (key == "grid") {
      if (!(ls >> cfg.width >> cfg.height)) fail("grid needs width and height");
    } else if (key == "max_steps") {
      if (!(ls >> cfg.max_steps)) fail("max_steps needs a number");
    } else if (key == "seed") {
      if (!(ls >> cfg.seed)) fail("seed needs a number");
    } else if (key == "jitter") {
      if (!(ls >> cfg.jitter)) fail("jitter needs a number");
    } else if (key == "stats") {
      std::string type;
      UnitStats s;
      if (!(ls >> type >> s.max_hp >> s.damage >> s.heal >> s.attack_range >> s.sight_range >>
            s.cooldown))
        fail("stats needs a type and six numbers");
      cfg.stats[static_cast<std::size_t>(parse_type(type))] = s;
    } else if (key == "ally" || key == "enemy") {
      std::string type;
      UnitSpawn u;
      if (!(ls >> type >> u.cell.x >> u.cell.y)) fail(key + " needs a type and a cell");
      u.type = parse_type(type);
      (key == "ally" ? cfg.allies : cfg.enemies).push_back(u);
    } else {
      fail("unknown key '" + key + "'");
    }
    std::string extra;
    if (ls >> extra) fail("trailing value '" + extra + "'");
  }
  if (!have_schema) throw VersionError("scenario has no schema line");
  cfg.validate();
  return cfg;
}

ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open scenario " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_scenario(ss.str());
}

// ---------------------------------------------------------------------------
// World

bool WorldState::occupied(Cell c) const {
  return std::any_of(units.begin(), units.end(),
                     [&](const Unit& u) { return u.alive && u.cell == c; });
}

std::vector<std::size_t> WorldState::controllable_units() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < units.size(); ++i)
    if (controllable(i)) out.push_back(i);
  return out;
}

const char* outcome_name(Outcome o) {
  switch (o) {
    case Outcome::kOngoing: return "ongoing";
    case Outcome::kWin: return "win";
    case Outcome::kLoss: return "loss";
    case Outcome::kDraw: return "draw";
  }
  return "?";
}

namespace {

// Free cell nearest to `target` by Chebyshev rings, scanning each ring in
// row-major order.
std::optional<Cell> nearest_free(const WorldState& w, Cell target) {
  const int max_r = std::max(w.width, w.height);
  for (int r = 0; r <= max_r; ++r)
    for (int y = target.y - r; y <= target.y + r; ++y)
      for (int x = target.x - r; x <= target.x + r; ++x) {
        const Cell c{x, y};
        if (chebyshev(c, target) != r || !w.in_bounds(c) || w.occupied(c)) continue;
        return c;
      }
  return std::nullopt;
}

}  // namespace

WorldState reset(const ScenarioConfig& cfg) {
  cfg.validate();
  WorldState w;
  w.width = cfg.width;
  w.height = cfg.height;
  w.max_steps = cfg.max_steps;
  w.seed = cfg.seed;
  w.stats = cfg.stats;
  Rng rng(cfg.seed);
  std::uniform_int_distribution<int> offset(-cfg.jitter, cfg.jitter);
  auto place = [&](const UnitSpawn& s, Team team) {
    Unit u;
    u.type = s.type;
    u.team = team;
    u.hp = cfg.stats[static_cast<std::size_t>(s.type)].max_hp;
    const Cell jittered{s.cell.x + offset(rng), s.cell.y + offset(rng)};
    if (w.in_bounds(jittered) && !w.occupied(jittered)) {
      u.cell = jittered;
    } else {
      // validate() guarantees a free grid cell exists for every unit.
      u.cell = *nearest_free(w, s.cell);
    }
    w.units.push_back(u);
  };
  for (const auto& s : cfg.allies) place(s, Team::kAlly);
  for (const auto& s : cfg.enemies) place(s, Team::kEnemy);
  return w;
}

std::vector<std::uint8_t> available_actions(const WorldState& w, std::size_t i) {
  const std::size_t n = w.size();
  std::vector<std::uint8_t> avail(action::kIntrinsic + n, 0);
  const Unit& u = w.units.at(i);
  if (!u.alive) {
    avail[action::kNoOp] = 1;
    return avail;
  }
  avail[action::kStop] = 1;
  for (std::size_t d = action::kNorth; d <= action::kWest; ++d) {
    const Cell c = move_target(u.cell, d);
    avail[d] = w.in_bounds(c) && !w.occupied(c);
  }
  const UnitStats& s = w.stats_of(i);
  if (u.cooldown > 0) return avail;
  for (std::size_t j = 0; j < n; ++j) {
    const Unit& v = w.units[j];
    if (j == i || !v.alive) continue;
    const int dist = chebyshev(u.cell, v.cell);
    if (dist > s.sight_range || dist > s.attack_range) continue;
    if (v.team != u.team) avail[action::kIntrinsic + j] = s.damage > 0;
    else avail[action::kIntrinsic + j] = s.heal > 0;
  }
  return avail;
}

StepEvents step(WorldState& w, std::span<const ActionId> joint) {
  const std::size_t n = w.size();
  if (joint.size() != n)
    throw ConfigError("joint action has " + std::to_string(joint.size()) + " entries for " +
                      std::to_string(n) + " units");
  for (std::size_t i = 0; i < n; ++i) {
    const auto avail = available_actions(w, i);
    if (joint[i].index >= avail.size() || !avail[joint[i].index])
      throw ConfigError("action " + std::to_string(joint[i].index) + " is not available to unit " +
                        std::to_string(i) + " at step " + std::to_string(w.step));
  }
  const WorldState before = w;
  StepEvents ev;
  ev.damage_taken.assign(n, 0);
  ev.healed.assign(n, 0);

  std::vector<std::size_t> taken(n);
  for (std::size_t i = 0; i < n; ++i) taken[i] = joint[i].index;

  // (1) movement in index order; blocked moves become stops.
  for (std::size_t i = 0; i < n; ++i) {
    if (taken[i] < action::kNorth || taken[i] > action::kWest) continue;
    const Cell c = move_target(w.units[i].cell, taken[i]);
    if (w.occupied(c)) taken[i] = action::kStop;
    else w.units[i].cell = c;
  }

  // (2) attacks and heals against the pre-step snapshot, applied together.
  std::vector<bool> acted(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    if (taken[i] < action::kIntrinsic) continue;
    const std::size_t j = taken[i] - action::kIntrinsic;
    const UnitStats& s = before.stats_of(i);
    if (before.units[j].team != before.units[i].team) ev.damage_taken[j] += s.damage;
    else ev.healed[j] += s.heal;
    acted[i] = true;
  }
  for (std::size_t i = 0; i < n; ++i) {
    Unit& u = w.units[i];
    if (!u.alive) continue;
    if (acted[i]) u.cooldown = w.stats_of(i).cooldown;
    else u.cooldown = std::max(0, u.cooldown - 1);
  }

  // (3) hp update and deaths.
  for (std::size_t i = 0; i < n; ++i) {
    Unit& u = w.units[i];
    if (!u.alive) continue;
    const int hp = std::clamp(u.hp - ev.damage_taken[i] + ev.healed[i], 0, w.stats_of(i).max_hp);
    if (u.team == Team::kEnemy) ev.enemy_hp_lost += std::max(0, u.hp - hp);
    u.hp = hp;
    u.last_action = static_cast<int>(taken[i]);
    if (hp == 0) {
      u.alive = false;
      u.cooldown = 0;
      (u.team == Team::kAlly ? ev.ally_deaths : ev.enemy_deaths) += 1;
    }
  }

  // (4)
  ++w.step;
  return ev;
}

Visibility visibility(const WorldState& w) {
  const std::size_t n = w.size();
  Visibility v(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    v.set(i, i, true);
    if (!w.units[i].alive) continue;
    const int sight = w.stats_of(i).sight_range;
    for (std::size_t j = 0; j < n; ++j)
      if (w.units[j].alive && chebyshev(w.units[i].cell, w.units[j].cell) <= sight)
        v.set(i, j, true);
  }
  return v;
}

Outcome terminal(const WorldState& w) {
  bool allies = false, enemies = false;
  for (const Unit& u : w.units) {
    if (!u.alive) continue;
    (u.team == Team::kAlly ? allies : enemies) = true;
  }
  if (!allies) return Outcome::kLoss;
  if (!enemies) return Outcome::kWin;
  if (w.step >= w.max_steps) return Outcome::kDraw;
  return Outcome::kOngoing;
}

// ---------------------------------------------------------------------------
// Scripted policies

namespace {

bool sees(const WorldState& w, std::size_t i, std::size_t j) {
  return w.units[j].alive && chebyshev(w.units[i].cell, w.units[j].cell) <= w.stats_of(i).sight_range;
}

std::vector<std::size_t> visible_opponents(const WorldState& w, std::size_t i) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < w.size(); ++j)
    if (j != i && w.units[j].team != w.units[i].team && sees(w, i, j)) out.push_back(j);
  return out;
}

int distance_to_nearest(const WorldState& w, Cell from, const std::vector<std::size_t>& targets) {
  int best = std::numeric_limits<int>::max();
  for (std::size_t j : targets) best = std::min(best, chebyshev(from, w.units[j].cell));
  return best;
}

// Lowest hp among available interactive targets passing `filter`; ties go to
// the lowest index.
template <class Filter>
std::optional<std::size_t> lowest_hp_target(const WorldState& w,
                                            const std::vector<std::uint8_t>& avail, Filter filter) {
  std::optional<std::size_t> best;
  for (std::size_t j = 0; j < w.size(); ++j) {
    if (!avail[action::kIntrinsic + j] || !filter(j)) continue;
    if (!best || w.units[j].hp < w.units[*best].hp) best = j;
  }
  return best;
}

// Available move optimizing the distance to the nearest target; ties follow
// N, E, S, W order. `farther` selects maximization.
std::optional<std::size_t> best_move(const WorldState& w, std::size_t i,
                                     const std::vector<std::uint8_t>& avail,
                                     const std::vector<std::size_t>& targets, bool farther) {
  std::optional<std::size_t> best;
  int best_dist = 0;
  for (std::size_t d = action::kNorth; d <= action::kWest; ++d) {
    if (!avail[d]) continue;
    const int dist = distance_to_nearest(w, move_target(w.units[i].cell, d), targets);
    if (!best || (farther ? dist > best_dist : dist < best_dist)) {
      best = d;
      best_dist = dist;
    }
  }
  return best;
}

}  // namespace

ActionId expert_policy(const WorldState& w, std::size_t i, ExpertOptions opts) {
  const Unit& u = w.units.at(i);
  const auto avail = available_actions(w, i);
  if (!u.alive) return {action::kNoOp};
  const UnitStats& s = w.stats_of(i);
  // (1) heal the most wounded visible ally in range.
  if (s.heal > 0) {
    auto t = lowest_hp_target(w, avail, [&](std::size_t j) {
      const Unit& v = w.units[j];
      return v.team == u.team && v.hp < w.stats_of(j).max_hp;
    });
    if (t) return {action::kIntrinsic + *t};
  }
  // (2) focus the weakest enemy in range.
  auto t = lowest_hp_target(w, avail, [&](std::size_t j) { return w.units[j].team != u.team; });
  if (t) return {action::kIntrinsic + *t};
  const auto enemies = visible_opponents(w, i);
  // (3) kite while reloading.
  if (opts.kiting && u.cooldown > 0 && !enemies.empty() &&
      distance_to_nearest(w, u.cell, enemies) <= s.attack_range) {
    if (auto m = best_move(w, i, avail, enemies, true)) return {*m};
    return {action::kStop};
  }
  // (4) close in on the nearest visible enemy.
  if (!enemies.empty()) {
    if (auto m = best_move(w, i, avail, enemies, false)) return {*m};
  }
  // (5)
  return {action::kStop};
}

ActionId enemy_policy(const WorldState& w, std::size_t i) {
  const Unit& u = w.units.at(i);
  if (!u.alive) return {action::kNoOp};
  const auto avail = available_actions(w, i);
  const auto targets = visible_opponents(w, i);
  if (targets.empty()) return {action::kStop};
  const int nearest = distance_to_nearest(w, u.cell, targets);
  // Nearest opponent in range, lowest index on ties.
  for (std::size_t j : targets)
    if (chebyshev(u.cell, w.units[j].cell) == nearest && avail[action::kIntrinsic + j])
      return {action::kIntrinsic + j};
  if (nearest > 1)
    if (auto m = best_move(w, i, avail, targets, false)) return {*m};
  return {action::kStop};
}

void insert_unit(WorldState& w, UnitSpawn spawn, Team team) {
  if (!w.in_bounds(spawn.cell))
    throw ConfigError("insert_unit: cell (" + std::to_string(spawn.cell.x) + "," +
                      std::to_string(spawn.cell.y) + ") out of bounds");
  if (w.occupied(spawn.cell))
    throw ConfigError("insert_unit: cell (" + std::to_string(spawn.cell.x) + "," +
                      std::to_string(spawn.cell.y) + ") is occupied");
  Unit u;
  u.type = spawn.type;
  u.team = team;
  u.cell = spawn.cell;
  u.hp = w.stats[static_cast<std::size_t>(spawn.type)].max_hp;
  w.units.push_back(u);
}

bool nearest_free_cell_to_allies(const WorldState& w, Cell& out) {
  int sx = 0, sy = 0, count = 0;
  for (const Unit& u : w.units)
    if (u.alive && u.team == Team::kAlly) {
      sx += u.cell.x;
      sy += u.cell.y;
      ++count;
    }
  if (count == 0) return false;
  const Cell centroid{(sx + count / 2) / count, (sy + count / 2) / count};
  auto c = nearest_free(w, centroid);
  if (!c) return false;
  out = *c;
  return true;
}

// ---------------------------------------------------------------------------
// Features

void unit_features(const WorldState& w, std::size_t i, std::span<double> out) {
  if (out.size() != kStateWidth) throw DimensionError("unit_features needs 17 slots");
  std::fill(out.begin(), out.end(), 0.0);
  const Unit& u = w.units.at(i);
  out[0] = u.team == Team::kAlly ? 1.0 : 0.0;
  out[2 + static_cast<std::size_t>(u.type)] = 1.0;
  if (!u.alive) return;
  const UnitStats& s = w.stats_of(i);
  out[1] = 1.0;
  out[6] = w.width > 1 ? static_cast<double>(u.cell.x) / (w.width - 1) : 0.0;
  out[7] = w.height > 1 ? static_cast<double>(u.cell.y) / (w.height - 1) : 0.0;
  out[8] = static_cast<double>(u.hp) / s.max_hp;
  out[9] = s.cooldown > 0 ? static_cast<double>(u.cooldown) / s.cooldown : 0.0;
  if (u.last_action >= 0) {
    if (static_cast<std::size_t>(u.last_action) < action::kIntrinsic) out[10 + u.last_action] = 1.0;
    else out[16] = 1.0;
  }
}

Tensor global_state(const WorldState& w) {
  Tensor s({w.size(), kStateWidth});
  for (std::size_t i = 0; i < w.size(); ++i) unit_features(w, i, s.row(i));
  return s;
}

// ---------------------------------------------------------------------------
// Scenario suite

ScenarioConfig make_scenario(const std::string& name, const std::vector<UnitType>& allies,
                             const std::vector<UnitType>& enemies) {
  ScenarioConfig cfg;
  cfg.name = name;
  const int mid = cfg.height / 2;
  // k-th slot of a column fanning out from the middle row: 0, -g, +g, -2g, ...
  auto fan = [](int k, int gap) { return (k % 2 ? -1 : 1) * ((k + 1) / 2) * gap; };
  int front = 0, rear = 0;
  for (UnitType t : allies) {
    if (t == UnitType::kHealer) {
      cfg.allies.push_back({t, {2, mid + fan(rear++, 1)}});
    } else {
      cfg.allies.push_back({t, {front % 2 ? 3 : 4, mid + fan(front, 1)}});
      ++front;
    }
  }
  // Enemies hold a looser line two cells apart, wrapping onto odd rows.
  std::vector<int> rows;
  for (int k = 0;; ++k) {
    const int y = mid + fan(k, 2);
    if (y < 1 || y > cfg.height - 2) break;
    rows.push_back(y);
  }
  for (std::size_t k = 0; k < enemies.size(); ++k) {
    const int wrap = static_cast<int>(k / rows.size());
    cfg.enemies.push_back({enemies[k], {10 + wrap / 2, rows[k % rows.size()] + wrap % 2}});
  }
  cfg.validate();
  return cfg;
}

namespace {

std::vector<UnitType> parse_team(const std::string& text, const std::string& full) {
  std::vector<UnitType> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t digits = pos;
    while (digits < text.size() && std::isdigit(static_cast<unsigned char>(text[digits]))) ++digits;
    if (digits == pos || digits == text.size())
      throw ConfigError("cannot parse scenario name '" + full + "'");
    const int count = std::stoi(text.substr(pos, digits - pos));
    UnitType t;
    switch (text[digits]) {
      case 'f': t = UnitType::kFighter; break;
      case 'h': t = UnitType::kHealer; break;
      case 't': t = UnitType::kTank; break;
      default: throw ConfigError("unknown unit letter in scenario name '" + full + "'");
    }
    out.insert(out.end(), static_cast<std::size_t>(count), t);
    pos = digits + 1;
  }
  return out;
}

ScenarioConfig from_composition(const std::string& name) {
  const auto sep = name.find("_v_");
  if (sep == std::string::npos) throw ConfigError("unknown scenario '" + name + "'");
  return make_scenario(name, parse_team(name.substr(0, sep), name),
                       parse_team(name.substr(sep + 3), name));
}

}  // namespace

ScenarioConfig scenario_by_name(const std::string& name) {
  for (const auto& suite : {training_scenarios(), test_scenarios()})
    for (const auto& cfg : suite)
      if (cfg.name == name) return cfg;
  if (name == adhoc_scenario().name) return adhoc_scenario();
  return from_composition(name);
}

std::vector<ScenarioConfig> training_scenarios() {
  const char* names[] = {"4f_v_3f",   "3f1h_v_3f", "2f1t_v_2f",   "5f_v_4f",
                         "4f1t_v_4f", "5f1h_v_5f", "2f1h1t_v_3f", "2f3t_v_3f1t"};
  std::vector<ScenarioConfig> out;
  for (const char* n : names) out.push_back(from_composition(n));
  return out;
}

std::vector<ScenarioConfig> test_scenarios() {
  const char* names[] = {
      "3f_v_2f",     "6f_v_5f",       "7f_v_6f",      "8f_v_7f",         "9f_v_8f",
      "4f1h_v_4f",   "6f1h_v_6f",     "4f2h_v_5f",    "3f2h_v_4f",       "5f1t_v_5f",
      "3f1t_v_3f",   "4f1t_v_3f1t",   "3f2t_v_3f1t",  "4f1h_v_3f1t",     "6f1h1t_v_7f",
      "8f1h_v_8f1t", "7f2h_v_10f",    "6f3h_v_10f",   "5f2h2t_v_9f1t",   "3f_v_1f1t"};
  std::vector<ScenarioConfig> out;
  for (const char* n : names) out.push_back(from_composition(n));
  return out;
}

ScenarioConfig adhoc_scenario() {
  ScenarioConfig cfg = from_composition("4f_v_4f1t");
  cfg.name = "adhoc_4f_v_4f1t";
  cfg.max_steps = 30;
  return cfg;
}

}  // namespace maskma
