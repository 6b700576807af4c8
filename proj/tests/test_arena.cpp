#include <random>

#include "doctest.h"
#include "maskma/arena.hpp"
#include "maskma/error.hpp"

using namespace maskma;

namespace {

// A hand-built world with all units at cooldown 0 and full hp.
WorldState board(int width, int height,
                 std::initializer_list<std::tuple<Team, UnitType, Cell>> units) {
  WorldState w;
  w.width = width;
  w.height = height;
  for (auto [team, type, cell] : units) {
    Unit u;
    u.team = team;
    u.type = type;
    u.cell = cell;
    u.hp = w.stats[static_cast<std::size_t>(type)].max_hp;
    w.units.push_back(u);
  }
  return w;
}

constexpr auto A = Team::kAlly;
constexpr auto E = Team::kEnemy;
constexpr auto F = UnitType::kFighter;
constexpr auto H = UnitType::kHealer;

std::vector<ActionId> all_stop(const WorldState& w) {
  std::vector<ActionId> out;
  for (const Unit& u : w.units) out.push_back({u.alive ? action::kStop : action::kNoOp});
  return out;
}

ScenarioConfig duel() {
  ScenarioConfig cfg;
  cfg.name = "duel";
  cfg.allies = {{F, {2, 8}}};
  cfg.enemies = {{F, {12, 8}}};
  return cfg;
}

}  // namespace

TEST_CASE("reset places every unit alive at full health") {
  auto w = reset(duel());
  REQUIRE(w.size() == 2);
  CHECK(w.units[0].alive);
  CHECK(w.units[1].alive);
  CHECK(w.units[0].hp == 10);
  CHECK(w.step == 0);
  CHECK(w.controllable_units() == std::vector<std::size_t>{0});

  auto exact = duel();
  exact.jitter = 0;
  auto w0 = reset(exact);
  CHECK(w0.units[0].cell == Cell{2, 8});
  CHECK(w0.units[1].cell == Cell{12, 8});
}

TEST_CASE("reset is deterministic and jitter stays within one cell") {
  auto cfg = scenario_by_name("5f_v_4f");
  cfg.seed = 77;
  auto a = reset(cfg);
  auto b = reset(cfg);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.units[i].cell == b.units[i].cell);
  const std::vector<UnitSpawn>* teams[] = {&cfg.allies, &cfg.enemies};
  std::size_t i = 0;
  for (auto* team : teams)
    for (const auto& s : *team) CHECK(chebyshev(a.units[i++].cell, s.cell) <= 1);
}

TEST_CASE("an 8v9 configuration has 17 units with 8 controllable") {
  auto cfg = scenario_by_name("8f_v_9f");
  auto w = reset(cfg);
  CHECK(w.size() == 17);
  CHECK(w.controllable_units().size() == 8);
}

TEST_CASE("invalid scenarios are rejected") {
  auto cfg = duel();
  cfg.enemies.push_back({F, {2, 8}});
  CHECK_THROWS_AS(reset(cfg), ConfigError);
  cfg = duel();
  cfg.allies[0].cell = {16, 0};
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("out of bounds"), ConfigError);
  cfg = duel();
  cfg.enemies.clear();
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_THROWS_AS(scenario_by_name("3x_v_2f"), ConfigError);
}

TEST_CASE("availability follows bounds, occupancy, range and cooldown") {
  SUBCASE("corner unit loses two moves") {
    auto w = board(5, 5, {{A, F, {0, 0}}, {E, F, {4, 4}}});
    auto av = available_actions(w, 0);
    CHECK(av[action::kNorth] == 0);
    CHECK(av[action::kWest] == 0);
    CHECK(av[action::kEast] == 1);
    CHECK(av[action::kSouth] == 1);
    CHECK(av[action::kStop] == 1);
    CHECK(av[action::kNoOp] == 0);
    CHECK(av.size() == action::kIntrinsic + 2);
  }
  SUBCASE("dead unit can only no-op") {
    auto w = board(5, 5, {{A, F, {0, 0}}, {E, F, {1, 1}}});
    w.units[0].alive = false;
    w.units[0].hp = 0;
    auto av = available_actions(w, 0);
    CHECK(std::count(av.begin(), av.end(), 1) == 1);
    CHECK(av[action::kNoOp] == 1);
  }
  SUBCASE("attack range is a Chebyshev bound") {
    auto w = board(10, 10, {{A, F, {0, 0}}, {E, F, {0, 2}}});
    w.stats[0].sight_range = 9;
    CHECK(available_actions(w, 0)[action::kIntrinsic + 1] == 1);
    w.units[1].cell = {0, 3};
    CHECK(available_actions(w, 0)[action::kIntrinsic + 1] == 0);
  }
  SUBCASE("cooldown and visibility gate attacks") {
    auto w = board(10, 10, {{A, F, {0, 0}}, {E, F, {1, 1}}});
    w.units[0].cooldown = 1;
    CHECK(available_actions(w, 0)[action::kIntrinsic + 1] == 0);
    w.units[0].cooldown = 0;
    w.stats[0].sight_range = 0;
    CHECK(available_actions(w, 0)[action::kIntrinsic + 1] == 0);
  }
  SUBCASE("moves into occupied cells are unavailable") {
    auto w = board(5, 5, {{A, F, {2, 2}}, {A, F, {2, 1}}, {E, F, {4, 4}}});
    auto av = available_actions(w, 0);
    CHECK(av[action::kNorth] == 0);
    CHECK(av[action::kSouth] == 1);
  }
  SUBCASE("healers target living allies other than themselves") {
    auto w = board(5, 5, {{A, H, {0, 0}}, {A, F, {1, 0}}, {E, F, {2, 0}}});
    auto av = available_actions(w, 0);
    CHECK(av[action::kIntrinsic + 0] == 0);
    CHECK(av[action::kIntrinsic + 1] == 1);
    CHECK(av[action::kIntrinsic + 2] == 0);  // no damage
    auto fighter = available_actions(w, 1);
    CHECK(fighter[action::kIntrinsic + 0] == 0);  // fighters cannot heal
    CHECK(fighter[action::kIntrinsic + 2] == 1);
  }
}

TEST_CASE("step examples") {
  SUBCASE("all stop changes only cooldowns") {
    auto w = board(6, 6, {{A, F, {0, 0}}, {E, F, {5, 5}}});
    w.units[0].cooldown = 1;
    auto before = w;
    auto ev = step(w, all_stop(w));
    CHECK(w.units[0].cooldown == 0);
    CHECK(w.units[1].cooldown == 0);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(w.units[i].cell == before.units[i].cell);
      CHECK(w.units[i].hp == before.units[i].hp);
    }
    CHECK(w.step == 1);
    CHECK(ev.ally_deaths + ev.enemy_deaths == 0);
  }
  SUBCASE("single attack subtracts damage") {
    auto w = board(6, 6, {{A, F, {0, 0}}, {E, F, {1, 0}}});
    w.units[1].hp = 5;
    std::vector<ActionId> joint{{action::kIntrinsic + 1}, {action::kStop}};
    step(w, joint);
    CHECK(w.units[1].hp == 2);
    CHECK(w.units[0].cooldown == 1);
  }
  SUBCASE("simultaneous attacks kill a 5 hp target") {
    auto w = board(6, 6, {{A, F, {0, 0}}, {A, F, {0, 1}}, {E, F, {1, 0}}});
    w.units[2].hp = 5;
    std::vector<ActionId> joint{
        {action::kIntrinsic + 2}, {action::kIntrinsic + 2}, {action::kStop}};
    auto ev = step(w, joint);
    CHECK(w.units[2].hp == 0);
    CHECK_FALSE(w.units[2].alive);
    CHECK(w.units[0].cooldown == 1);
    CHECK(w.units[1].cooldown == 1);
    CHECK(ev.enemy_deaths == 1);
    CHECK(ev.damage_taken[2] == 6);
    CHECK(terminal(w) == Outcome::kWin);
  }
  SUBCASE("damage uses the pre-step snapshot") {
    // Both fighters fire at each other and die on the same step.
    auto w = board(6, 6, {{A, F, {0, 0}}, {E, F, {1, 0}}});
    w.units[0].hp = 3;
    w.units[1].hp = 3;
    std::vector<ActionId> joint{{action::kIntrinsic + 1}, {action::kIntrinsic + 0}};
    step(w, joint);
    CHECK_FALSE(w.units[0].alive);
    CHECK_FALSE(w.units[1].alive);
    CHECK(terminal(w) == Outcome::kLoss);
  }
  SUBCASE("later mover into a taken cell stops") {
    auto w = board(6, 6, {{A, F, {1, 0}}, {A, F, {3, 0}}, {E, F, {5, 5}}});
    std::vector<ActionId> joint{{action::kEast}, {action::kWest}, {action::kStop}};
    step(w, joint);
    CHECK(w.units[0].cell == Cell{2, 0});
    CHECK(w.units[1].cell == Cell{3, 0});
    CHECK(w.units[1].last_action == static_cast<int>(action::kStop));
  }
  SUBCASE("healing is capped at max hp") {
    auto w = board(6, 6, {{A, H, {0, 0}}, {A, F, {1, 0}}, {E, F, {5, 5}}});
    w.units[1].hp = 9;
    std::vector<ActionId> joint{{action::kIntrinsic + 1}, {action::kStop}, {action::kStop}};
    auto ev = step(w, joint);
    CHECK(w.units[1].hp == 10);
    CHECK(ev.healed[1] == 3);
  }
  SUBCASE("unavailable actions are rejected") {
    auto w = board(6, 6, {{A, F, {0, 0}}, {E, F, {5, 5}}});
    std::vector<ActionId> joint{{action::kNorth}, {action::kStop}};
    CHECK_THROWS_WITH_AS(step(w, joint), doctest::Contains("not available"), ConfigError);
    std::vector<ActionId> short_joint{{action::kStop}};
    CHECK_THROWS_AS(step(w, short_joint), ConfigError);
  }
}

TEST_CASE("visibility examples") {
  auto w = board(12, 12, {{A, F, {0, 0}}, {A, F, {3, 3}}, {E, F, {9, 9}}});
  w.stats[0].sight_range = 4;
  auto v = visibility(w);
  CHECK(v(0, 0));
  CHECK(v(0, 1));
  CHECK_FALSE(v(0, 2));

  w.stats[0].sight_range = 0;
  v = visibility(w);
  CHECK(v.count() == 3);

  w.stats[0].sight_range = 100;
  w.units[2].alive = false;
  v = visibility(w);
  CHECK(v(0, 1));
  CHECK_FALSE(v(0, 2));
  CHECK(v(2, 2));
  CHECK_FALSE(v(2, 0));
}

TEST_CASE("terminal outcomes") {
  auto w = board(6, 6, {{A, F, {0, 0}}, {E, F, {5, 5}}});
  CHECK(terminal(w) == Outcome::kOngoing);
  w.step = w.max_steps;
  CHECK(terminal(w) == Outcome::kDraw);
  w.step = 0;
  w.units[1].alive = false;
  CHECK(terminal(w) == Outcome::kWin);
  w.units[0].alive = false;
  CHECK(terminal(w) == Outcome::kLoss);
  CHECK(std::string(outcome_name(Outcome::kDraw)) == "draw");
}

TEST_CASE("expert policy rules") {
  SUBCASE("adjacent enemy with cooldown 0 is attacked") {
    auto w = board(5, 5, {{A, F, {2, 2}}, {E, F, {2, 3}}});
    CHECK(expert_policy(w, 0).index == action::kIntrinsic + 1);
  }
  SUBCASE("nothing visible means stop") {
    auto w = board(16, 16, {{A, F, {0, 0}}, {E, F, {15, 15}}});
    CHECK(expert_policy(w, 0).index == action::kStop);
  }
  SUBCASE("reloading fighter kites away") {
    // From (2,2) with the enemy at (2,1): N is blocked, E and W keep
    // distance 1, S reaches distance 2.
    auto w = board(5, 5, {{A, F, {2, 2}}, {E, F, {2, 1}}});
    w.stats[0].cooldown = 2;
    w.units[0].cooldown = 2;
    CHECK(expert_policy(w, 0).index == action::kSouth);
    CHECK(expert_policy(w, 0, {.kiting = false}).index == action::kEast);
  }
  SUBCASE("focus on the weakest enemy, lowest index on ties") {
    auto w = board(6, 6, {{A, F, {2, 2}}, {E, F, {3, 2}}, {E, F, {1, 2}}, {E, F, {2, 3}}});
    w.units[2].hp = 4;
    w.units[3].hp = 4;
    CHECK(expert_policy(w, 0).index == action::kIntrinsic + 2);
  }
  SUBCASE("healer prefers the most wounded ally") {
    auto w = board(6, 6, {{A, H, {0, 0}}, {A, F, {1, 0}}, {A, F, {0, 1}}, {E, F, {5, 5}}});
    w.units[1].hp = 7;
    w.units[2].hp = 5;
    CHECK(expert_policy(w, 0).index == action::kIntrinsic + 2);
  }
  SUBCASE("approach the nearest visible enemy") {
    auto w = board(8, 8, {{A, F, {0, 4}}, {E, F, {5, 4}}});
    CHECK(expert_policy(w, 0).index == action::kEast);
  }
}

TEST_CASE("enemy policy rules") {
  SUBCASE("attacks the nearest opponent in range") {
    auto w = board(6, 6, {{A, F, {0, 0}}, {A, F, {2, 2}}, {E, F, {2, 1}}});
    w.units[1].hp = 9;
    w.units[0].hp = 1;
    CHECK(enemy_policy(w, 2).index == action::kIntrinsic + 1);
  }
  SUBCASE("stops when nothing is visible") {
    auto w = board(16, 16, {{A, F, {0, 0}}, {E, F, {15, 15}}});
    CHECK(enemy_policy(w, 1).index == action::kStop);
  }
  SUBCASE("approach trace from a corner") {
    // Ally fixed at (0,0); the enemy walks from (4,4). Ties follow N,E,S,W.
    auto w = board(5, 5, {{A, F, {0, 0}}, {E, F, {4, 4}}});
    w.stats[0].sight_range = 9;
    w.stats[0].damage = 0;  // keep the trace about movement
    std::vector<Cell> trace;
    for (int s = 0; s < 4; ++s) {
      std::vector<ActionId> joint{{action::kStop}, enemy_policy(w, 1)};
      step(w, joint);
      trace.push_back(w.units[1].cell);
    }
    std::vector<Cell> expected{{4, 3}, {3, 3}, {3, 2}, {2, 2}};
    CHECK(trace == expected);
  }
}

TEST_CASE("unit insertion") {
  auto w = board(6, 6, {{A, F, {2, 2}}, {E, F, {4, 4}}});
  insert_unit(w, {H, {0, 0}}, Team::kAlly);
  REQUIRE(w.size() == 3);
  CHECK(w.units[2].alive);
  CHECK(w.units[2].hp == 8);
  CHECK(available_actions(w, 0).size() == action::kIntrinsic + 3);
  CHECK_THROWS_AS(insert_unit(w, {F, {0, 0}}, Team::kAlly), ConfigError);
  CHECK_THROWS_AS(insert_unit(w, {F, {6, 0}}, Team::kAlly), ConfigError);

  Cell c;
  REQUIRE(nearest_free_cell_to_allies(w, c));
  CHECK_FALSE(w.occupied(c));
  CHECK(c == Cell{1, 1});
}

TEST_CASE("unit features encode only the unit itself") {
  auto w = board(16, 16, {{A, H, {15, 0}}, {E, F, {0, 15}}});
  w.units[0].hp = 4;
  w.units[0].last_action = static_cast<int>(action::kIntrinsic + 1);
  auto s = global_state(w);
  REQUIRE(s.shape() == Shape{2, kStateWidth});
  CHECK(s.at(0, 0) == 1.0);
  CHECK(s.at(0, 1) == 1.0);
  CHECK(s.at(0, 2 + 1) == 1.0);
  CHECK(s.at(0, 6) == 1.0);
  CHECK(s.at(0, 7) == 0.0);
  CHECK(s.at(0, 8) == doctest::Approx(0.5));
  CHECK(s.at(0, 16) == 1.0);
  CHECK(s.at(1, 0) == 0.0);
  CHECK(s.at(1, 2) == 1.0);

  w.units[1].alive = false;
  w.units[1].hp = 0;
  w.units[1].last_action = 3;
  auto dead = global_state(w);
  for (std::size_t c = 0; c < kStateWidth; ++c)
    CHECK(dead.at(1, c) == (c == 2 ? 1.0 : 0.0));
}

TEST_CASE("scenario text round trip and errors") {
  for (const auto& cfg : training_scenarios()) {
    auto back = parse_scenario(write_scenario(cfg));
    CHECK(back == cfg);
  }
  CHECK_THROWS_AS(parse_scenario("name x\n"), VersionError);
  CHECK_THROWS_AS(parse_scenario("schema 2\n"), VersionError);
  CHECK_THROWS_WITH_AS(parse_scenario("schema 1\nbogus 3\n"), doctest::Contains("line 2"),
                       ConfigError);
  CHECK_THROWS_AS(parse_scenario("schema 1\nally fighter 0 0\n"), ConfigError);
  CHECK_THROWS_AS(load_scenario("/nonexistent/file.scn"), IoError);
}

TEST_CASE("scenario suites") {
  auto train = training_scenarios();
  auto test = test_scenarios();
  CHECK(train.size() == 8);
  CHECK(test.size() == 20);
  std::size_t largest = 0;
  for (const auto& cfg : test) largest = std::max(largest, cfg.unit_count());
  CHECK(largest == 19);
  for (const auto& t : test)
    for (const auto& s : train) CHECK(t.name != s.name);
  auto adhoc = adhoc_scenario();
  CHECK(adhoc.allies.size() + 1 == adhoc.enemies.size());
  CHECK(scenario_by_name(adhoc.name) == adhoc);
}

TEST_CASE("random play preserves occupancy, bounds and conservation") {
  std::mt19937_64 rng(5);
  const auto suite = training_scenarios();
  int steps = 0;
  std::size_t episode = 0;
  while (steps < 10000) {
    auto cfg = suite[episode % suite.size()];
    cfg.seed = episode++;
    auto w = reset(cfg);
    while (terminal(w) == Outcome::kOngoing) {
      std::vector<ActionId> joint;
      for (std::size_t i = 0; i < w.size(); ++i) {
        auto av = available_actions(w, i);
        std::vector<std::size_t> options;
        for (std::size_t a = 0; a < av.size(); ++a)
          if (av[a]) options.push_back(a);
        joint.push_back({options[rng() % options.size()]});
      }
      const auto before = w;
      const auto ev = step(w, joint);
      ++steps;
      for (std::size_t i = 0; i < w.size(); ++i) {
        const Unit& u = w.units[i];
        const Unit& b = before.units[i];
        const auto& st = w.stats_of(i);
        REQUIRE(w.in_bounds(u.cell));
        REQUIRE(u.hp >= 0);
        REQUIRE(u.hp <= st.max_hp);
        REQUIRE(u.cooldown >= 0);
        REQUIRE(u.cooldown <= st.cooldown);
        if (u.hp > b.hp) REQUIRE(ev.healed[i] > 0);
        if (u.hp < b.hp) REQUIRE(ev.damage_taken[i] > 0);
        if (!b.alive) {
          REQUIRE(joint[i].index == action::kNoOp);
          REQUIRE_FALSE(u.alive);
          REQUIRE(u.cell == b.cell);
        }
        for (std::size_t j = i + 1; j < w.size(); ++j)
          if (u.alive && w.units[j].alive) REQUIRE_FALSE(u.cell == w.units[j].cell);
      }
    }
  }
  CHECK(steps >= 10000);
}

TEST_CASE("identical actions give identical trajectories") {
  auto cfg = scenario_by_name("3f1h_v_3f");
  cfg.seed = 11;
  auto run = [&] {
    auto w = reset(cfg);
    std::vector<std::vector<Unit>> log;
    while (terminal(w) == Outcome::kOngoing) {
      std::vector<ActionId> joint;
      for (std::size_t i = 0; i < w.size(); ++i)
        joint.push_back(w.controllable(i) ? expert_policy(w, i) : enemy_policy(w, i));
      step(w, joint);
      log.push_back(w.units);
    }
    return log;
  };
  auto a = run();
  auto b = run();
  REQUIRE(a.size() == b.size());
  for (std::size_t t = 0; t < a.size(); ++t)
    for (std::size_t i = 0; i < a[t].size(); ++i) {
      CHECK(a[t][i].cell == b[t][i].cell);
      CHECK(a[t][i].hp == b[t][i].hp);
      CHECK(a[t][i].cooldown == b[t][i].cooldown);
    }
}
