#include "maskma/data.hpp"

#include <algorithm>
#include <cstring>

#include <omp.h>

#include "maskma/binary_io.hpp"
#include "maskma/error.hpp"

namespace maskma {

namespace {

constexpr char kMagic[8] = {'M', 'A', 'S', 'K', 'M', 'A', 'D', 'S'};

StepRecord snapshot(const WorldState& w) {
  StepRecord s;
  s.units = w.units;
  const std::size_t n = w.size();
  s.available = BoolMatrix(n, action::kIntrinsic + n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto av = available_actions(w, i);
    for (std::size_t a = 0; a < av.size(); ++a) s.available.set(i, a, av[a]);
  }
  s.visibility = visibility(w);
  return s;
}

void put_bits(ByteWriter& out, const BoolMatrix& m) {
  std::vector<std::uint8_t> packed((m.cells.size() + 7) / 8, 0);
  for (std::size_t k = 0; k < m.cells.size(); ++k)
    if (m.cells[k]) packed[k / 8] |= static_cast<std::uint8_t>(1u << (k % 8));
  out.put_bytes(packed);
}

BoolMatrix get_bits(ByteReader& in, std::size_t rows, std::size_t cols) {
  BoolMatrix m(rows, cols);
  const auto packed = in.get_bytes((rows * cols + 7) / 8);
  for (std::size_t k = 0; k < m.cells.size(); ++k) m.cells[k] = (packed[k / 8] >> (k % 8)) & 1u;
  return m;
}

}  // namespace

AllyPolicy expert_ally_policy(ExpertOptions opts) {
  return [opts](const WorldState& w, std::size_t i, Rng&) { return expert_policy(w, i, opts); };
}

double normalized_return(const ScenarioConfig& cfg, int enemy_hp_lost, int enemy_kills, bool win) {
  double max_hp = 0.0;
  for (const auto& e : cfg.enemies) max_hp += cfg.stats[static_cast<std::size_t>(e.type)].max_hp;
  const double best = max_hp + 10.0 * static_cast<double>(cfg.enemies.size()) + 200.0;
  const double got = enemy_hp_lost + 10.0 * enemy_kills + (win ? 200.0 : 0.0);
  return 20.0 * got / best;
}

EpisodeRecord record_episode(const ScenarioConfig& cfg, const AllyPolicy& policy, Rng& rng) {
  EpisodeRecord ep;
  ep.seed = cfg.seed;
  WorldState w = reset(cfg);
  int hp_lost = 0, kills = 0;
  while (terminal(w) == Outcome::kOngoing) {
    StepRecord s = snapshot(w);
    s.actions.resize(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (!w.units[i].alive) s.actions[i] = {action::kNoOp};
      else s.actions[i] = w.controllable(i) ? policy(w, i, rng) : enemy_policy(w, i);
    }
    const StepEvents ev = step(w, s.actions);
    hp_lost += ev.enemy_hp_lost;
    kills += ev.enemy_deaths;
    ep.steps.push_back(std::move(s));
  }
  ep.outcome = terminal(w);
  ep.episode_return = normalized_return(cfg, hp_lost, kills, ep.outcome == Outcome::kWin);
  return ep;
}

std::string replay_mismatch(const ScenarioConfig& cfg, const EpisodeRecord& episode) {
  ScenarioConfig seeded = cfg;
  seeded.seed = episode.seed;
  WorldState w = reset(seeded);
  for (std::size_t t = 0; t < episode.steps.size(); ++t) {
    const StepRecord& logged = episode.steps[t];
    const std::string at = "step " + std::to_string(t) + ": ";
    if (terminal(w) != Outcome::kOngoing) return at + "episode already over";
    if (w.units.size() < logged.units.size()) {
      // Units appended mid-episode are replayed from the log.
      for (std::size_t i = w.units.size(); i < logged.units.size(); ++i)
        w.units.push_back(logged.units[i]);
    }
    const StepRecord now = snapshot(w);
    if (now.units != logged.units) return at + "unit state differs";
    if (now.available != logged.available) return at + "availability differs";
    if (now.visibility != logged.visibility) return at + "visibility differs";
    for (std::size_t i = 0; i < logged.actions.size(); ++i)
      if (!logged.available(i, logged.actions[i].index))
        return at + "unit " + std::to_string(i) + " took an unavailable action";
    try {
      step(w, logged.actions);
    } catch (const Error& e) {
      return at + e.what();
    }
  }
  if (terminal(w) != episode.outcome) return "final outcome differs";
  return {};
}

std::size_t Dataset::total_steps() const {
  std::size_t n = 0;
  for (const auto& e : episodes) n += e.length();
  return n;
}

Dataset generate_dataset(const std::vector<ScenarioConfig>& scenarios, std::size_t per_scenario,
                         std::uint64_t seed, int workers, ExpertOptions opts) {
  Dataset data;
  data.scenarios = scenarios;
  data.episodes.resize(scenarios.size() * per_scenario);
  const auto policy = expert_ally_policy(opts);
  const int threads = workers > 0 ? workers : omp_get_max_threads();
  const auto total = static_cast<std::int64_t>(data.episodes.size());
#pragma omp parallel for schedule(dynamic, 4) num_threads(threads)
  for (std::int64_t k = 0; k < total; ++k) {
    const auto s = static_cast<std::size_t>(k) / per_scenario;
    const auto e = static_cast<std::size_t>(k) % per_scenario;
    ScenarioConfig cfg = scenarios[s];
    cfg.seed = mix_seed(seed, s, e);
    Rng rng(cfg.seed);
    EpisodeRecord ep = record_episode(cfg, policy, rng);
    ep.scenario = static_cast<std::uint32_t>(s);
    data.episodes[static_cast<std::size_t>(k)] = std::move(ep);
  }
  return data;
}

// ---------------------------------------------------------------------------
// Episode payload

std::vector<std::uint8_t> encode_episode(const EpisodeRecord& ep) {
  ByteWriter out;
  out.put<std::uint32_t>(ep.scenario);
  out.put<std::uint64_t>(ep.seed);
  out.put<std::uint8_t>(static_cast<std::uint8_t>(ep.outcome));
  out.put<double>(ep.episode_return);
  out.put<std::uint32_t>(static_cast<std::uint32_t>(ep.steps.size()));
  for (const StepRecord& s : ep.steps) {
    const std::size_t n = s.units.size();
    out.put<std::uint16_t>(static_cast<std::uint16_t>(n));
    for (const Unit& u : s.units) {
      out.put<std::uint8_t>(static_cast<std::uint8_t>(u.type));
      out.put<std::uint8_t>(static_cast<std::uint8_t>(u.team));
      out.put<std::uint8_t>(u.alive ? 1 : 0);
      out.put<std::int16_t>(static_cast<std::int16_t>(u.cell.x));
      out.put<std::int16_t>(static_cast<std::int16_t>(u.cell.y));
      out.put<std::int16_t>(static_cast<std::int16_t>(u.hp));
      out.put<std::int16_t>(static_cast<std::int16_t>(u.cooldown));
      out.put<std::int16_t>(static_cast<std::int16_t>(u.last_action));
    }
    for (const ActionId a : s.actions) out.put<std::uint16_t>(static_cast<std::uint16_t>(a.index));
    put_bits(out, s.available);
    put_bits(out, s.visibility);
  }
  return std::move(out.bytes());
}

EpisodeRecord decode_episode(std::span<const std::uint8_t> payload) {
  ByteReader in(payload);
  EpisodeRecord ep;
  ep.scenario = in.get<std::uint32_t>();
  ep.seed = in.get<std::uint64_t>();
  const auto outcome = in.get<std::uint8_t>();
  if (outcome > static_cast<std::uint8_t>(Outcome::kDraw)) throw IoError("bad outcome code");
  ep.outcome = static_cast<Outcome>(outcome);
  ep.episode_return = in.get<double>();
  const auto steps = in.get<std::uint32_t>();
  ep.steps.resize(steps);
  for (StepRecord& s : ep.steps) {
    const std::size_t n = in.get<std::uint16_t>();
    s.units.resize(n);
    for (Unit& u : s.units) {
      u.type = static_cast<UnitType>(in.get<std::uint8_t>());
      u.team = static_cast<Team>(in.get<std::uint8_t>());
      u.alive = in.get<std::uint8_t>() != 0;
      u.cell.x = in.get<std::int16_t>();
      u.cell.y = in.get<std::int16_t>();
      u.hp = in.get<std::int16_t>();
      u.cooldown = in.get<std::int16_t>();
      u.last_action = in.get<std::int16_t>();
    }
    s.actions.resize(n);
    for (ActionId& a : s.actions) a.index = in.get<std::uint16_t>();
    s.available = get_bits(in, n, action::kIntrinsic + n);
    s.visibility = get_bits(in, n, n);
  }
  if (!in.done()) throw IoError("trailing bytes in episode block");
  return ep;
}

// ---------------------------------------------------------------------------
// Files

DatasetWriter::DatasetWriter(const std::string& path, const std::vector<ScenarioConfig>& scenarios)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc),
      scenario_count_(scenarios.size()) {
  if (!out_) throw IoError("cannot create dataset " + path);
  ByteWriter header;
  header.put_bytes({reinterpret_cast<const std::uint8_t*>(kMagic), sizeof(kMagic)});
  header.put<std::uint32_t>(kDatasetVersion);
  header.put<std::uint32_t>(static_cast<std::uint32_t>(scenarios.size()));
  for (const auto& cfg : scenarios) header.put_string(write_scenario(cfg));
  out_.write(reinterpret_cast<const char*>(header.bytes().data()),
             static_cast<std::streamsize>(header.bytes().size()));
  count_offset_ = out_.tellp();
  const std::uint64_t zero = 0;
  out_.write(reinterpret_cast<const char*>(&zero), sizeof(zero));
  if (!out_) throw IoError("write failed on " + path);
}

DatasetWriter::~DatasetWriter() {
  try {
    close();
  } catch (...) {
  }
}

void DatasetWriter::write(const EpisodeRecord& episode) {
  if (closed_) throw IoError("dataset writer already closed");
  if (episode.scenario >= scenario_count_)
    throw ConfigError("episode refers to scenario " + std::to_string(episode.scenario) +
                      " outside the table");
  const auto payload = encode_episode(episode);
  const std::uint64_t size = payload.size();
  const std::uint64_t sum = fnv1a64(payload);
  out_.write(reinterpret_cast<const char*>(&size), sizeof(size));
  out_.write(reinterpret_cast<const char*>(&sum), sizeof(sum));
  out_.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(size));
  if (!out_) throw IoError("write failed on " + path_);
  ++count_;
}

void DatasetWriter::close() {
  if (closed_) return;
  closed_ = true;
  out_.seekp(count_offset_);
  out_.write(reinterpret_cast<const char*>(&count_), sizeof(count_));
  out_.close();
  if (!out_) throw IoError("write failed on " + path_);
}

namespace {

void read_exact(std::ifstream& in, void* dst, std::size_t n, const std::string& path,
                bool in_block) {
  in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    if (in_block) throw ChecksumError(path + ": episode block is truncated");
    throw IoError(path + ": unexpected end of file");
  }
}

}  // namespace

DatasetReader::DatasetReader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
  if (!in_) throw IoError("cannot open dataset " + path);
  char magic[sizeof(kMagic)];
  read_exact(in_, magic, sizeof(magic), path, false);
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw IoError(path + " is not a dataset file");
  std::uint32_t version = 0;
  read_exact(in_, &version, sizeof(version), path, false);
  if (version != kDatasetVersion)
    throw VersionError(path + ": dataset version " + std::to_string(version) +
                       ", expected " + std::to_string(kDatasetVersion));
  std::uint32_t scenarios = 0;
  read_exact(in_, &scenarios, sizeof(scenarios), path, false);
  for (std::uint32_t s = 0; s < scenarios; ++s) {
    std::uint32_t len = 0;
    read_exact(in_, &len, sizeof(len), path, false);
    std::string text(len, '\0');
    read_exact(in_, text.data(), len, path, false);
    scenarios_.push_back(parse_scenario(text));
  }
  read_exact(in_, &count_, sizeof(count_), path, false);
}

bool DatasetReader::next(EpisodeRecord& episode) {
  if (read_ == count_) return false;
  std::uint64_t size = 0, sum = 0;
  read_exact(in_, &size, sizeof(size), path_, true);
  read_exact(in_, &sum, sizeof(sum), path_, true);
  if (size > (std::uint64_t{1} << 32)) throw ChecksumError(path_ + ": corrupt block length");
  buffer_.resize(size);
  read_exact(in_, buffer_.data(), size, path_, true);
  peak_ = std::max(peak_, buffer_.size());
  if (fnv1a64(buffer_) != sum)
    throw ChecksumError(path_ + ": checksum mismatch in episode " + std::to_string(read_));
  episode = decode_episode(buffer_);
  if (episode.scenario >= scenarios_.size())
    throw IoError(path_ + ": episode refers to a missing scenario");
  ++read_;
  return true;
}

void write_dataset(const std::string& path, const Dataset& dataset) {
  DatasetWriter writer(path, dataset.scenarios);
  for (const auto& ep : dataset.episodes) writer.write(ep);
  writer.close();
}

Dataset read_dataset(const std::string& path) {
  DatasetReader reader(path);
  Dataset data;
  data.scenarios = reader.scenarios();
  EpisodeRecord ep;
  while (reader.next(ep)) data.episodes.push_back(std::move(ep));
  return data;
}

// ---------------------------------------------------------------------------
// Windows

TrainingWindow make_window(const Dataset& data, std::size_t episode, std::size_t end,
                           std::size_t steps) {
  const EpisodeRecord& ep = data.episodes.at(episode);
  if (end >= ep.length()) throw ConfigError("window end beyond the episode");
  if (steps == 0) throw ConfigError("window needs at least one step");
  const ScenarioConfig& cfg = data.scenarios.at(ep.scenario);
  const std::size_t n = ep.steps[end].units.size();
  TrainingWindow win;
  win.steps = steps;
  win.units = n;
  win.episode = static_cast<std::uint32_t>(episode);
  win.end = end;
  win.pad = end + 1 < steps ? steps - (end + 1) : 0;
  win.states = Tensor({steps * n, kStateWidth});
  win.targets.assign(steps * n, 0);
  win.include.assign(steps * n, 0);

  WorldState view;
  view.width = cfg.width;
  view.height = cfg.height;
  view.max_steps = cfg.max_steps;
  view.stats = cfg.stats;
  for (std::size_t t = 0; t < steps; ++t) {
    if (t < win.pad) {
      Visibility self(n, n);
      for (std::size_t i = 0; i < n; ++i) self.set(i, i, true);
      win.visibility.push_back(std::move(self));
      continue;
    }
    const StepRecord& s = ep.steps[end + 1 + t - steps];
    if (s.units.size() != n)
      throw ConfigError("unit count changes inside a training window");
    view.units = s.units;
    for (std::size_t u = 0; u < n; ++u) {
      const std::size_t row = t * n + u;
      unit_features(view, u, win.states.row(row));
      if (s.units[u].alive && s.units[u].team == Team::kAlly) {
        win.include[row] = 1;
        win.targets[row] = static_cast<int>(s.actions[u].index);
      }
    }
    win.visibility.push_back(s.visibility);
  }
  return win;
}

std::vector<TrainingWindow> sample_windows(const Dataset& data, std::size_t batch,
                                           std::size_t steps, Rng& rng) {
  if (data.episodes.empty()) throw ConfigError("cannot sample windows from an empty dataset");
  std::vector<std::size_t> cumulative;
  cumulative.reserve(data.episodes.size());
  std::size_t total = 0;
  for (const auto& ep : data.episodes) cumulative.push_back(total += ep.length());
  if (total == 0) throw ConfigError("dataset has no steps");
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);
  std::vector<TrainingWindow> out;
  out.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t k = pick(rng);
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), k);
    const auto e = static_cast<std::size_t>(it - cumulative.begin());
    const std::size_t start = e == 0 ? 0 : cumulative[e - 1];
    out.push_back(make_window(data, e, k - start, steps));
  }
  return out;
}

std::map<std::size_t, std::vector<std::size_t>> group_by_units(
    const std::vector<TrainingWindow>& windows) {
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < windows.size(); ++i) groups[windows[i].units].push_back(i);
  return groups;
}

}  // namespace maskma
