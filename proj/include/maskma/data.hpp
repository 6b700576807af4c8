#pragma once

// Expert trajectories: recording, the on-disk dataset format and training
// window sampling.
//
// Steps are stored as compact unit snapshots rather than feature matrices;
// features are rebuilt on demand with unit_features().

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "maskma/arena.hpp"
#include "maskma/masks.hpp"
#include "maskma/tensor.hpp"

namespace maskma {

struct StepRecord {
  std::vector<Unit> units;        // pre-action snapshot
  std::vector<ActionId> actions;  // one per unit (no-op for the dead)
  BoolMatrix available;           // N x (K_intr + N)
  Visibility visibility;          // N x N

  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

struct EpisodeRecord {
  std::uint32_t scenario = 0;  // index into the dataset's scenario table
  std::uint64_t seed = 0;
  std::vector<StepRecord> steps;
  Outcome outcome = Outcome::kOngoing;
  double episode_return = 0.0;  // metadata only

  std::size_t length() const { return steps.size(); }
  friend bool operator==(const EpisodeRecord&, const EpisodeRecord&) = default;
};

// Ally controller used while recording.
using AllyPolicy = std::function<ActionId(const WorldState&, std::size_t unit, Rng&)>;
AllyPolicy expert_ally_policy(ExpertOptions opts = {});

// Rolls one episode from `cfg` (whose seed fixes the spawn jitter). Enemies
// use enemy_policy. The scenario index is left at 0.
EpisodeRecord record_episode(const ScenarioConfig& cfg, const AllyPolicy& policy, Rng& rng);

// Episode return scaled to [0, 20]: enemy hp removed plus 10 per kill plus
// 200 for a win, over the maximum attainable.
double normalized_return(const ScenarioConfig& cfg, int enemy_hp_lost, int enemy_kills, bool win);

// Re-simulates the logged actions and returns an empty string when every
// state, availability and visibility matches; otherwise a description of
// the first mismatch.
std::string replay_mismatch(const ScenarioConfig& cfg, const EpisodeRecord& episode);

struct Dataset {
  std::vector<ScenarioConfig> scenarios;
  std::vector<EpisodeRecord> episodes;

  std::size_t total_steps() const;
  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// `per_scenario` expert episodes for every scenario, generated on `workers`
// threads (0 = all). Episode e of scenario s uses seed mix_seed(seed, s, e),
// so the result does not depend on the worker count.
Dataset generate_dataset(const std::vector<ScenarioConfig>& scenarios, std::size_t per_scenario,
                         std::uint64_t seed, int workers = 0, ExpertOptions opts = {});

inline constexpr std::uint32_t kDatasetVersion = 1;

// Streaming writer: the header is written on open and the episode count is
// patched on close().
class DatasetWriter {
 public:
  DatasetWriter(const std::string& path, const std::vector<ScenarioConfig>& scenarios);
  ~DatasetWriter();
  DatasetWriter(const DatasetWriter&) = delete;
  DatasetWriter& operator=(const DatasetWriter&) = delete;

  void write(const EpisodeRecord& episode);
  void close();

 private:
  std::string path_;
  std::ofstream out_;
  std::size_t scenario_count_ = 0;
  std::uint64_t count_ = 0;
  std::streampos count_offset_{};
  bool closed_ = false;
};

// Streaming reader: holds at most one episode block in memory.
class DatasetReader {
 public:
  explicit DatasetReader(const std::string& path);

  const std::vector<ScenarioConfig>& scenarios() const { return scenarios_; }
  std::uint64_t episode_count() const { return count_; }
  // Reads the next episode; false after the last one.
  bool next(EpisodeRecord& episode);
  // Size of the largest block buffered so far.
  std::size_t peak_buffer_bytes() const { return peak_; }

 private:
  std::string path_;
  std::ifstream in_;
  std::vector<ScenarioConfig> scenarios_;
  std::uint64_t count_ = 0;
  std::uint64_t read_ = 0;
  std::vector<std::uint8_t> buffer_;
  std::size_t peak_ = 0;
};

void write_dataset(const std::string& path, const Dataset& dataset);
Dataset read_dataset(const std::string& path);

// Serialized form of one episode block payload (exposed for tests).
std::vector<std::uint8_t> encode_episode(const EpisodeRecord& episode);
EpisodeRecord decode_episode(std::span<const std::uint8_t> payload);

// L consecutive steps of one episode ending at `end`, left-padded with
// `pad` empty steps when the episode is shorter. Token (t, u) = row t*N+u.
struct TrainingWindow {
  std::size_t steps = 0;  // L
  std::size_t units = 0;  // N
  std::size_t pad = 0;
  std::uint32_t episode = 0;
  std::size_t end = 0;
  Tensor states;                  // (L*N x kStateWidth), zero on pad rows
  std::vector<int> targets;       // L*N; 0 where excluded
  std::vector<std::uint8_t> include;  // controllable, alive, not pad
  VisibilitySet visibility;       // L entries; pad steps see only themselves
};

TrainingWindow make_window(const Dataset& data, std::size_t episode, std::size_t end,
                           std::size_t steps);

// B windows drawn uniformly over (episode, end step) pairs.
std::vector<TrainingWindow> sample_windows(const Dataset& data, std::size_t batch,
                                           std::size_t steps, Rng& rng);

// Window indices grouped by unit count.
std::map<std::size_t, std::vector<std::size_t>> group_by_units(
    const std::vector<TrainingWindow>& windows);

}  // namespace maskma
