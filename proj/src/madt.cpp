#include "maskma/madt.hpp"

#include <algorithm>
#include <cmath>

#include "maskma/arena.hpp"
#include "maskma/error.hpp"

namespace maskma {

std::size_t default_max_units() {
  std::size_t n = adhoc_scenario().allies.size() + adhoc_scenario().enemies.size();
  for (const auto& suite : {training_scenarios(), test_scenarios()})
    for (const auto& s : suite) n = std::max(n, s.allies.size() + s.enemies.size());
  return n + 1;
}

namespace {

Tensor normal_matrix(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  Tensor t({rows, cols});
  std::normal_distribution<double> normal(0.0, stddev);
  for (double& v : t.data()) v = normal(rng);
  return t;
}

template <class Store>
MadtModel::Vars bind_madt(Tape& tape, Store& store, const ModelConfig& cfg) {
  MadtModel::Vars v;
  v.embed_w = tape.parameter(store.get("embed.w"));
  v.embed_b = tape.parameter(store.get("embed.b"));
  v.position = tape.parameter(store.get("embed.position"));
  v.encoder = bind_encoder(tape, store, cfg);
  v.head_w = tape.parameter(store.get("head.w"));
  v.head_b = tape.parameter(store.get("head.b"));
  return v;
}

}  // namespace

MadtModel::MadtModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  if (cfg_.max_units == 0) throw ConfigError("the baseline needs a positive slot count");
  Rng rng(seed);
  const std::size_t d = cfg_.hidden;
  params_.add("embed.w", normal_matrix(input_width(), d,
                                       1.0 / std::sqrt(static_cast<double>(input_width())), rng));
  params_.add("embed.b", Tensor({d}, 0.0));
  params_.add("embed.position", normal_matrix(cfg_.context, d, 0.02, rng));
  init_encoder(params_, cfg_, rng);
  params_.add("head.w", normal_matrix(d, action_count(), 0.1 / std::sqrt(static_cast<double>(d)), rng));
  params_.add("head.b", Tensor({action_count()}, 0.0));
}

MadtModel::Vars MadtModel::bind(Tape& tape) { return bind_madt(tape, params_, cfg_); }
MadtModel::Vars MadtModel::bind(Tape& tape) const { return bind_madt(tape, params_, cfg_); }

Var MadtModel::forward(const Vars& v, const TokenBatch& batch) const {
  if (batch.states.cols() != input_width())
    throw DimensionError("observation width " + std::to_string(batch.states.cols()) +
                         ", model expects " + std::to_string(input_width()));
  Tape& tape = *v.embed_w.tape;
  Var x = ops::add(ops::linear(tape.constant(batch.states), v.embed_w, v.embed_b),
                   ops::embedding(v.position, batch.step_index));
  const auto masks = batch.mask_ptrs();
  Var h = encode(v.encoder, x, masks, batch.tokens, cfg_.heads);
  return ops::linear(h, v.head_w, v.head_b);
}

Tensor MadtModel::logits(const TokenBatch& batch) const {
  Tape tape(false);
  return forward(bind(tape), batch).value();
}

void madt_observation(std::span<const double> states, const Visibility& vis, std::size_t agent,
                      std::size_t max_units, std::span<double> out) {
  const std::size_t n = vis.rows;
  if (n > max_units)
    throw ConfigError("scenario has " + std::to_string(n) + " units, the baseline supports " +
                      std::to_string(max_units));
  if (out.size() % (max_units + 1) != 0) throw DimensionError("observation buffer width");
  const std::size_t width = out.size() / (max_units + 1);
  if (states.size() != n * width) throw DimensionError("global state size");
  std::fill(out.begin(), out.end(), 0.0);
  std::copy_n(states.begin() + static_cast<std::ptrdiff_t>(agent * width), width, out.begin());
  for (std::size_t j = 0; j < n; ++j)
    if (vis(agent, j))
      std::copy_n(states.begin() + static_cast<std::ptrdiff_t>(j * width), width,
                  out.begin() + static_cast<std::ptrdiff_t>((j + 1) * width));
}

GroupLoss MadtLearner::group_loss(Tape& tape, std::span<const TrainingWindow* const> windows,
                                  const MaskSpec&, Rng&) {
  if (windows.empty()) throw ConfigError("empty window group");
  const std::size_t L = windows[0]->steps, N = windows[0]->units;
  const std::size_t width = model_.input_width(), sw = model_.config().state_width;
  TokenBatch batch;
  batch.batch = windows.size() * N;
  batch.tokens = L;
  batch.states = Tensor({batch.batch * L, width});
  batch.step_index.reserve(batch.batch * L);
  std::vector<int> targets;
  std::vector<std::uint8_t> include;
  targets.reserve(batch.batch * L);
  include.reserve(batch.batch * L);
  std::size_t row = 0;
  for (const TrainingWindow* w : windows) {
    if (w->steps != L || w->units != N) throw DimensionError("mixed window shapes in a group");
    AttentionMask causal = build_base_mask(L, 1);
    apply_padding(causal, w->pad);
    for (std::size_t u = 0; u < N; ++u) {
      batch.masks.push_back(causal.allow);
      for (std::size_t t = 0; t < L; ++t, ++row) {
        const std::span<const double> step_states(w->states.ptr() + t * N * sw, N * sw);
        madt_observation(step_states, w->visibility[t], u, model_.config().max_units,
                         batch.states.row(row));
        batch.step_index.push_back(t);
        targets.push_back(w->targets[t * N + u]);
        include.push_back(w->include[t * N + u]);
      }
    }
  }
  const auto v = model_.bind(tape);
  Var logits = model_.forward(v, batch);
  GroupLoss out;
  out.loss = imitation_loss(logits, targets, include, windows.size());
  out.counted = static_cast<std::size_t>(std::count(include.begin(), include.end(), 1));
  out.correct = static_cast<std::size_t>(
      std::llround(imitation_accuracy(logits.value(), targets, include) * out.counted));
  return out;
}

MadtModel load_madt(const std::string& path) {
  const Checkpoint ck = load_checkpoint(path);
  if (ck.kind != kMadtKind) throw ConfigError(path + " does not hold a baseline model");
  MadtModel model(ck.config, 0);
  restore_checkpoint(ck, model.params(), nullptr);
  return model;
}

}  // namespace maskma
