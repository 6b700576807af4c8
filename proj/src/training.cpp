#include "maskma/training.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "json.hpp"
#include "maskma/binary_io.hpp"
#include "maskma/error.hpp"

namespace maskma {

using nlohmann::json;

MaskSpec MaskSpec::parse(const std::string& text) {
  if (text == "none") return {MaskMode::kNone, 0.0};
  if (text == "random") return {MaskMode::kRandom, 0.0};
  if (text == "local") return {MaskMode::kLocal, 0.0};
  if (text.rfind("fixed:", 0) == 0) {
    const std::string value = text.substr(6);
    std::size_t used = 0;
    double ratio = 0.0;
    try {
      ratio = std::stod(value, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != value.size())
      throw ConfigError("mask ratio '" + value + "' is not a number");
    if (!(ratio >= 0.0 && ratio <= 1.0))
      throw ConfigError("mask ratio " + value + " outside [0, 1]");
    return {MaskMode::kFixed, ratio};
  }
  throw ConfigError("unknown mask mode '" + text + "' (none, fixed:<ratio>, random, local)");
}

std::string MaskSpec::str() const {
  switch (mode) {
    case MaskMode::kNone: return "none";
    case MaskMode::kRandom: return "random";
    case MaskMode::kLocal: return "local";
    case MaskMode::kFixed: {
      std::string r = std::to_string(ratio);
      r.erase(r.find_last_not_of('0') + 1);
      if (r.back() == '.') r.push_back('0');
      return "fixed:" + r;
    }
  }
  return "?";
}

AttentionMask window_mask(const TrainingWindow& w, const MaskSpec& spec, Rng& rng) {
  AttentionMask m;
  switch (spec.mode) {
    case MaskMode::kNone:
      m = build_base_mask(w.steps, w.units);
      break;
    case MaskMode::kFixed:
      m = sample_training_mask(build_base_mask(w.steps, w.units), spec.ratio, rng);
      break;
    case MaskMode::kRandom:
      m = sample_training_mask(build_base_mask(w.steps, w.units), sample_ratio(rng), rng);
      break;
    case MaskMode::kLocal:
      m = build_local_mask(w.visibility, w.steps, w.units);
      break;
  }
  apply_padding(m, w.pad);
  return m;
}

void TrainConfig::validate() const {
  model.validate();
  if (batch == 0) throw ConfigError("batch size must be positive");
  if (!(learning_rate >= 0.0)) throw ConfigError("learning rate must be non-negative");
  if (!(rms_alpha >= 0.0 && rms_alpha < 1.0)) throw ConfigError("rmsprop alpha must be in [0, 1)");
  if (!(rms_eps > 0.0)) throw ConfigError("rmsprop epsilon must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
  if (mask.mode == MaskMode::kFixed && !(mask.ratio >= 0.0 && mask.ratio <= 1.0))
    throw ConfigError("mask ratio outside [0, 1]");
}

RmsProp::RmsProp(const ParameterStore& params, double alpha, double eps)
    : alpha_(alpha), eps_(eps) {
  for (const auto& p : params.all()) square_avg_.emplace_back(p.value.shape());
}

void RmsProp::step(ParameterStore& params, double lr, double weight_decay) {
  auto& all = params.all();
  if (all.size() != square_avg_.size()) throw DimensionError("optimizer state does not match");
  for (std::size_t k = 0; k < all.size(); ++k) {
    auto value = all[k].value.data();
    auto grad = all[k].grad.data();
    auto avg = square_avg_[k].data();
    for (std::size_t i = 0; i < value.size(); ++i) {
      avg[i] = alpha_ * avg[i] + (1.0 - alpha_) * grad[i] * grad[i];
      value[i] -= lr * grad[i] / (std::sqrt(avg[i]) + eps_) + lr * weight_decay * value[i];
    }
  }
}

TokenBatch make_token_batch(std::span<const TrainingWindow* const> windows,
                            std::span<const AttentionMask> masks) {
  if (windows.empty()) throw ConfigError("empty window group");
  TokenBatch b;
  b.batch = windows.size();
  const std::size_t steps = windows[0]->steps, units = windows[0]->units;
  b.tokens = steps * units;
  b.states = Tensor({b.batch * b.tokens, windows[0]->states.cols()});
  b.step_index.reserve(b.batch * b.tokens);
  for (std::size_t k = 0; k < windows.size(); ++k) {
    const TrainingWindow& w = *windows[k];
    if (w.steps != steps || w.units != units) throw DimensionError("mixed window shapes in a group");
    std::copy(w.states.data().begin(), w.states.data().end(),
              b.states.data().begin() + static_cast<std::ptrdiff_t>(k * w.states.numel()));
    for (std::size_t t = 0; t < steps; ++t)
      for (std::size_t u = 0; u < units; ++u) b.step_index.push_back(t);
    b.masks.push_back(masks[k].allow);
  }
  return b;
}

GroupLoss MaskMALearner::group_loss(Tape& tape, std::span<const TrainingWindow* const> windows,
                                    const MaskSpec& mask, Rng& rng) {
  last_masks_.clear();
  for (const TrainingWindow* w : windows) last_masks_.push_back(window_mask(*w, mask, rng));
  const TokenBatch batch = make_token_batch(windows, last_masks_);
  std::vector<int> targets;
  std::vector<std::uint8_t> include;
  for (const TrainingWindow* w : windows) {
    targets.insert(targets.end(), w->targets.begin(), w->targets.end());
    include.insert(include.end(), w->include.begin(), w->include.end());
  }
  const auto v = model_.bind(tape);
  Var logits = model_.forward(v, batch, windows[0]->units);
  GroupLoss out;
  out.loss = imitation_loss(logits, targets, include, windows.size());
  out.counted = static_cast<std::size_t>(std::count(include.begin(), include.end(), 1));
  out.correct = static_cast<std::size_t>(
      std::llround(imitation_accuracy(logits.value(), targets, include) * out.counted));
  return out;
}

StepMetrics train_step(Learner& learner, RmsProp& opt, const std::vector<TrainingWindow>& windows,
                       const TrainConfig& cfg, Rng& rng) {
  if (windows.empty()) throw ConfigError("train_step needs at least one window");
  learner.params().zero_grad();
  StepMetrics m;
  m.windows = windows.size();
  std::size_t correct = 0, counted = 0;
  for (const auto& [units, idx] : group_by_units(windows)) {
    std::vector<const TrainingWindow*> group;
    for (auto i : idx) group.push_back(&windows[i]);
    Tape tape;
    GroupLoss gl = learner.group_loss(tape, group, cfg.mask, rng);
    const double share = static_cast<double>(group.size()) / static_cast<double>(windows.size());
    const double value = gl.loss.value()[0];
    if (!std::isfinite(value))
      throw NumericError("non-finite loss " + std::to_string(value) + " on a group of " +
                         std::to_string(group.size()) + " windows with " +
                         std::to_string(units) + " units");
    tape.backward(ops::scale(gl.loss, share));
    m.loss += share * value;
    correct += gl.correct;
    counted += gl.counted;
  }
  m.accuracy = counted ? static_cast<double>(correct) / static_cast<double>(counted) : 0.0;
  opt.step(learner.params(), cfg.learning_rate, cfg.weight_decay);
  return m;
}

TrainResult train(Learner& learner, const Dataset& data, const TrainConfig& cfg,
                  const EvalHook& evaluate) {
  cfg.validate();
  namespace fs = std::filesystem;
  RmsProp opt(learner.params(), cfg.rms_alpha, cfg.rms_eps);
  TrainResult result;
  result.first_step = 1;
  if (!cfg.resume.empty()) {
    const Checkpoint ck = load_checkpoint(cfg.resume);
    if (ck.kind != learner.kind()) throw ConfigError("checkpoint holds a different model kind");
    if (!(ck.config == learner.config())) throw ConfigError("checkpoint model config differs");
    restore_checkpoint(ck, learner.params(), &opt);
    result.first_step = static_cast<std::size_t>(ck.step) + 1;
  }
  std::ofstream metrics;
  if (!cfg.out_dir.empty()) {
    fs::create_directories(cfg.out_dir);
    const auto mode = cfg.resume.empty() ? std::ios::trunc : std::ios::app;
    metrics.open(fs::path(cfg.out_dir) / "metrics.jsonl", std::ios::out | mode);
    if (!metrics) throw IoError("cannot write metrics in " + cfg.out_dir);
  }
  auto save = [&](const std::string& file, std::size_t step) {
    if (cfg.out_dir.empty()) return;
    save_checkpoint((fs::path(cfg.out_dir) / file).string(),
                    make_checkpoint(learner.params(), &opt, learner.config(), learner.kind(), step));
  };
  const auto started = std::chrono::steady_clock::now();
  const std::size_t steps = learner.config().context;
  for (std::size_t s = result.first_step; s <= cfg.steps; ++s) {
    Rng rng(mix_seed(cfg.seed, s));
    const auto windows = sample_windows(data, cfg.batch, steps, rng);
    StepMetrics m = train_step(learner, opt, windows, cfg, rng);
    m.step = s;
    result.history.push_back(m);
    result.last_step = s;
    const bool last = s == cfg.steps;
    json record;
    if (metrics.is_open() && ((cfg.log_every && s % cfg.log_every == 0) || last)) {
      const double elapsed =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      record = {{"step", s},          {"loss", m.loss},       {"accuracy", m.accuracy},
                {"windows", m.windows}, {"mask", cfg.mask.str()}, {"elapsed_s", elapsed}};
    }
    if (evaluate && ((cfg.eval_every && s % cfg.eval_every == 0) || last)) {
      const EvalResult ev = evaluate(s);
      if (record.is_null()) record = {{"step", s}, {"loss", m.loss}, {"accuracy", m.accuracy}};
      record["eval_score"] = ev.score;
      for (const auto& [k, v] : ev.fields) record["eval_" + k] = v;
      if (!result.best_score || ev.score > *result.best_score) {
        result.best_score = ev.score;
        result.best_step = s;
        save("checkpoint_best.bin", s);
      }
    }
    if (metrics.is_open() && !record.is_null()) {
      metrics << record.dump() << "\n";
      metrics.flush();
    }
    if ((cfg.checkpoint_every && s % cfg.checkpoint_every == 0) || last)
      save("checkpoint_latest.bin", s);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'M', 'A', 'S', 'K', 'M', 'A', 'C', 'K'};
const std::string kOptPrefix = "rmsprop/";

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : arrays)
    if (n == name) return &t;
  return nullptr;
}

Checkpoint make_checkpoint(const ParameterStore& params, const RmsProp* opt,
                           const ModelConfig& config, std::uint32_t kind, std::uint64_t step) {
  Checkpoint ck;
  ck.config = config;
  ck.kind = kind;
  ck.step = step;
  for (const auto& p : params.all()) ck.arrays.emplace_back(p.name, p.value);
  if (opt)
    for (std::size_t k = 0; k < params.all().size(); ++k)
      ck.arrays.emplace_back(kOptPrefix + params.all()[k].name, opt->state()[k]);
  return ck;
}

void restore_checkpoint(const Checkpoint& ck, ParameterStore& params, RmsProp* opt) {
  auto& all = params.all();
  for (std::size_t k = 0; k < all.size(); ++k) {
    const Tensor* t = ck.find(all[k].name);
    if (!t) throw ConfigError("checkpoint lacks parameter '" + all[k].name + "'");
    if (t->shape() != all[k].value.shape())
      throw DimensionError("checkpoint parameter '" + all[k].name + "' has shape " +
                           shape_string(t->shape()) + ", model expects " +
                           shape_string(all[k].value.shape()));
    all[k].value = *t;
    if (opt) {
      const Tensor* s = ck.find(kOptPrefix + all[k].name);
      if (s && s->shape() == all[k].value.shape()) opt->state()[k] = *s;
    }
  }
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  ByteWriter out;
  out.put_bytes({reinterpret_cast<const std::uint8_t*>(kMagic), sizeof(kMagic)});
  out.put<std::uint32_t>(kCheckpointVersion);
  const ModelConfig& c = ck.config;
  for (std::size_t v : {c.blocks, c.hidden, c.heads, c.context, c.state_width, c.intrinsic,
                        c.max_units})
    out.put<std::uint64_t>(v);
  out.put<std::uint32_t>(ck.kind);
  out.put<std::uint64_t>(ck.step);
  out.put<std::uint32_t>(static_cast<std::uint32_t>(ck.arrays.size()));
  for (const auto& [name, t] : ck.arrays) {
    out.put_string(name);
    out.put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) out.put<std::uint64_t>(d);
    out.put_doubles(t.data());
  }
  out.put<std::uint64_t>(fnv1a64(out.bytes()));
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write checkpoint " + path);
    f.write(reinterpret_cast<const char*>(out.bytes().data()),
            static_cast<std::streamsize>(out.bytes().size()));
    if (!f) throw IoError("write failed on " + path);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  if (bytes.size() < sizeof(kMagic) + 4 + 8 ||
      std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw IoError(path + " is not a checkpoint file");
  std::uint32_t version = 0;
  std::memcpy(&version, bytes.data() + sizeof(kMagic), sizeof(version));
  if (version != kCheckpointVersion)
    throw VersionError(path + ": checkpoint version " + std::to_string(version) + ", expected " +
                       std::to_string(kCheckpointVersion));
  std::uint64_t stored = 0;
  std::memcpy(&stored, bytes.data() + bytes.size() - 8, 8);
  const std::span<const std::uint8_t> body(bytes.data(), bytes.size() - 8);
  if (fnv1a64(body) != stored) throw ChecksumError(path + ": checkpoint checksum mismatch");

  ByteReader in(body);
  in.get_bytes(sizeof(kMagic));
  in.get<std::uint32_t>();
  Checkpoint ck;
  std::size_t* fields[] = {&ck.config.blocks,      &ck.config.hidden,    &ck.config.heads,
                           &ck.config.context,     &ck.config.state_width,
                           &ck.config.intrinsic,   &ck.config.max_units};
  for (std::size_t* f : fields) *f = in.get<std::uint64_t>();
  ck.kind = in.get<std::uint32_t>();
  ck.step = in.get<std::uint64_t>();
  const auto count = in.get<std::uint32_t>();
  for (std::uint32_t k = 0; k < count; ++k) {
    std::string name = in.get_string();
    const auto rank = in.get<std::uint32_t>();
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(in.get<std::uint64_t>());
    Tensor t(shape);
    in.get_doubles(t.data());
    ck.arrays.emplace_back(std::move(name), std::move(t));
  }
  if (!in.done()) throw IoError(path + ": trailing bytes in checkpoint");
  return ck;
}

MaskMAModel load_maskma(const std::string& path) {
  const Checkpoint ck = load_checkpoint(path);
  if (ck.kind != kMaskMAKind) throw ConfigError(path + " does not hold a MaskMA model");
  MaskMAModel model(ck.config, 0);
  restore_checkpoint(ck, model.params(), nullptr);
  return model;
}

}  // namespace maskma
