#include "maskma/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "maskma/error.hpp"

namespace maskma {

void ModelConfig::validate() const {
  if (blocks == 0 || hidden == 0 || heads == 0 || context == 0 || state_width == 0)
    throw ConfigError("model dimensions must be positive");
  if (hidden % heads != 0)
    throw ConfigError("hidden width " + std::to_string(hidden) + " is not divisible by " +
                      std::to_string(heads) + " heads");
}

Parameter& ParameterStore::add(std::string name, Tensor value) {
  if (index_.count(name)) throw ConfigError("duplicate parameter '" + name + "'");
  index_.emplace(name, params_.size());
  Parameter p;
  p.name = std::move(name);
  p.grad = Tensor(value.shape());
  p.value = std::move(value);
  params_.push_back(std::move(p));
  return params_.back();
}

Parameter& ParameterStore::get(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ConfigError("unknown parameter '" + std::string(name) + "'");
  return params_[it->second];
}

const Parameter& ParameterStore::get(std::string_view name) const {
  return const_cast<ParameterStore*>(this)->get(name);
}

bool ParameterStore::contains(std::string_view name) const {
  return index_.count(std::string(name)) != 0;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

namespace {

Tensor random_matrix(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  Tensor t({rows, cols});
  std::normal_distribution<double> normal(0.0, stddev);
  for (double& v : t.data()) v = normal(rng);
  return t;
}

Tensor filled(std::size_t n, double value) { return Tensor({n}, value); }

std::string block_name(std::size_t b, const char* leaf) {
  return "block" + std::to_string(b) + "." + leaf;
}

template <class Store>
EncoderVars bind_encoder_impl(Tape& tape, Store& store, const ModelConfig& cfg) {
  EncoderVars enc;
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    auto p = [&](const char* leaf) { return tape.parameter(store.get(block_name(b, leaf))); };
    enc.blocks.push_back({p("ln1.gain"), p("ln1.bias"), p("attn.qkv.w"), p("attn.qkv.b"),
                          p("attn.out.w"), p("attn.out.b"), p("ln2.gain"), p("ln2.bias"),
                          p("ffn.in.w"), p("ffn.in.b"), p("ffn.out.w"), p("ffn.out.b")});
  }
  enc.final_gain = tape.parameter(store.get("final_norm.gain"));
  enc.final_bias = tape.parameter(store.get("final_norm.bias"));
  return enc;
}

template <class Store>
MaskMAModel::Vars bind_model(Tape& tape, Store& store, const ModelConfig& cfg) {
  MaskMAModel::Vars v;
  v.embed_w = tape.parameter(store.get("embed.w"));
  v.embed_b = tape.parameter(store.get("embed.b"));
  v.position = tape.parameter(store.get("embed.position"));
  v.encoder = bind_encoder_impl(tape, store, cfg);
  v.intrinsic_w = tape.parameter(store.get("head.intrinsic.w"));
  v.intrinsic_b = tape.parameter(store.get("head.intrinsic.b"));
  v.pair_w = tape.parameter(store.get("head.pair.w"));
  v.pair_b = tape.parameter(store.get("head.pair.b"));
  return v;
}

}  // namespace

void init_encoder(ParameterStore& store, const ModelConfig& cfg, Rng& rng) {
  const std::size_t d = cfg.hidden;
  const double in_std = 1.0 / std::sqrt(static_cast<double>(d));
  // Residual-branch outputs are scaled down with depth.
  const double out_std = in_std / std::sqrt(2.0 * static_cast<double>(cfg.blocks));
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    store.add(block_name(b, "ln1.gain"), filled(d, 1.0));
    store.add(block_name(b, "ln1.bias"), filled(d, 0.0));
    store.add(block_name(b, "attn.qkv.w"), random_matrix(d, 3 * d, in_std, rng));
    store.add(block_name(b, "attn.qkv.b"), filled(3 * d, 0.0));
    store.add(block_name(b, "attn.out.w"), random_matrix(d, d, out_std, rng));
    store.add(block_name(b, "attn.out.b"), filled(d, 0.0));
    store.add(block_name(b, "ln2.gain"), filled(d, 1.0));
    store.add(block_name(b, "ln2.bias"), filled(d, 0.0));
    store.add(block_name(b, "ffn.in.w"), random_matrix(d, 4 * d, in_std, rng));
    store.add(block_name(b, "ffn.in.b"), filled(4 * d, 0.0));
    store.add(block_name(b, "ffn.out.w"),
              random_matrix(4 * d, d, out_std / 2.0, rng));
    store.add(block_name(b, "ffn.out.b"), filled(d, 0.0));
  }
  store.add("final_norm.gain", filled(d, 1.0));
  store.add("final_norm.bias", filled(d, 0.0));
}

EncoderVars bind_encoder(Tape& tape, ParameterStore& store, const ModelConfig& cfg) {
  return bind_encoder_impl(tape, store, cfg);
}

EncoderVars bind_encoder(Tape& tape, const ParameterStore& store, const ModelConfig& cfg) {
  return bind_encoder_impl(tape, store, cfg);
}

Var encode(const EncoderVars& enc, Var x, std::span<const BoolMatrix* const> masks,
           std::size_t tokens, std::size_t heads) {
  for (const BlockVars& b : enc.blocks) {
    Var normed = ops::layer_norm(x, b.ln1_gain, b.ln1_bias);
    Var qkv = ops::linear(normed, b.qkv_w, b.qkv_b);
    Var attended = ops::attention(qkv, masks, tokens, heads);
    x = ops::add(x, ops::linear(attended, b.out_w, b.out_b));
    Var normed2 = ops::layer_norm(x, b.ln2_gain, b.ln2_bias);
    Var expanded = ops::gelu(ops::linear(normed2, b.ff1_w, b.ff1_b));
    x = ops::add(x, ops::linear(expanded, b.ff2_w, b.ff2_b));
  }
  return ops::layer_norm(x, enc.final_gain, enc.final_bias);
}

std::vector<const BoolMatrix*> TokenBatch::mask_ptrs() const {
  std::vector<const BoolMatrix*> out;
  out.reserve(masks.size());
  for (const auto& m : masks) out.push_back(&m);
  return out;
}

std::vector<double> GarLogits::probabilities() const {
  std::vector<double> p(size(), 0.0);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < size(); ++a)
    if (available[a]) mx = std::max(mx, logit(a));
  if (mx == -std::numeric_limits<double>::infinity()) throw Error("no available action");
  double total = 0.0;
  for (std::size_t a = 0; a < size(); ++a)
    if (available[a]) total += (p[a] = std::exp(logit(a) - mx));
  for (double& v : p) v /= total;
  return p;
}

ActionId select_action(const GarLogits& logits, SelectMode mode, Rng& rng) {
  if (logits.available.size() != logits.size())
    throw DimensionError("availability length does not match logits");
  if (mode == SelectMode::kArgmax) {
    std::optional<std::size_t> best;
    for (std::size_t a = 0; a < logits.size(); ++a) {
      if (!logits.available[a]) continue;
      if (!best || logits.logit(a) > logits.logit(*best)) best = a;
    }
    if (!best) throw Error("no available action");
    return {*best};
  }
  const std::vector<double> p = logits.probabilities();
  std::discrete_distribution<std::size_t> dist(p.begin(), p.end());
  return {dist(rng)};
}

MaskMAModel::MaskMAModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const std::size_t d = cfg.hidden;
  params_.add("embed.w", random_matrix(cfg.state_width, d,
                                       1.0 / std::sqrt(static_cast<double>(cfg.state_width)), rng));
  params_.add("embed.b", filled(d, 0.0));
  params_.add("embed.position", random_matrix(cfg.context, d, 0.02, rng));
  init_encoder(params_, cfg, rng);
  const double head_std = 0.1 / std::sqrt(static_cast<double>(d));
  params_.add("head.intrinsic.w", random_matrix(d, cfg.intrinsic, head_std, rng));
  params_.add("head.intrinsic.b", filled(cfg.intrinsic, 0.0));
  // Column 0 weighs the executor embedding, column 1 the receiver; together
  // they are the single-output layer over the concatenated pair.
  params_.add("head.pair.w", random_matrix(d, 2, head_std, rng));
  params_.add("head.pair.b", filled(1, 0.0));
}

MaskMAModel::Vars MaskMAModel::bind(Tape& tape) { return bind_model(tape, params_, cfg_); }

MaskMAModel::Vars MaskMAModel::bind(Tape& tape) const { return bind_model(tape, params_, cfg_); }

Var MaskMAModel::embed(const Vars& v, const TokenBatch& batch) const {
  if (batch.states.cols() != cfg_.state_width)
    throw DimensionError("state width " + std::to_string(batch.states.cols()) +
                         " does not match model width " + std::to_string(cfg_.state_width));
  if (batch.states.rows() != batch.batch * batch.tokens ||
      batch.step_index.size() != batch.states.rows())
    throw DimensionError("token batch has inconsistent row counts");
  Tape& tape = *v.embed_w.tape;
  Var states = tape.constant(batch.states);
  Var projected = ops::linear(states, v.embed_w, v.embed_b);
  return ops::add(projected, ops::embedding(v.position, batch.step_index));
}

Var MaskMAModel::encode(const Vars& v, Var tokens, const TokenBatch& batch) const {
  const auto masks = batch.mask_ptrs();
  return maskma::encode(v.encoder, tokens, masks, batch.tokens, cfg_.heads);
}

Var MaskMAModel::gar_logits(const Vars& v, Var hidden, std::size_t units) const {
  Var intrinsic = ops::linear(hidden, v.intrinsic_w, v.intrinsic_b);
  Tape& tape = *hidden.tape;
  Var uv = ops::linear(hidden, v.pair_w, tape.constant(Tensor({2}, 0.0)));
  Var interactive = ops::pair_logits(uv, v.pair_b, units);
  return ops::concat_cols(intrinsic, interactive);
}

Var MaskMAModel::forward(const Vars& v, const TokenBatch& batch, std::size_t units) const {
  if (batch.tokens % units != 0)
    throw DimensionError("token count " + std::to_string(batch.tokens) +
                         " is not a whole number of timesteps of " + std::to_string(units));
  return gar_logits(v, encode(v, embed(v, batch), batch), units);
}

Tensor MaskMAModel::hidden(const TokenBatch& batch) const {
  Tape tape(false);
  const Vars v = bind(tape);
  return encode(v, embed(v, batch), batch).value();
}

GarLogits MaskMAModel::head_logits(const Tensor& hidden, std::size_t self,
                                   std::span<const std::size_t> receivers) const {
  const std::size_t d = cfg_.hidden;
  if (hidden.cols() != d) throw DimensionError("hidden width does not match model");
  const Tensor& wi = params_.get("head.intrinsic.w").value;
  const Tensor& bi = params_.get("head.intrinsic.b").value;
  const Tensor& wp = params_.get("head.pair.w").value;
  const double bp = params_.get("head.pair.b").value[0];
  GarLogits out;
  out.intrinsic.assign(cfg_.intrinsic, 0.0);
  const auto h = hidden.row(self);
  for (std::size_t k = 0; k < cfg_.intrinsic; ++k) {
    double acc = bi[k];
    for (std::size_t c = 0; c < d; ++c) acc += h[c] * wi.at(c, k);
    out.intrinsic[k] = acc;
  }
  double executor = 0.0;
  for (std::size_t c = 0; c < d; ++c) executor += h[c] * wp.at(c, 0);
  out.interactive.reserve(receivers.size());
  for (std::size_t r : receivers) {
    const auto hr = hidden.row(r);
    double receiver = 0.0;
    for (std::size_t c = 0; c < d; ++c) receiver += hr[c] * wp.at(c, 1);
    out.interactive.push_back(executor + receiver + bp);
  }
  out.available.assign(out.size(), 1);
  return out;
}

Var imitation_loss(Var logits, std::span<const int> targets,
                   std::span<const std::uint8_t> include, std::size_t batch) {
  const std::size_t rows = logits.value().rows();
  if (targets.size() != rows || include.size() != rows || batch == 0 || rows % batch != 0)
    throw DimensionError("imitation_loss: inconsistent row counts");
  const std::size_t per_block = rows / batch;
  std::vector<double> weights(rows, 0.0);
  std::size_t live_blocks = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    const auto first = include.begin() + static_cast<std::ptrdiff_t>(b * per_block);
    const auto n = std::count(first, first + static_cast<std::ptrdiff_t>(per_block), 1);
    if (n > 0) ++live_blocks;
  }
  if (live_blocks == 0) throw Error("imitation_loss: no included agent in the batch");
  for (std::size_t b = 0; b < batch; ++b) {
    const auto first = include.begin() + static_cast<std::ptrdiff_t>(b * per_block);
    const auto n = std::count(first, first + static_cast<std::ptrdiff_t>(per_block), 1);
    if (n == 0) continue;
    const double w = 1.0 / (static_cast<double>(n) * static_cast<double>(live_blocks));
    for (std::size_t r = b * per_block; r < (b + 1) * per_block; ++r)
      if (include[r]) weights[r] = w;
  }
  return ops::cross_entropy(logits, targets, weights);
}

double imitation_accuracy(const Tensor& logits, std::span<const int> targets,
                          std::span<const std::uint8_t> include) {
  std::size_t hits = 0, total = 0;
  const std::size_t cols = logits.cols();
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    if (!include[r]) continue;
    const double* row = logits.ptr() + r * cols;
    const auto best = static_cast<int>(std::max_element(row, row + cols) - row);
    hits += best == targets[r];
    ++total;
  }
  return total ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
}

}  // namespace maskma
