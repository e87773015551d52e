#include "easr/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "easr/errors.hpp"
#include "easr/ops.hpp"

namespace easr {
namespace {

// Attributes FLOPs to `block` while a FlopProfile is installed.
class BlockScope {
 public:
  BlockScope(const std::string& prefix, const char* block) {
    if (!prefix.empty() && FlopProfile::active()) scope_.emplace(prefix + "." + block);
  }

 private:
  std::optional<FlopScope> scope_;
};

Tensor maybe_dropout(const Tensor& x, double p, RunContext& ctx) {
  if (!ctx.training || ctx.rng == nullptr || p <= 0.0) return x;
  return dropout(x, p, *ctx.rng);
}

std::optional<LayerMode> mode_or_none(const ModelConfig& cfg, const LayerSchedule& schedule,
                                      std::size_t layer) {
  if (cfg.variant == Variant::kTransformer) return std::nullopt;
  return schedule.modes[layer];
}

}  // namespace

std::size_t LayerSchedule::update_count() const {
  return static_cast<std::size_t>(std::count_if(modes.begin(), modes.end(), is_update));
}

std::string LayerSchedule::to_string() const {
  std::string s;
  for (const auto& m : modes) s += is_update(m) ? 'U' : 'S';
  return s;
}

LayerSchedule build_schedule(std::size_t layers, std::size_t period, std::size_t window) {
  if (period < 1) throw ConfigError("update period must be >= 1");
  if (layers < 1) throw ConfigError("a stack needs at least one layer");
  if (period > layers) {
    throw ConfigError("update period " + std::to_string(period) + " exceeds layer count " +
                      std::to_string(layers));
  }
  LayerSchedule s;
  s.modes.reserve(layers);
  for (std::size_t l = 0; l < layers; ++l) {
    if (l % period == 0) {
      s.modes.emplace_back(UpdateMode{window});
    } else {
      s.modes.emplace_back(SharedMode{});
    }
  }
  return s;
}

std::vector<std::size_t> Batch::target_lengths() const {
  std::vector<std::size_t> out;
  out.reserve(targets.size());
  for (const auto& t : targets) out.push_back(t.size());
  return out;
}

SelfAttention::SelfAttention(std::size_t d_model, std::size_t heads,
                             std::optional<LayerMode> mode, Rng& rng) {
  if (mode) {
    srmha_.emplace(d_model, heads, *mode, rng);
  } else {
    mha_.emplace(d_model, heads, rng);
  }
}

Tensor SelfAttention::forward(const Tensor& x, ScoreState& state, bool causal,
                              std::span<const std::size_t> lengths, bool share_raw_scores) const {
  if (srmha_) {
    SrmhaResult r = srmha_->forward(
        x, state,
        SelfAttentionOptions{.causal = causal, .lengths = lengths, .share_raw_scores = share_raw_scores});
    state = std::move(r.state);
    return std::move(r.output);
  }
  const std::size_t B = x.dim(0), T = x.dim(1);
  if (!causal && lengths.empty()) return mha_->forward(x, x);
  const ScoreMask mask = build_score_mask(
      B, T, T, MaskSpec{.causal = causal, .key_lengths = lengths, .query_lengths = lengths});
  return mha_->forward(x, x, &mask);
}

std::size_t SelfAttention::parameter_count() const {
  return srmha_ ? srmha_->parameter_count() : mha_->parameter_count();
}

void SelfAttention::collect(const std::string& prefix, ParameterList& out) const {
  if (srmha_) {
    srmha_->collect(prefix, out);
  } else {
    mha_->collect(prefix, out);
  }
}

EncoderLayer::EncoderLayer(const ModelConfig& cfg, std::optional<LayerMode> mode, Rng& rng)
    : dropout_(cfg.dropout),
      share_raw_scores_(cfg.share_raw_scores),
      self_attn_(cfg.d_model, cfg.heads, mode, rng),
      norm1_(cfg.d_model),
      ffn_(cfg.d_model, cfg.d_ff, cfg.variant == Variant::kTransformer ? 1 : cfg.n_chunks, rng),
      norm2_(cfg.d_model) {}

Tensor EncoderLayer::forward(const Tensor& x, ScoreState& state,
                             std::span<const std::size_t> lengths, RunContext& ctx,
                             const std::string& name) const {
  Tensor attn;
  {
    BlockScope scope(name, "self_attention");
    attn = self_attn_.forward(x, state, /*causal=*/false, lengths, share_raw_scores_);
  }
  const Tensor h = norm1_(add(x, maybe_dropout(attn, dropout_, ctx)));
  Tensor ff;
  {
    BlockScope scope(name, "ffn");
    ff = ffn_(h);
  }
  return norm2_(add(h, maybe_dropout(ff, dropout_, ctx)));
}

std::size_t EncoderLayer::parameter_count() const {
  return self_attn_.parameter_count() + norm1_.parameter_count() + ffn_.parameter_count() +
         norm2_.parameter_count();
}

void EncoderLayer::collect(const std::string& prefix, ParameterList& out) const {
  self_attn_.collect(prefix + ".self_attention", out);
  norm1_.collect(prefix + ".norm1", out);
  ffn_.collect(prefix + ".ffn", out);
  norm2_.collect(prefix + ".norm2", out);
}

DecoderLayer::DecoderLayer(const ModelConfig& cfg, std::optional<LayerMode> mode, Rng& rng)
    : dropout_(cfg.dropout),
      share_raw_scores_(cfg.share_raw_scores),
      self_attn_(cfg.d_model, cfg.heads, mode, rng),
      norm1_(cfg.d_model),
      cross_attn_(cfg.d_model, cfg.heads, rng),
      norm2_(cfg.d_model),
      ffn_(cfg.d_model, cfg.d_ff, cfg.variant == Variant::kTransformer ? 1 : cfg.n_chunks, rng),
      norm3_(cfg.d_model) {}

Tensor DecoderLayer::forward(const Tensor& y, const Tensor& memory, ScoreState& state,
                             std::span<const std::size_t> lengths,
                             std::span<const std::size_t> memory_lengths, RunContext& ctx,
                             const std::string& name) const {
  Tensor attn;
  {
    BlockScope scope(name, "self_attention");
    attn = self_attn_.forward(y, state, /*causal=*/true, lengths, share_raw_scores_);
  }
  const Tensor h1 = norm1_(add(y, maybe_dropout(attn, dropout_, ctx)));
  Tensor cross;
  {
    BlockScope scope(name, "cross_attention");
    if (memory_lengths.empty()) {
      cross = cross_attn_.forward(h1, memory);
    } else {
      const ScoreMask mask = build_score_mask(h1.dim(0), h1.dim(1), memory.dim(1),
                                              MaskSpec{.key_lengths = memory_lengths});
      cross = cross_attn_.forward(h1, memory, &mask);
    }
  }
  const Tensor h2 = norm2_(add(h1, maybe_dropout(cross, dropout_, ctx)));
  Tensor ff;
  {
    BlockScope scope(name, "ffn");
    ff = ffn_(h2);
  }
  return norm3_(add(h2, maybe_dropout(ff, dropout_, ctx)));
}

std::size_t DecoderLayer::parameter_count() const {
  return self_attn_.parameter_count() + norm1_.parameter_count() +
         cross_attn_.parameter_count() + norm2_.parameter_count() + ffn_.parameter_count() +
         norm3_.parameter_count();
}

void DecoderLayer::collect(const std::string& prefix, ParameterList& out) const {
  self_attn_.collect(prefix + ".self_attention", out);
  norm1_.collect(prefix + ".norm1", out);
  cross_attn_.collect(prefix + ".cross_attention", out);
  norm2_.collect(prefix + ".norm2", out);
  ffn_.collect(prefix + ".ffn", out);
  norm3_.collect(prefix + ".norm3", out);
}

Tensor label_smoothed_ce(const Tensor& logits, const std::vector<std::vector<int>>& targets,
                         double smoothing) {
  if (logits.rank() != 3 || logits.dim(0) != targets.size()) {
    throw DimensionError("label_smoothed_ce: logits " + shape_to_string(logits.shape()) +
                         " for " + std::to_string(targets.size()) + " targets");
  }
  const std::size_t B = logits.dim(0), T = logits.dim(1), V = logits.dim(2);
  const Tensor logp = log_softmax_rows(logits);
  std::vector<double> weights(logp.numel(), 0.0);
  const double inv_b = 1.0 / static_cast<double>(B);
  const double off = V > 1 ? smoothing / static_cast<double>(V - 1) : 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    if (targets[b].size() > T) throw DimensionError("target longer than decoder output");
    for (std::size_t t = 0; t < targets[b].size(); ++t) {
      const int y = targets[b][t];
      if (y < 0 || static_cast<std::size_t>(y) >= V) {
        throw VocabError("target id " + std::to_string(y) + " outside vocabulary");
      }
      double* w = weights.data() + (b * T + t) * V;
      for (std::size_t k = 0; k < V; ++k) w[k] = -off * inv_b;
      w[static_cast<std::size_t>(y)] = -(1.0 - smoothing) * inv_b;
    }
  }
  return weighted_sum(logp, weights);
}

LossBreakdown joint_loss(const Tensor& ce, const CtcLoss& ctc, double alpha_ce, double alpha_ctc) {
  LossBreakdown out;
  out.ce = ce.item();
  out.ctc = ctc.value.item();
  out.feasible = ctc.all_feasible();
  if (!out.feasible) {
    out.total = Tensor::scalar(std::numeric_limits<double>::infinity());
    return out;
  }
  out.total = add(scale(ce, alpha_ce), scale(ctc.value, alpha_ctc));
  return out;
}

std::vector<std::vector<int>> decoder_inputs(const std::vector<std::vector<int>>& targets) {
  std::vector<std::vector<int>> out;
  out.reserve(targets.size());
  for (const auto& t : targets) {
    std::vector<int> seq{kSosId};
    seq.insert(seq.end(), t.begin(), t.end());
    out.push_back(std::move(seq));
  }
  return out;
}

std::vector<std::vector<int>> decoder_outputs(const std::vector<std::vector<int>>& targets) {
  std::vector<std::vector<int>> out;
  out.reserve(targets.size());
  for (const auto& t : targets) {
    std::vector<int> seq(t.begin(), t.end());
    seq.push_back(kEosId);
    out.push_back(std::move(seq));
  }
  return out;
}

Model::Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  enc_schedule_ = build_schedule(cfg_.enc_layers, cfg_.i_enc, cfg_.window);
  dec_schedule_ = build_schedule(cfg_.dec_layers, cfg_.i_dec, cfg_.window);
  input_ = Linear(cfg_.feature_dim, cfg_.d_model, rng);
  encoder_.reserve(cfg_.enc_layers);
  for (std::size_t l = 0; l < cfg_.enc_layers; ++l) {
    encoder_.emplace_back(cfg_, mode_or_none(cfg_, enc_schedule_, l), rng);
  }
  {
    // N(0, 1/d) rows so that the sqrt(d) input scaling gives unit-scale embeddings.
    const double stddev = 1.0 / std::sqrt(static_cast<double>(cfg_.d_model));
    Buffer table(cfg_.vocab_size * cfg_.d_model);
    for (auto& v : table) v = stddev * rng.normal();
    embedding_ = Tensor(Shape{cfg_.vocab_size, cfg_.d_model}, std::move(table), true);
  }
  decoder_.reserve(cfg_.dec_layers);
  for (std::size_t l = 0; l < cfg_.dec_layers; ++l) {
    decoder_.emplace_back(cfg_, mode_or_none(cfg_, dec_schedule_, l), rng);
  }
  output_ = Linear(cfg_.d_model, cfg_.vocab_size, rng);
  ctc_head_ = Linear(cfg_.d_model, cfg_.vocab_size, rng);
}

Tensor Model::encode(const Tensor& features, std::span<const std::size_t> lengths,
                     RunContext& ctx) const {
  if (features.rank() != 3 || features.dim(2) != cfg_.feature_dim) {
    throw DimensionError("features must be [B,T," + std::to_string(cfg_.feature_dim) + "], got " +
                         shape_to_string(features.shape()));
  }
  const std::size_t T = features.dim(1);
  if (!lengths.empty()) {
    if (lengths.size() != features.dim(0)) throw DimensionError("feature_lengths do not match batch");
    for (auto len : lengths) {
      if (len == 0) throw DimensionError("empty input sequence");
      if (len > T) throw DimensionError("feature length exceeds padded extent");
    }
  }
  Tensor x;
  {
    BlockScope scope(FlopProfile::active() ? "encoder" : "", "input");
    x = input_(features);
  }
  x = add(x, sinusoidal_positions(T, cfg_.d_model));
  x = maybe_dropout(x, cfg_.dropout, ctx);
  ScoreState state;
  const bool profiling = FlopProfile::active() != nullptr;
  for (std::size_t l = 0; l < encoder_.size(); ++l) {
    x = encoder_[l].forward(x, state, lengths, ctx,
                            profiling ? "encoder." + std::to_string(l) : std::string{});
  }
  return x;
}

Tensor Model::encode(const Tensor& features) const {
  RunContext ctx;
  return encode(features, {}, ctx);
}

Tensor Model::decode(const std::vector<std::vector<int>>& tokens, const Tensor& memory,
                     std::span<const std::size_t> memory_lengths, RunContext& ctx) const {
  const std::size_t B = tokens.size();
  if (B == 0 || memory.rank() != 3 || memory.dim(0) != B) {
    throw DimensionError("decoder batch does not match encoder memory " +
                         shape_to_string(memory.shape()));
  }
  std::size_t steps = 0;
  std::vector<std::size_t> lengths(B);
  for (std::size_t b = 0; b < B; ++b) {
    if (tokens[b].empty()) throw DimensionError("decoder input must contain at least sos");
    lengths[b] = tokens[b].size();
    steps = std::max(steps, lengths[b]);
  }
  const bool ragged = std::any_of(lengths.begin(), lengths.end(),
                                  [steps](std::size_t n) { return n != steps; });
  std::vector<int> ids(B * steps, kEosId);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < tokens[b].size(); ++t) {
      const int id = tokens[b][t];
      if (id < 0 || static_cast<std::size_t>(id) >= cfg_.vocab_size) {
        throw VocabError("token id " + std::to_string(id) + " outside vocabulary of " +
                         std::to_string(cfg_.vocab_size));
      }
      ids[b * steps + t] = id;
    }
  }
  Tensor y = embedding(embedding_, ids, B, steps);
  y = add(scale(y, std::sqrt(static_cast<double>(cfg_.d_model))),
          sinusoidal_positions(steps, cfg_.d_model));
  y = maybe_dropout(y, cfg_.dropout, ctx);
  ScoreState state;
  const bool profiling = FlopProfile::active() != nullptr;
  const std::span<const std::size_t> dec_lengths =
      ragged ? std::span<const std::size_t>(lengths) : std::span<const std::size_t>{};
  for (std::size_t l = 0; l < decoder_.size(); ++l) {
    y = decoder_[l].forward(y, memory, state, dec_lengths, memory_lengths, ctx,
                            profiling ? "decoder." + std::to_string(l) : std::string{});
  }
  BlockScope scope(profiling ? "decoder" : "", "output");
  return output_(y);
}

Tensor Model::ctc_log_probs(const Tensor& memory) const {
  BlockScope scope(FlopProfile::active() ? "ctc" : "", "head");
  return log_softmax_rows(ctc_head_(memory));
}

LossBreakdown Model::loss(const Batch& batch, RunContext& ctx) const {
  if (batch.size() == 0 || batch.targets.size() != batch.size()) {
    throw DimensionError("batch targets do not match feature lengths");
  }
  const Tensor memory = encode(batch.features, batch.feature_lengths, ctx);
  const CtcLoss ctc = ctc_loss(ctc_log_probs(memory), batch.targets, batch.feature_lengths, kBlankId);
  const Tensor logits = decode(decoder_inputs(batch.targets), memory, batch.feature_lengths, ctx);
  const Tensor ce = label_smoothed_ce(logits, decoder_outputs(batch.targets), cfg_.label_smoothing);
  return joint_loss(ce, ctc, cfg_.alpha_ce, cfg_.alpha_ctc);
}

std::vector<std::vector<int>> Model::greedy_decode(const Tensor& features,
                                                   std::span<const std::size_t> lengths,
                                                   std::size_t max_len) const {
  NoGradGuard no_grad;
  RunContext ctx;
  const Tensor memory = encode(features, lengths, ctx);
  const std::size_t B = features.dim(0);
  std::vector<std::vector<int>> seqs(B, std::vector<int>{kSosId});
  std::vector<bool> done(B, false);
  for (std::size_t step = 0; step < max_len; ++step) {
    if (std::all_of(done.begin(), done.end(), [](bool d) { return d; })) break;
    const Tensor logits = decode(seqs, memory, lengths, ctx);
    const std::size_t steps = logits.dim(1), V = logits.dim(2);
    const double* ld = logits.data().data();
    for (std::size_t b = 0; b < B; ++b) {
      if (done[b]) continue;
      const double* row = ld + (b * steps + seqs[b].size() - 1) * V;
      const int best = static_cast<int>(std::max_element(row, row + V) - row);
      if (best == kEosId) {
        done[b] = true;
      } else {
        seqs[b].push_back(best);
      }
    }
  }
  for (auto& s : seqs) s.erase(s.begin());
  return seqs;
}

ParameterList Model::parameters() const {
  ParameterList out;
  input_.collect("encoder.input", out);
  for (std::size_t l = 0; l < encoder_.size(); ++l) encoder_[l].collect("encoder." + std::to_string(l), out);
  out.push_back({"decoder.embedding", embedding_});
  for (std::size_t l = 0; l < decoder_.size(); ++l) decoder_[l].collect("decoder." + std::to_string(l), out);
  output_.collect("decoder.output", out);
  ctc_head_.collect("ctc.head", out);
  return out;
}

std::size_t Model::parameter_count() const { return count_scalars(parameters()); }

}  // namespace easr
