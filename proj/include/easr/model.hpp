#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "easr/attention.hpp"
#include "easr/cffn.hpp"
#include "easr/config.hpp"
#include "easr/ctc.hpp"
#include "easr/layers.hpp"

namespace easr {

struct LayerSchedule {
  std::vector<LayerMode> modes;

  std::size_t size() const { return modes.size(); }
  std::size_t update_count() const;
  std::string to_string() const;  // e.g. "USSUSS"
};

// Update at layers l with l % period == 0, shared elsewhere.
LayerSchedule build_schedule(std::size_t layers, std::size_t period, std::size_t window = 1);

struct Batch {
  Tensor features;  // [B, T_in, feature_dim], zero padded
  std::vector<std::size_t> feature_lengths;
  std::vector<std::vector<int>> targets;  // symbol ids, no sos/eos

  std::size_t size() const { return feature_lengths.size(); }
  std::vector<std::size_t> target_lengths() const;
};

// Dropout is applied only when training is set and rng is provided.
struct RunContext {
  bool training = false;
  Rng* rng = nullptr;
};

// Self-attention of one layer: SRMHA for the efficient variant, standard MHA
// for the baseline.
class SelfAttention {
 public:
  SelfAttention(std::size_t d_model, std::size_t heads, std::optional<LayerMode> mode, Rng& rng);

  // Threads `state` for SRMHA; the baseline ignores it.
  Tensor forward(const Tensor& x, ScoreState& state, bool causal,
                 std::span<const std::size_t> lengths, bool share_raw_scores) const;

  bool is_srmha() const { return srmha_.has_value(); }
  const std::optional<SrmhaLayer>& srmha() const { return srmha_; }
  const std::optional<MultiHeadAttention>& mha() const { return mha_; }
  std::size_t parameter_count() const;
  void collect(const std::string& prefix, ParameterList& out) const;

 private:
  std::optional<SrmhaLayer> srmha_;
  std::optional<MultiHeadAttention> mha_;
};

// Post-norm layers: x = LN(x + Dropout(sublayer(x))).
class EncoderLayer {
 public:
  EncoderLayer(const ModelConfig& cfg, std::optional<LayerMode> mode, Rng& rng);

  Tensor forward(const Tensor& x, ScoreState& state, std::span<const std::size_t> lengths,
                 RunContext& ctx, const std::string& name = {}) const;

  const SelfAttention& self_attention() const { return self_attn_; }
  const LayerNorm& norm1() const { return norm1_; }
  const CffnBlock& ffn() const { return ffn_; }
  const LayerNorm& norm2() const { return norm2_; }
  std::size_t parameter_count() const;
  void collect(const std::string& prefix, ParameterList& out) const;

 private:
  double dropout_;
  bool share_raw_scores_;
  SelfAttention self_attn_;
  LayerNorm norm1_;
  CffnBlock ffn_;
  LayerNorm norm2_;
};

class DecoderLayer {
 public:
  DecoderLayer(const ModelConfig& cfg, std::optional<LayerMode> mode, Rng& rng);

  Tensor forward(const Tensor& y, const Tensor& memory, ScoreState& state,
                 std::span<const std::size_t> lengths, std::span<const std::size_t> memory_lengths,
                 RunContext& ctx, const std::string& name = {}) const;

  const SelfAttention& self_attention() const { return self_attn_; }
  const LayerNorm& norm1() const { return norm1_; }
  const MultiHeadAttention& cross_attention() const { return cross_attn_; }
  const LayerNorm& norm2() const { return norm2_; }
  const CffnBlock& ffn() const { return ffn_; }
  const LayerNorm& norm3() const { return norm3_; }
  std::size_t parameter_count() const;
  void collect(const std::string& prefix, ParameterList& out) const;

 private:
  double dropout_;
  bool share_raw_scores_;
  SelfAttention self_attn_;
  LayerNorm norm1_;
  MultiHeadAttention cross_attn_;
  LayerNorm norm2_;
  CffnBlock ffn_;
  LayerNorm norm3_;
};

struct LossBreakdown {
  Tensor total;
  double ce = 0.0;
  double ctc = 0.0;
  bool feasible = true;
};

// Cross-entropy with uniform label smoothing over the other V-1 classes,
// summed over valid positions and divided by the batch size.
Tensor label_smoothed_ce(const Tensor& logits, const std::vector<std::vector<int>>& targets,
                         double smoothing);

// alpha_ce * ce + alpha_ctc * ctc. An infeasible CTC term makes the result
// infeasible (+inf, no gradient).
LossBreakdown joint_loss(const Tensor& ce, const CtcLoss& ctc, double alpha_ce, double alpha_ctc);

// Teacher-forcing pairs: input = sos + y, output = y + eos.
std::vector<std::vector<int>> decoder_inputs(const std::vector<std::vector<int>>& targets);
std::vector<std::vector<int>> decoder_outputs(const std::vector<std::vector<int>>& targets);

class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  const LayerSchedule& encoder_schedule() const { return enc_schedule_; }
  const LayerSchedule& decoder_schedule() const { return dec_schedule_; }

  // features [B, T, feature_dim] -> [B, T, d_model]
  Tensor encode(const Tensor& features, std::span<const std::size_t> lengths,
                RunContext& ctx) const;
  Tensor encode(const Tensor& features) const;

  // tokens: per-item id sequences (already including sos). Right-padded with
  // eos internally. Returns logits [B, T_d, V].
  Tensor decode(const std::vector<std::vector<int>>& tokens, const Tensor& memory,
                std::span<const std::size_t> memory_lengths, RunContext& ctx) const;

  Tensor ctc_log_probs(const Tensor& memory) const;

  LossBreakdown loss(const Batch& batch, RunContext& ctx) const;

  std::vector<std::vector<int>> greedy_decode(const Tensor& features,
                                              std::span<const std::size_t> lengths,
                                              std::size_t max_len) const;

  ParameterList parameters() const;
  std::size_t parameter_count() const;

  const Linear& input_projection() const { return input_; }
  const std::vector<EncoderLayer>& encoder_layers() const { return encoder_; }
  const Tensor& token_embedding() const { return embedding_; }
  const std::vector<DecoderLayer>& decoder_layers() const { return decoder_; }
  const Linear& output_projection() const { return output_; }
  const Linear& ctc_projection() const { return ctc_head_; }

 private:
  ModelConfig cfg_;
  LayerSchedule enc_schedule_;
  LayerSchedule dec_schedule_;
  Linear input_;
  std::vector<EncoderLayer> encoder_;
  Tensor embedding_;
  std::vector<DecoderLayer> decoder_;
  Linear output_;
  Linear ctc_head_;
};

}  // namespace easr
