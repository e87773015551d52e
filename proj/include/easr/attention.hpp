#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <variant>

#include "easr/layers.hpp"
#include "easr/ops.hpp"

namespace easr {

// Recomputes Q K^T / sqrt(d_k), adds the carried scores and applies the band
// mask of radius `window`.
struct UpdateMode {
  std::size_t window = 1;
};
// Reuses the carried scores; owns no query/key projections.
struct SharedMode {};
using LayerMode = std::variant<UpdateMode, SharedMode>;

inline bool is_update(const LayerMode& mode) { return std::holds_alternative<UpdateMode>(mode); }
std::string mode_name(const LayerMode& mode);

// Pre-softmax logits [B, h, T_q, T_k].
struct AttentionScores {
  Tensor values;
};

// Score state threaded through one stack. Empty before the first update layer.
struct ScoreState {
  std::optional<AttentionScores> residual;  // latest updated matrix, before masking
  std::optional<AttentionScores> masked;    // the same matrix after masking

  bool empty() const { return !residual.has_value(); }
};

struct MaskSpec {
  std::optional<std::size_t> window;  // band radius |i - j| <= window
  bool causal = false;
  // Per-item valid key counts; empty means every key is valid.
  std::span<const std::size_t> key_lengths;
  // Per-item valid query counts. Padded query rows skip the key-padding term
  // so no row is ever fully masked by it.
  std::span<const std::size_t> query_lengths;
};

ScoreMask build_score_mask(std::size_t batch, std::size_t rows, std::size_t cols,
                           const MaskSpec& spec);

// Band (and optionally causal) mask. The input is not modified.
AttentionScores apply_swd(const AttentionScores& scores, std::size_t window, bool causal);

// S' = raw + carried; a missing carry is the zero matrix.
AttentionScores residual_update(const AttentionScores& raw,
                                const std::optional<AttentionScores>& carried);

struct SelfAttentionOptions {
  bool causal = false;
  std::span<const std::size_t> lengths;
  // Shared layers attend with the carried matrix before band masking.
  bool share_raw_scores = false;
};

struct SrmhaResult {
  Tensor output;
  ScoreState state;
};

class SrmhaLayer {
 public:
  SrmhaLayer(std::size_t d_model, std::size_t heads, LayerMode mode, Rng& rng);

  const LayerMode& mode() const { return mode_; }
  std::size_t d_model() const { return d_model_; }
  std::size_t heads() const { return heads_; }
  std::size_t head_dim() const { return d_model_ / heads_; }

  // Update mode only.
  AttentionScores scaled_scores(const Tensor& q_in, const Tensor& k_in) const;
  // Softmax(s) V per head, heads concatenated, then the output projection.
  Tensor attend(const AttentionScores& scores, const Tensor& v_in) const;

  SrmhaResult forward(const Tensor& x, const ScoreState& carried,
                      const SelfAttentionOptions& options = {}) const;

  const std::optional<Linear>& query() const { return query_; }
  const std::optional<Linear>& key() const { return key_; }
  const Linear& value() const { return value_; }
  const Linear& output() const { return output_; }

  std::size_t parameter_count() const;
  void collect(const std::string& prefix, ParameterList& out) const;

 private:
  std::size_t d_model_;
  std::size_t heads_;
  LayerMode mode_;
  std::optional<Linear> query_;
  std::optional<Linear> key_;
  Linear value_;
  Linear output_;
};

inline SrmhaResult srmha_forward(const Tensor& x, const SrmhaLayer& layer,
                                 const ScoreState& carried, bool causal) {
  SelfAttentionOptions options;
  options.causal = causal;
  return layer.forward(x, carried, options);
}

// Standard four-projection multi-head attention. Serves as the decoder's
// cross-attention and as the baseline self-attention.
class MultiHeadAttention {
 public:
  MultiHeadAttention(std::size_t d_model, std::size_t heads, Rng& rng);

  std::size_t d_model() const { return d_model_; }
  std::size_t heads() const { return heads_; }

  Tensor forward(const Tensor& q_in, const Tensor& kv_in, const ScoreMask* mask = nullptr) const;

  const Linear& query() const { return query_; }
  const Linear& key() const { return key_; }
  const Linear& value() const { return value_; }
  const Linear& output() const { return output_; }

  std::size_t parameter_count() const;
  void collect(const std::string& prefix, ParameterList& out) const;

 private:
  std::size_t d_model_;
  std::size_t heads_;
  Linear query_;
  Linear key_;
  Linear value_;
  Linear output_;
};

inline Tensor cross_attention(const Tensor& q_in, const Tensor& kv_in,
                              const MultiHeadAttention& layer) {
  return layer.forward(q_in, kv_in);
}

}  // namespace easr
