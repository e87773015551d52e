#include "easr/attention.hpp"

#include <cmath>

#include "easr/errors.hpp"

namespace easr {
namespace {

void check_heads(std::size_t d_model, std::size_t heads) {
  if (heads == 0 || d_model % heads != 0) {
    throw DivisibilityError("head count " + std::to_string(heads) + " does not divide d_model " +
                            std::to_string(d_model));
  }
}

void check_input(const Tensor& x, std::size_t d_model, const char* what) {
  if (x.rank() != 3 || x.dim(2) != d_model) {
    throw DimensionError(std::string(what) + " expects [B,T," + std::to_string(d_model) +
                         "], got " + shape_to_string(x.shape()));
  }
}

Tensor head_scores(const Tensor& q, const Tensor& k, std::size_t heads) {
  const Tensor qh = split_heads(q, heads);
  const Tensor kh = split_heads(k, heads);
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(q.dim(2) / heads));
  return scale(matmul(qh, transpose_last2(kh)), inv_sqrt_dk);
}

Tensor weighted_values(const Tensor& scores, const Tensor& v, std::size_t heads) {
  return merge_heads(matmul(softmax_rows(scores), split_heads(v, heads)));
}

}  // namespace

std::string mode_name(const LayerMode& mode) {
  if (const auto* u = std::get_if<UpdateMode>(&mode)) return "update(w=" + std::to_string(u->window) + ")";
  return "shared";
}

ScoreMask build_score_mask(std::size_t batch, std::size_t rows, std::size_t cols,
                           const MaskSpec& spec) {
  if (!spec.key_lengths.empty() && spec.key_lengths.size() != batch) {
    throw DimensionError("key_lengths has " + std::to_string(spec.key_lengths.size()) +
                         " entries for batch " + std::to_string(batch));
  }
  if (!spec.query_lengths.empty() && spec.query_lengths.size() != batch) {
    throw DimensionError("query_lengths has " + std::to_string(spec.query_lengths.size()) +
                         " entries for batch " + std::to_string(batch));
  }
  ScoreMask mask{batch, rows, cols, std::vector<std::uint8_t>(batch * rows * cols, 1)};
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t klen = spec.key_lengths.empty() ? cols : spec.key_lengths[b];
    const std::size_t qlen = spec.query_lengths.empty() ? rows : spec.query_lengths[b];
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) {
        bool keep = true;
        if (spec.window) {
          const std::size_t dist = i > j ? i - j : j - i;
          keep = dist <= *spec.window;
        }
        if (spec.causal && j > i) keep = false;
        if (i < qlen && j >= klen) keep = false;
        mask.keep[(b * rows + i) * cols + j] = keep ? 1 : 0;
      }
    }
  }
  return mask;
}

AttentionScores apply_swd(const AttentionScores& scores, std::size_t window, bool causal) {
  if (window < 1) throw ConfigError("window radius must be >= 1");
  const Tensor& s = scores.values;
  if (s.rank() != 4) throw DimensionError("scores must be [B,h,T_q,T_k], got " + shape_to_string(s.shape()));
  const ScoreMask mask =
      build_score_mask(s.dim(0), s.dim(2), s.dim(3), MaskSpec{.window = window, .causal = causal});
  return {mask_scores(s, mask)};
}

AttentionScores residual_update(const AttentionScores& raw,
                                const std::optional<AttentionScores>& carried) {
  if (!carried) return raw;
  if (carried->values.shape() != raw.values.shape()) {
    throw StateError("carried scores " + shape_to_string(carried->values.shape()) +
                     " do not match new scores " + shape_to_string(raw.values.shape()) +
                     "; sequence length or head count changed inside the stack");
  }
  return {add(raw.values, carried->values)};
}

SrmhaLayer::SrmhaLayer(std::size_t d_model, std::size_t heads, LayerMode mode, Rng& rng)
    : d_model_(d_model), heads_(heads), mode_(mode) {
  check_heads(d_model, heads);
  if (const auto* u = std::get_if<UpdateMode>(&mode_)) {
    if (u->window < 1) throw ConfigError("update-mode window must be >= 1");
    query_.emplace(d_model, d_model, rng);
    key_.emplace(d_model, d_model, rng);
  }
  value_ = Linear(d_model, d_model, rng);
  output_ = Linear(d_model, d_model, rng);
}

AttentionScores SrmhaLayer::scaled_scores(const Tensor& q_in, const Tensor& k_in) const {
  if (!is_update(mode_)) throw ModeError("scaled_scores called on a shared-mode layer");
  check_input(q_in, d_model_, "scaled_scores");
  check_input(k_in, d_model_, "scaled_scores");
  return {head_scores((*query_)(q_in), (*key_)(k_in), heads_)};
}

Tensor SrmhaLayer::attend(const AttentionScores& scores, const Tensor& v_in) const {
  check_input(v_in, d_model_, "attend");
  const Tensor& s = scores.values;
  if (s.rank() != 4 || s.dim(0) != v_in.dim(0) || s.dim(1) != heads_ || s.dim(3) != v_in.dim(1)) {
    throw DimensionError("scores " + shape_to_string(s.shape()) + " do not fit values " +
                         shape_to_string(v_in.shape()));
  }
  return output_(weighted_values(s, value_(v_in), heads_));
}

SrmhaResult SrmhaLayer::forward(const Tensor& x, const ScoreState& carried,
                                const SelfAttentionOptions& options) const {
  check_input(x, d_model_, "srmha_forward");
  const std::size_t B = x.dim(0), T = x.dim(1);
  if (const auto* u = std::get_if<UpdateMode>(&mode_)) {
    const AttentionScores updated = residual_update(scaled_scores(x, x), carried.residual);
    const ScoreMask mask = build_score_mask(
        B, T, T,
        MaskSpec{.window = u->window, .causal = options.causal, .key_lengths = options.lengths,
                 .query_lengths = options.lengths});
    AttentionScores masked{mask_scores(updated.values, mask)};
    Tensor out = attend(masked, x);
    return {std::move(out), ScoreState{updated, std::move(masked)}};
  }
  if (carried.empty()) {
    throw ScheduleError("shared-mode layer reached with no carried scores; the first layer of a "
                        "stack must be an update layer");
  }
  if (carried.residual->values.dim(2) != T || carried.residual->values.dim(0) != B) {
    throw StateError("carried scores " + shape_to_string(carried.residual->values.shape()) +
                     " do not fit input " + shape_to_string(x.shape()));
  }
  if (options.share_raw_scores) {
    const ScoreMask mask = build_score_mask(
        B, T, T,
        MaskSpec{.causal = options.causal, .key_lengths = options.lengths,
                 .query_lengths = options.lengths});
    return {attend({mask_scores(carried.residual->values, mask)}, x), carried};
  }
  return {attend(*carried.masked, x), carried};
}

std::size_t SrmhaLayer::parameter_count() const {
  std::size_t n = value_.parameter_count() + output_.parameter_count();
  if (query_) n += query_->parameter_count();
  if (key_) n += key_->parameter_count();
  return n;
}

void SrmhaLayer::collect(const std::string& prefix, ParameterList& out) const {
  if (query_) query_->collect(prefix + ".query", out);
  if (key_) key_->collect(prefix + ".key", out);
  value_.collect(prefix + ".value", out);
  output_.collect(prefix + ".output", out);
}

MultiHeadAttention::MultiHeadAttention(std::size_t d_model, std::size_t heads, Rng& rng)
    : d_model_(d_model), heads_(heads) {
  check_heads(d_model, heads);
  query_ = Linear(d_model, d_model, rng);
  key_ = Linear(d_model, d_model, rng);
  value_ = Linear(d_model, d_model, rng);
  output_ = Linear(d_model, d_model, rng);
}

Tensor MultiHeadAttention::forward(const Tensor& q_in, const Tensor& kv_in,
                                   const ScoreMask* mask) const {
  check_input(q_in, d_model_, "attention query");
  check_input(kv_in, d_model_, "attention key/value");
  if (q_in.dim(0) != kv_in.dim(0)) {
    throw DimensionError("attention batch mismatch: " + shape_to_string(q_in.shape()) + " vs " +
                         shape_to_string(kv_in.shape()));
  }
  Tensor scores = head_scores(query_(q_in), key_(kv_in), heads_);
  if (mask) scores = mask_scores(scores, *mask);
  return output_(weighted_values(scores, value_(kv_in), heads_));
}

std::size_t MultiHeadAttention::parameter_count() const {
  return query_.parameter_count() + key_.parameter_count() + value_.parameter_count() +
         output_.parameter_count();
}

void MultiHeadAttention::collect(const std::string& prefix, ParameterList& out) const {
  query_.collect(prefix + ".query", out);
  key_.collect(prefix + ".key", out);
  value_.collect(prefix + ".value", out);
  output_.collect(prefix + ".output", out);
}

}  // namespace easr
