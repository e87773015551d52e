#include "easr/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "blas.hpp"
#include "easr/errors.hpp"

namespace easr {
namespace {

// Row-major activation matrix [rows, cols].
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Buffer data;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c) {}
  double* row(std::size_t r) { return data.data() + r * cols; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }
};

void release(Mat& m) {
  Buffer().swap(m.data);
  m.rows = m.cols = 0;
}

Mat linear(const Mat& x, const Linear& l) {
  const std::size_t in = l.in_features(), out = l.out_features();
  Mat y(x.rows, out);
  detail::gemm(false, false, x.rows, out, in, 1.0, x.data.data(), in, l.weight.data().data(), out,
               0.0, y.data.data(), out);
  const double* b = l.bias.data().data();
  for (std::size_t r = 0; r < y.rows; ++r) {
    double* yr = y.row(r);
    for (std::size_t c = 0; c < out; ++c) yr[c] += b[c];
  }
  return y;
}

// x <- LN(x + sub), consuming sub.
void add_and_norm(Mat& x, Mat& sub, const LayerNorm& ln) {
  const std::size_t d = x.cols;
  const double* g = ln.gamma.data().data();
  const double* be = ln.beta.data().data();
  for (std::size_t r = 0; r < x.rows; ++r) {
    double* xr = x.row(r);
    const double* sr = sub.row(r);
    for (std::size_t c = 0; c < d; ++c) xr[c] += sr[c];
    double mu = 0.0;
    for (std::size_t c = 0; c < d; ++c) mu += xr[c];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (xr[c] - mu) * (xr[c] - mu);
    var /= static_cast<double>(d);
    const double inv_std = 1.0 / std::sqrt(var + ln.eps);
    for (std::size_t c = 0; c < d; ++c) xr[c] = (xr[c] - mu) * inv_std * g[c] + be[c];
  }
  release(sub);
}

// In-place softmax over `n` entries, skipping masked ones.
void softmax_inplace(double* row, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n; ++k) {
    if (!is_masked_score(row[k])) m = std::max(m, row[k]);
  }
  if (m == -std::numeric_limits<double>::infinity()) {
    throw DegenerateRowError("attention row has no unmasked entries");
  }
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    row[k] = is_masked_score(row[k]) ? 0.0 : std::exp(row[k] - m);
    total += row[k];
  }
  for (std::size_t k = 0; k < n; ++k) row[k] /= total;
}

struct Dims {
  std::size_t batch;
  std::size_t heads;
  std::size_t head_dim;
};

void track(LeanStats* stats, const Buffer& scores) {
  if (stats) stats->score_bytes = std::max(stats->score_bytes, scores.size() * sizeof(double));
}

// Dense softmax(Q K^T / sqrt(dk)) V with heads merged, [B*Tq, d].
Mat dense_attention(const Mat& q, const Mat& k, const Mat& v, std::size_t tq, std::size_t tk,
                    const Dims& dims, bool causal, LeanStats* stats, bool self) {
  const std::size_t d = q.cols, dk = dims.head_dim;
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  Buffer scores(dims.batch * dims.heads * tq * tk);
  if (self) track(stats, scores);
  Mat ctx(q.rows, d);
  for (std::size_t b = 0; b < dims.batch; ++b) {
    for (std::size_t h = 0; h < dims.heads; ++h) {
      double* s = scores.data() + (b * dims.heads + h) * tq * tk;
      detail::gemm(false, true, tq, tk, dk, inv_sqrt_dk, q.row(b * tq) + h * dk, d,
                   k.row(b * tk) + h * dk, d, 0.0, s, tk);
      for (std::size_t i = 0; i < tq; ++i) {
        double* srow = s + i * tk;
        if (causal) {
          for (std::size_t j = i + 1; j < tk; ++j) srow[j] = kMaskedScore;
        }
        softmax_inplace(srow, tk);
      }
      detail::gemm(false, false, tq, dk, tk, 1.0, s, tk, v.row(b * tk) + h * dk, d, 0.0,
                   ctx.row(b * tq) + h * dk, d);
    }
  }
  return ctx;
}

// Band-stored score state of one stack.
struct BandState {
  Buffer residual;  // raw accumulated scores, in-range entries
  Buffer probs;     // softmax of the band-masked scores
  bool empty() const { return probs.empty(); }
};

bool band_kept(std::size_t i, std::ptrdiff_t j, std::size_t t, bool causal) {
  if (j < 0 || static_cast<std::size_t>(j) >= t) return false;
  return !(causal && static_cast<std::size_t>(j) > i);
}

void band_scores(const Mat& q, const Mat& k, std::size_t t, const Dims& dims, std::size_t w,
                 bool causal, BandState& state, LeanStats* stats) {
  const std::size_t dk = dims.head_dim, width = 2 * w + 1;
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  const bool carried = !state.residual.empty();
  if (!carried) state.residual.assign(dims.batch * dims.heads * t * width, 0.0);
  if (state.residual.size() != dims.batch * dims.heads * t * width) {
    throw StateError("carried band scores do not fit this layer");
  }
  for (std::size_t b = 0; b < dims.batch; ++b) {
    for (std::size_t h = 0; h < dims.heads; ++h) {
      for (std::size_t i = 0; i < t; ++i) {
        double* r = state.residual.data() + ((b * dims.heads + h) * t + i) * width;
        const double* qi = q.row(b * t + i) + h * dk;
        for (std::size_t c = 0; c < width; ++c) {
          const std::ptrdiff_t j = static_cast<std::ptrdiff_t>(i + c) - static_cast<std::ptrdiff_t>(w);
          if (j < 0 || static_cast<std::size_t>(j) >= t) continue;
          const double* kj = k.row(b * t + static_cast<std::size_t>(j)) + h * dk;
          double dot = 0.0;
          for (std::size_t e = 0; e < dk; ++e) dot += qi[e] * kj[e];
          r[c] = dot * inv_sqrt_dk + (carried ? r[c] : 0.0);
        }
      }
    }
  }
  state.probs.resize(state.residual.size());
  for (std::size_t row = 0; row < dims.batch * dims.heads * t; ++row) {
    const std::size_t i = row % t;
    const double* r = state.residual.data() + row * width;
    double* p = state.probs.data() + row * width;
    for (std::size_t c = 0; c < width; ++c) {
      const std::ptrdiff_t j = static_cast<std::ptrdiff_t>(i + c) - static_cast<std::ptrdiff_t>(w);
      p[c] = band_kept(i, j, t, causal) ? r[c] : kMaskedScore;
    }
    softmax_inplace(p, width);
  }
  track(stats, state.probs);
}

Mat band_context(const BandState& state, const Mat& v, std::size_t t, const Dims& dims,
                 std::size_t w) {
  const std::size_t d = v.cols, dk = dims.head_dim, width = 2 * w + 1;
  Mat ctx(v.rows, d);
  for (std::size_t b = 0; b < dims.batch; ++b) {
    for (std::size_t h = 0; h < dims.heads; ++h) {
      for (std::size_t i = 0; i < t; ++i) {
        const double* p = state.probs.data() + ((b * dims.heads + h) * t + i) * width;
        double* out = ctx.row(b * t + i) + h * dk;
        for (std::size_t c = 0; c < width; ++c) {
          if (p[c] == 0.0) continue;
          const std::size_t j = i + c - w;
          const double* vj = v.row(b * t + j) + h * dk;
          for (std::size_t e = 0; e < dk; ++e) out[e] += p[c] * vj[e];
        }
      }
    }
  }
  return ctx;
}

Mat self_attention(const SelfAttention& attn, const Mat& x, std::size_t t, std::size_t batch,
                   bool causal, BandState& state, LeanStats* stats) {
  if (attn.is_srmha()) {
    const SrmhaLayer& layer = *attn.srmha();
    const Dims dims{batch, layer.heads(), layer.head_dim()};
    std::size_t w = 0;
    if (const auto* u = std::get_if<UpdateMode>(&layer.mode())) {
      w = u->window;
      Mat q = linear(x, *layer.query());
      Mat k = linear(x, *layer.key());
      band_scores(q, k, t, dims, w, causal, state, stats);
    } else {
      if (state.empty()) throw ScheduleError("shared-mode layer reached with no carried scores");
      w = (state.probs.size() / (batch * dims.heads * t) - 1) / 2;
    }
    Mat v = linear(x, layer.value());
    Mat ctx = band_context(state, v, t, dims, w);
    release(v);
    return linear(ctx, layer.output());
  }
  const MultiHeadAttention& mha = *attn.mha();
  const Dims dims{batch, mha.heads(), mha.d_model() / mha.heads()};
  Mat q = linear(x, mha.query());
  Mat k = linear(x, mha.key());
  Mat v = linear(x, mha.value());
  Mat ctx = dense_attention(q, k, v, t, t, dims, causal, stats, true);
  release(q);
  release(k);
  release(v);
  return linear(ctx, mha.output());
}

Mat cross_attention(const MultiHeadAttention& mha, const Mat& y, const Mat& memory,
                    std::size_t tq, std::size_t tk, std::size_t batch) {
  const Dims dims{batch, mha.heads(), mha.d_model() / mha.heads()};
  Mat q = linear(y, mha.query());
  Mat k = linear(memory, mha.key());
  Mat v = linear(memory, mha.value());
  Mat ctx = dense_attention(q, k, v, tq, tk, dims, false, nullptr, false);
  release(q);
  release(k);
  release(v);
  return linear(ctx, mha.output());
}

// One chunk at a time so only a [rows, d_ff/n] hidden buffer is ever live.
Mat feed_forward(const CffnBlock& ffn, const Mat& x) {
  const std::size_t d = x.cols, n = ffn.n_chunks(), dc = d / n;
  Mat out(x.rows, d);
  for (std::size_t c = 0; c < n; ++c) {
    const auto& chunk = ffn.chunks()[c];
    const std::size_t hc = chunk.key.out_features();
    Mat hidden(x.rows, hc);
    detail::gemm(false, false, x.rows, hc, dc, 1.0, x.data.data() + c * dc, d,
                 chunk.key.weight.data().data(), hc, 0.0, hidden.data.data(), hc);
    const double* b1 = chunk.key.bias.data().data();
    for (std::size_t r = 0; r < x.rows; ++r) {
      double* hr = hidden.row(r);
      for (std::size_t e = 0; e < hc; ++e) hr[e] = std::max(0.0, hr[e] + b1[e]);
    }
    detail::gemm(false, false, x.rows, dc, hc, 1.0, hidden.data.data(), hc,
                 chunk.value.weight.data().data(), dc, 0.0, out.data.data() + c * dc, d);
    const double* b2 = chunk.value.bias.data().data();
    for (std::size_t r = 0; r < x.rows; ++r) {
      double* orow = out.row(r) + c * dc;
      for (std::size_t e = 0; e < dc; ++e) orow[e] += b2[e];
    }
  }
  return out;
}

void add_positions(Mat& x, std::size_t steps, double factor) {
  const Tensor pe = sinusoidal_positions(steps, x.cols);
  const double* p = pe.data().data();
  for (std::size_t r = 0; r < x.rows; ++r) {
    double* xr = x.row(r);
    const double* pr = p + (r % steps) * x.cols;
    for (std::size_t c = 0; c < x.cols; ++c) xr[c] = xr[c] * factor + pr[c];
  }
}

Mat encode_mat(const Model& model, const Tensor& features, LeanStats* stats) {
  const ModelConfig& cfg = model.config();
  if (features.rank() != 3 || features.dim(2) != cfg.feature_dim) {
    throw DimensionError("features must be [B,T," + std::to_string(cfg.feature_dim) + "], got " +
                         shape_to_string(features.shape()));
  }
  const std::size_t B = features.dim(0), T = features.dim(1);
  Mat x;
  {
    Mat f(B * T, cfg.feature_dim);
    std::copy(features.data().begin(), features.data().end(), f.data.begin());
    x = linear(f, model.input_projection());
  }
  add_positions(x, T, 1.0);
  BandState state;
  for (const EncoderLayer& layer : model.encoder_layers()) {
    Mat a = self_attention(layer.self_attention(), x, T, B, false, state, stats);
    add_and_norm(x, a, layer.norm1());
    Mat f = feed_forward(layer.ffn(), x);
    add_and_norm(x, f, layer.norm2());
  }
  return x;
}

}  // namespace

Tensor lean_encode(const Model& model, const Tensor& features, LeanStats* stats) {
  if (model.config().share_raw_scores) {
    throw ConfigError("lean inference requires band-masked score sharing");
  }
  Mat x = encode_mat(model, features, stats);
  const std::size_t B = features.dim(0), T = features.dim(1);
  return Tensor(Shape{B, T, x.cols}, std::move(x.data));
}

Tensor lean_forward(const Model& model, const Tensor& features,
                    const std::vector<std::vector<int>>& tokens, LeanStats* stats) {
  const ModelConfig& cfg = model.config();
  if (cfg.share_raw_scores) throw ConfigError("lean inference requires band-masked score sharing");
  const std::size_t B = features.rank() == 3 ? features.dim(0) : 0;
  if (tokens.size() != B || B == 0) throw DimensionError("one token sequence per batch item");
  const std::size_t Td = tokens[0].size();
  if (Td == 0) throw DimensionError("decoder input must contain at least sos");
  for (const auto& seq : tokens) {
    if (seq.size() != Td) throw DimensionError("lean decoding needs equal-length token inputs");
  }
  const std::size_t T = features.dim(1), d = cfg.d_model;
  const Mat memory = encode_mat(model, features, stats);

  Mat y(B * Td, d);
  const double* table = model.token_embedding().data().data();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < Td; ++t) {
      const int id = tokens[b][t];
      if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab_size) {
        throw VocabError("token id " + std::to_string(id) + " outside vocabulary");
      }
      std::copy_n(table + static_cast<std::size_t>(id) * d, d, y.row(b * Td + t));
    }
  }
  add_positions(y, Td, std::sqrt(static_cast<double>(d)));
  BandState state;
  for (const DecoderLayer& layer : model.decoder_layers()) {
    Mat a = self_attention(layer.self_attention(), y, Td, B, true, state, stats);
    add_and_norm(y, a, layer.norm1());
    Mat c = cross_attention(layer.cross_attention(), y, memory, Td, T, B);
    add_and_norm(y, c, layer.norm2());
    Mat f = feed_forward(layer.ffn(), y);
    add_and_norm(y, f, layer.norm3());
  }
  Mat logits = linear(y, model.output_projection());
  return Tensor(Shape{B, Td, cfg.vocab_size}, std::move(logits.data));
}

}  // namespace easr
