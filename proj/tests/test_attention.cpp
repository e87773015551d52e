#include <gtest/gtest.h>

#include <cmath>

#include "easr/attention.hpp"
#include "easr/errors.hpp"
#include "easr/ops.hpp"
#include "oracles/reference.hpp"

using namespace easr;

namespace {

std::vector<double> probs_of(const Tensor& masked_scores) {
  return softmax_rows(masked_scores).to_vector();
}

void expect_matches(const Tensor& out, std::size_t b, const oracle::Mat& ref, double tol) {
  const oracle::Mat got = oracle::from_tensor_item(out, b);
  ASSERT_EQ(got.v.size(), ref.v.size());
  for (std::size_t i = 0; i < got.v.size(); ++i) EXPECT_NEAR(got.v[i], ref.v[i], tol) << i;
}

}  // namespace

TEST(ScoreMask, BandCausalAndPadding) {
  const std::vector<std::size_t> lens{3};
  const ScoreMask m = build_score_mask(
      1, 4, 4, MaskSpec{.window = 1, .causal = true, .key_lengths = lens, .query_lengths = lens});
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      const bool expect = (i >= j && i - j <= 1) && !(i < 3 && j >= 3);
      EXPECT_EQ(m.kept(0, i, j), expect) << i << "," << j;
    }
  }
  const std::vector<std::size_t> wrong{1, 2};
  EXPECT_THROW(build_score_mask(1, 2, 2, MaskSpec{.key_lengths = wrong}), DimensionError);
}

TEST(Swd, ZerosOutsideBandAndRowsSumToOne) {
  Rng rng(1);
  const Tensor s = oracle::random_tensor({2, 3, 9, 9}, rng, 3.0);
  for (std::size_t w : {1u, 2u, 4u}) {
    for (bool causal : {false, true}) {
      const auto p = probs_of(apply_swd({s}, w, causal).values);
      for (std::size_t r = 0; r < 2 * 3 * 9; ++r) {
        const std::size_t i = r % 9;
        double total = 0.0;
        for (std::size_t j = 0; j < 9; ++j) {
          const double v = p[r * 9 + j];
          const bool outside = (i > j ? i - j : j - i) > w || (causal && j > i);
          if (outside) EXPECT_EQ(v, 0.0);
          total += v;
        }
        EXPECT_NEAR(total, 1.0, 1e-12);
      }
    }
  }
}

TEST(Swd, WideWindowIsIdentity) {
  Rng rng(2);
  const Tensor s = oracle::random_tensor({1, 1, 5, 5}, rng);
  EXPECT_EQ(apply_swd({s}, 4, false).values.to_vector(), s.to_vector());
  EXPECT_THROW(apply_swd({s}, 0, false), ConfigError);
}

TEST(ResidualUpdate, AddsCarriedScoresAndChecksShape) {
  const Tensor a = Tensor::from_vector({1, 1, 1, 2}, {1, 2});
  const Tensor b = Tensor::from_vector({1, 1, 1, 2}, {10, 20});
  EXPECT_EQ(residual_update({a}, std::nullopt).values.to_vector(), a.to_vector());
  EXPECT_EQ(residual_update({a}, AttentionScores{b}).values.to_vector(), (std::vector<double>{11, 22}));
  const Tensor c = Tensor::zeros({1, 1, 2, 2});
  EXPECT_THROW(residual_update({a}, AttentionScores{c}), StateError);
}

TEST(Srmha, ParameterCounts) {
  Rng rng(3);
  EXPECT_EQ(SrmhaLayer(256, 4, UpdateMode{6}, rng).parameter_count(), 263168u);
  EXPECT_EQ(SrmhaLayer(256, 4, SharedMode{}, rng).parameter_count(), 131584u);
  EXPECT_EQ(MultiHeadAttention(256, 4, rng).parameter_count(), 263168u);
  EXPECT_THROW(SrmhaLayer(10, 4, UpdateMode{1}, rng), DivisibilityError);
}

TEST(Srmha, FlopCountsMatchClosedForm) {
  Rng rng(4);
  for (std::size_t B : {1u, 2u}) {
    for (std::size_t T : {4u, 16u}) {
      const std::size_t d = 8;
      const SrmhaLayer up(d, 2, UpdateMode{2}, rng);
      const SrmhaLayer sh(d, 2, SharedMode{}, rng);
      const Tensor x = oracle::random_tensor({B, T, d}, rng);
      FlopCounter::reset();
      const auto r = up.forward(x, {});
      EXPECT_EQ(FlopCounter::matmul_flops(), 4 * T * T * B * d + 8 * B * T * d * d);
      FlopCounter::reset();
      sh.forward(x, r.state);
      EXPECT_EQ(FlopCounter::matmul_flops(), 2 * T * T * B * d + 4 * B * T * d * d);
    }
  }
}

TEST(Srmha, UpdateMatchesLoopReference) {
  Rng rng(5);
  const SrmhaLayer layer(8, 2, UpdateMode{2}, rng);
  const Tensor x = oracle::random_tensor({2, 6, 8}, rng);
  const auto r = layer.forward(x, {});
  oracle::AttnMask mask;
  mask.window = 2;
  for (std::size_t b = 0; b < 2; ++b) {
    const auto ref = oracle::srmha_stack(oracle::from_tensor_item(x, b), {&layer}, mask);
    expect_matches(r.output, b, ref[0], 1e-12);
  }
}

TEST(Srmha, StackMatchesLoopReference) {
  Rng rng(6);
  std::vector<SrmhaLayer> layers;
  for (int l = 0; l < 5; ++l) {
    if (l % 2 == 0) {
      layers.emplace_back(8, 2, UpdateMode{3}, rng);
    } else {
      layers.emplace_back(8, 2, SharedMode{}, rng);
    }
  }
  for (bool causal : {false, true}) {
    const Tensor x = oracle::random_tensor({1, 7, 8}, rng);
    ScoreState state;
    Tensor cur = x;
    std::vector<Tensor> outs;
    for (const auto& l : layers) {
      auto r = srmha_forward(cur, l, state, causal);
      state = r.state;
      cur = r.output;
      outs.push_back(cur);
    }
    std::vector<const SrmhaLayer*> ptrs;
    for (const auto& l : layers) ptrs.push_back(&l);
    oracle::AttnMask mask;
    mask.window = 3;
    mask.causal = causal;
    const auto ref = oracle::srmha_stack(oracle::from_tensor_item(x, 0), ptrs, mask);
    for (std::size_t l = 0; l < layers.size(); ++l) expect_matches(outs[l], 0, ref[l], 1e-11);
  }
}

TEST(Srmha, SharedLayerReusesStateVerbatim) {
  Rng rng(7);
  const SrmhaLayer up(8, 2, UpdateMode{2}, rng);
  const SrmhaLayer sh(8, 2, SharedMode{}, rng);
  const Tensor x = oracle::random_tensor({1, 5, 8}, rng);
  const auto r1 = up.forward(x, {});
  const auto r2 = sh.forward(r1.output, r1.state);
  EXPECT_EQ(r2.state.residual->values.node_ptr(), r1.state.residual->values.node_ptr());
  EXPECT_EQ(r2.state.masked->values.to_vector(), r1.state.masked->values.to_vector());
}

TEST(Srmha, SharedModeErrors) {
  Rng rng(8);
  const SrmhaLayer sh(8, 2, SharedMode{}, rng);
  const Tensor x = oracle::random_tensor({1, 5, 8}, rng);
  EXPECT_THROW(sh.forward(x, {}), ScheduleError);
  EXPECT_THROW(sh.scaled_scores(x, x), ModeError);
  const SrmhaLayer up(8, 2, UpdateMode{2}, rng);
  const auto r = up.forward(x, {});
  const Tensor longer = oracle::random_tensor({1, 6, 8}, rng);
  EXPECT_THROW(sh.forward(longer, r.state), StateError);
  EXPECT_THROW(up.forward(longer, r.state), StateError);
}

TEST(Srmha, ShareRawScoresUsesUnbandedCarry) {
  Rng rng(9);
  const SrmhaLayer up(8, 2, UpdateMode{1}, rng);
  const SrmhaLayer sh(8, 2, SharedMode{}, rng);
  const Tensor x = oracle::random_tensor({1, 6, 8}, rng);
  const auto r = up.forward(x, {});
  SelfAttentionOptions raw;
  raw.share_raw_scores = true;
  const Tensor banded = sh.forward(x, r.state).output;
  const Tensor unbanded = sh.forward(x, r.state, raw).output;
  // Reference: shared layer over the full carried residual without the band.
  std::vector<oracle::Mat> scores;
  const auto res = r.state.residual->values.to_vector();
  for (std::size_t h = 0; h < 2; ++h) {
    oracle::Mat s(6, 6);
    std::copy(res.begin() + static_cast<std::ptrdiff_t>(h * 36),
              res.begin() + static_cast<std::ptrdiff_t>((h + 1) * 36), s.v.begin());
    scores.push_back(s);
  }
  const auto ref = oracle::attend(scores, oracle::from_tensor_item(x, 0), sh.value(), sh.output(), {});
  expect_matches(unbanded, 0, ref, 1e-12);
  EXPECT_NE(banded.to_vector(), unbanded.to_vector());
}

TEST(Srmha, PaddedKeysGetZeroWeight) {
  Rng rng(10);
  const SrmhaLayer up(8, 2, UpdateMode{5}, rng);
  const Tensor x = oracle::random_tensor({2, 6, 8}, rng);
  const std::vector<std::size_t> lens{6, 4};
  SelfAttentionOptions opt;
  opt.lengths = lens;
  const auto r = up.forward(x, {}, opt);
  const auto p = softmax_rows(r.state.masked->values).to_vector();
  for (std::size_t h = 0; h < 2; ++h) {
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 4; j < 6; ++j) EXPECT_EQ(p[((1 * 2 + h) * 6 + i) * 6 + j], 0.0);
    }
  }
}

TEST(Srmha, GradientCheck) {
  Rng rng(11);
  const SrmhaLayer up(8, 2, UpdateMode{2}, rng);
  const SrmhaLayer sh(8, 2, SharedMode{}, rng);
  const Tensor x = oracle::random_tensor({2, 5, 8}, rng, 1.0, true);
  const Tensor w = oracle::random_tensor({2, 5, 8}, rng);
  ParameterList params;
  up.collect("up", params);
  sh.collect("sh", params);
  std::vector<Tensor> ts{x};
  for (const auto& p : params) ts.push_back(p.tensor);
  const auto r = oracle::check_gradients(
      [&] {
        const auto a = up.forward(x, {});
        const auto b = sh.forward(a.output, a.state);
        return sum(mul(b.output, w));
      },
      ts);
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(Mha, CrossAttentionMatchesLoopReference) {
  Rng rng(12);
  const MultiHeadAttention mha(8, 4, rng);
  const Tensor q = oracle::random_tensor({2, 3, 8}, rng);
  const Tensor kv = oracle::random_tensor({2, 7, 8}, rng);
  const Tensor out = cross_attention(q, kv, mha);
  for (std::size_t b = 0; b < 2; ++b) {
    const auto ref = oracle::attention(oracle::from_tensor_item(q, b), oracle::from_tensor_item(kv, b),
                                       mha.query(), mha.key(), mha.value(), mha.output(), 4, {});
    expect_matches(out, b, ref, 1e-12);
  }
}

TEST(Mha, FlopsForCrossAttention) {
  Rng rng(13);
  const std::size_t d = 8, B = 2, Tq = 3, Tk = 5;
  const MultiHeadAttention mha(d, 2, rng);
  const Tensor q = oracle::random_tensor({B, Tq, d}, rng);
  const Tensor kv = oracle::random_tensor({B, Tk, d}, rng);
  FlopCounter::reset();
  mha.forward(q, kv);
  EXPECT_EQ(FlopCounter::matmul_flops(), 4 * B * Tq * d * d + 4 * B * Tk * d * d + 4 * B * Tq * Tk * d);
}
