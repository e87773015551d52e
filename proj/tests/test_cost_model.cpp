#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "easr/cost_model.hpp"
#include "easr/errors.hpp"
#include "easr/inference.hpp"
#include "easr/model.hpp"
#include "easr/ops.hpp"
#include "oracles/reference.hpp"

using namespace easr;

namespace {

ModelConfig small(Variant v = Variant::kEfficientAsr) {
  ModelConfig c;
  c.variant = v;
  c.d_model = 16;
  c.d_ff = 64;
  c.heads = 2;
  c.enc_layers = 4;
  c.dec_layers = 3;
  c.i_enc = 2;
  c.i_dec = 2;
  c.n_chunks = 2;
  c.window = 3;
  c.feature_dim = 6;
  c.vocab_size = 11;
  return c;
}

// Sum of per-block rows whose name ends with `suffix` ("" for all).
CostRow sum_rows(const std::vector<CostRow>& rows, const std::string& suffix) {
  CostRow out;
  for (const auto& r : rows) {
    if (r.block.size() < suffix.size() ||
        r.block.compare(r.block.size() - suffix.size(), suffix.size(), suffix) != 0) {
      continue;
    }
    out.params_analytic += r.params_analytic;
    out.flops_analytic += r.flops_analytic;
  }
  return out;
}

}  // namespace

TEST(Formulas, WorkedExamples) {
  EXPECT_EQ(mha_cost(256, 1, 100), (BlockCost{263168, 62668800}));
  EXPECT_EQ(srmha_shared_cost(1, 1, 1), (BlockCost{4, 6}));
  EXPECT_EQ(srmha_shared_cost(256, 1, 1).params, 131584u);
  EXPECT_EQ(ffn_cost(256, 2048, 1, 10), (BlockCost{1050880, 20971520}));
  EXPECT_EQ(cffn_cost(256, 2048, 2, 1, 1).params, 526592u);
  EXPECT_EQ(cffn_cost(256, 2048, 4, 1, 1).params, 264448u);
  EXPECT_THROW(cffn_cost(256, 2048, 3, 1, 1), DivisibilityError);
}

TEST(Formulas, AlgebraicIdentities) {
  for (std::uint64_t d : {8u, 32u, 256u}) {
    for (std::uint64_t B : {1u, 3u}) {
      for (std::uint64_t T : {1u, 7u, 64u}) {
        const auto full = mha_cost(d, B, T);
        const auto half = srmha_shared_cost(d, B, T);
        EXPECT_EQ(2 * half.params, full.params);
        EXPECT_EQ(2 * half.flops, full.flops);
        EXPECT_EQ(ffn_cost(d, 8 * d, B, T).params, 16 * d * d + 9 * d);
        EXPECT_EQ(cffn_cost(d, 8 * d, 1, B, T), ffn_cost(d, 8 * d, B, T));
        for (std::uint64_t n : {1u, 2u, 4u}) {
          EXPECT_EQ(n * cffn_weight_count(d, 8 * d, n), cffn_weight_count(d, 8 * d, 1));
          const auto per_chunk = cffn_cost(d, 8 * d, n, B, T).params / n;
          EXPECT_EQ(per_chunk, 16 * (d / n) * (d / n) + 9 * d / n);
        }
      }
    }
  }
  // T -> 2T: the score term quadruples, the projection term doubles
  const std::uint64_t d = 32, B = 2, T = 9;
  const auto proj = [&](std::uint64_t t) { return 8 * B * t * d * d; };
  EXPECT_EQ(mha_cost(d, B, 2 * T).flops - proj(2 * T), 4 * (mha_cost(d, B, T).flops - proj(T)));
}

TEST(Formulas, AttentionOvertakesFfnPastSixD) {
  for (std::uint64_t d : {8u, 64u, 256u}) {
    const std::uint64_t crossover = 6 * d;
    EXPECT_EQ(mha_cost(d, 1, crossover).flops, ffn_cost(d, 8 * d, 1, crossover).flops);
    for (std::uint64_t T : {crossover + 1, crossover + 10, 20 * d}) {
      EXPECT_GT(mha_cost(d, 1, T).flops, ffn_cost(d, 8 * d, 1, T).flops) << d << " " << T;
    }
    for (std::uint64_t T : {std::uint64_t{1}, d, crossover - 1}) {
      EXPECT_LT(mha_cost(d, 1, T).flops, ffn_cost(d, 8 * d, 1, T).flops) << d << " " << T;
    }
  }
}

TEST(Report, ReconcilesAtSmallScale) {
  for (Variant v : {Variant::kEfficientAsr, Variant::kTransformer}) {
    const ModelConfig c = small(v);
    const auto report = model_cost_report(c, c.matched_baseline(), 2, 12, 5);
    for (const auto& r : report.rows) {
      EXPECT_EQ(r.params_analytic, r.params_measured) << r.block;
      EXPECT_EQ(r.flops_analytic, r.flops_measured) << r.block;
    }
    EXPECT_EQ(report.row("total").params_measured, Model(c, 1).parameter_count());
    EXPECT_EQ(report.row("total").params_analytic, analytic_param_count(c));
  }
}

TEST(Report, AttentionAndFfnReductionFactors) {
  for (std::size_t i_enc : {1u, 2u, 3u, 6u}) {
    for (std::size_t n : {1u, 2u, 4u}) {
      ModelConfig c;
      c.d_model = 32;
      c.d_ff = 256;
      c.n_chunks = n;
      c.i_enc = i_enc;
      c.i_dec = 2;
      c.vocab_size = 20;
      c.feature_dim = 8;
      const auto rows = analytic_rows(c, 1, 8, 3);
      const auto base = analytic_rows(c.matched_baseline(), 1, 8, 3);
      const auto share = [](std::size_t L, std::size_t i) {
        const double u = static_cast<double>((L + i - 1) / i);
        return (2.0 * u + (static_cast<double>(L) - u)) / (2.0 * static_cast<double>(L));
      };
      const double enc_ratio = share(6, i_enc), dec_ratio = share(6, 2);
      const double expected = (enc_ratio + dec_ratio) / 2.0;
      const double got = static_cast<double>(sum_rows(rows, ".self_attention").params_analytic) /
                         static_cast<double>(sum_rows(base, ".self_attention").params_analytic);
      EXPECT_NEAR(got, expected, 1e-12);
    }
  }
  for (std::size_t n : {2u, 4u}) {
    ModelConfig c;
    c.n_chunks = n;
    const auto report = model_cost_report(c, c.matched_baseline(), 1, 8, 2);
    EXPECT_DOUBLE_EQ(report.ffn_weight_reduction_pct, n == 2 ? 50.0 : 75.0);
  }
}

TEST(Report, MonotoneInSharingAndChunks) {
  std::uint64_t prev_params = ~0ULL, prev_flops = ~0ULL;
  for (std::size_t i : {1u, 2u, 3u, 6u}) {
    ModelConfig c;
    c.i_enc = i;
    c.i_dec = i;
    const auto total = sum_rows(analytic_rows(c, 1, 32, 8), "");
    EXPECT_LE(total.params_analytic, prev_params);
    EXPECT_LE(total.flops_analytic, prev_flops);
    prev_params = total.params_analytic;
    prev_flops = total.flops_analytic;
  }
  std::uint64_t prev_ffn = ~0ULL;
  for (std::size_t n : {1u, 2u, 4u, 8u}) {
    ModelConfig c;
    c.n_chunks = n;
    const auto ffn = sum_rows(analytic_rows(c, 1, 32, 8), ".ffn").params_analytic;
    EXPECT_LE(ffn, prev_ffn);
    prev_ffn = ffn;
  }
}

TEST(Report, ReportsFullScaleReduction) {
  const ModelConfig c;
  const auto report = model_cost_report(c, c.matched_baseline(), 1, 16, 4);
  EXPECT_NEAR(report.param_reduction_pct, 36.0, 6.0);
  EXPECT_GT(report.core_param_reduction_pct, report.param_reduction_pct);
  EXPECT_GT(report.row("sum.embedding_projection").params_analytic, 0u);
  std::ostringstream csv, table;
  write_cost_csv(csv, report);
  write_cost_table(table, report);
  EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')),
            "block,params_analytic,params_measured,flops_analytic,flops_measured,reduction_pct");
  EXPECT_NE(table.str().find("FLOP"), std::string::npos);
  EXPECT_NE(table.str().find("embedding"), std::string::npos);
}

TEST(Memory, EstimateMatchesLeanScoreBuffers) {
  for (Variant v : {Variant::kEfficientAsr, Variant::kTransformer}) {
    const ModelConfig c = small(v);
    const Model m(c, 2);
    Rng rng(3);
    const std::size_t T = 20, T_dec = 5;
    const Tensor x = oracle::random_tensor({1, T, c.feature_dim}, rng);
    std::vector<int> tokens{kSosId};
    for (std::size_t t = 1; t < T_dec; ++t) tokens.push_back(3 + static_cast<int>(t % 8));
    LeanStats stats;
    const auto before = MemoryTracker::live_bytes();
    MemoryTracker::reset_peak();
    {
      const Tensor logits = lean_forward(m, x, {tokens}, &stats);
    }
    const auto peak = MemoryTracker::peak_bytes() - before;
    const auto est = lean_memory_estimate(c, 1, T, T_dec);
    EXPECT_EQ(est.score_bytes, stats.score_bytes);
    EXPECT_EQ(est.params_bytes, m.parameter_count() * sizeof(double));
    // params and features are already live before the call
    EXPECT_EQ(static_cast<std::uint64_t>(peak), est.activation_bytes);
  }
}
