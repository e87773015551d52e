#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "easr/config.hpp"

namespace easr {

// FLOPs count only matrix products, at 2mnk per [m,k]x[k,n] product, in the
// forward pass. Softmax, masking, residual adds, biases and norms are free.
struct BlockCost {
  std::uint64_t params = 0;
  std::uint64_t flops = 0;

  bool operator==(const BlockCost&) const = default;
};

// (4d^2 + 4d, 4T^2 B d + 8 B T d^2)
BlockCost mha_cost(std::uint64_t d, std::uint64_t B, std::uint64_t T);
// (2d^2 + 2d, 2T^2 B d + 4 B T d^2)
BlockCost srmha_shared_cost(std::uint64_t d, std::uint64_t B, std::uint64_t T);
// (2 d d_ff + d_ff + d, 4 B T d d_ff)
BlockCost ffn_cost(std::uint64_t d, std::uint64_t d_ff, std::uint64_t B, std::uint64_t T);
// (n (2 (d/n)(d_ff/n) + d_ff/n + d/n), 4 B T d d_ff / n)
BlockCost cffn_cost(std::uint64_t d, std::uint64_t d_ff, std::uint64_t n, std::uint64_t B,
                    std::uint64_t T);
// Weight matrices only: 2 d d_ff / n.
std::uint64_t cffn_weight_count(std::uint64_t d, std::uint64_t d_ff, std::uint64_t n);
// Queries from T_q positions over T_k memory positions.
BlockCost cross_attention_cost(std::uint64_t d, std::uint64_t B, std::uint64_t T_q,
                               std::uint64_t T_k);
// Dense [in, out] projection of B*T rows.
BlockCost linear_cost(std::uint64_t in, std::uint64_t out, std::uint64_t B, std::uint64_t T);
BlockCost layer_norm_cost(std::uint64_t d);
BlockCost embedding_cost(std::uint64_t vocab, std::uint64_t d);

struct CostRow {
  std::string block;
  std::uint64_t params_analytic = 0;
  std::uint64_t params_measured = 0;
  std::uint64_t flops_analytic = 0;
  std::uint64_t flops_measured = 0;
  // Parameter reduction against the same block of the baseline; NaN when the
  // baseline has no such block.
  double reduction_pct = 0.0;
};

struct CostReport {
  std::string model;
  std::string baseline;
  std::size_t batch = 0;
  std::size_t enc_steps = 0;
  std::size_t dec_steps = 0;
  // Per-block rows followed by aggregate rows whose names start with "sum."
  // and a final "total" row.
  std::vector<CostRow> rows;
  std::vector<CostRow> baseline_rows;
  double param_reduction_pct = 0.0;
  double flop_reduction_pct = 0.0;
  // Totals without input projection, token embedding, output and CTC heads.
  double core_param_reduction_pct = 0.0;
  // FFN weight matrices only (biases excluded).
  double ffn_weight_reduction_pct = 0.0;

  const CostRow& row(const std::string& block) const;
};

// Analytic per-block costs of a configuration; measured fields are zero.
std::vector<CostRow> analytic_rows(const ModelConfig& cfg, std::size_t B, std::size_t T,
                                   std::size_t T_dec);

// Builds both models, counts allocated scalars and instrumented FLOPs of one
// forward pass (encoder, decoder over T_dec tokens, CTC head) per block, and
// checks them against the formulas. Throws ReconciliationError listing every
// mismatching block.
CostReport model_cost_report(const ModelConfig& cfg, const ModelConfig& baseline, std::size_t B,
                             std::size_t T, std::size_t T_dec = 0);

void write_cost_csv(std::ostream& out, const CostReport& report);
void write_cost_table(std::ostream& out, const CostReport& report);

// Expected peak bytes of lean_forward: parameters plus input features plus
// the largest set of simultaneously live activations and score buffers.
struct MemoryEstimate {
  std::uint64_t params_bytes = 0;
  std::uint64_t features_bytes = 0;
  std::uint64_t activation_bytes = 0;
  std::uint64_t score_bytes = 0;  // one self-attention score buffer
  std::uint64_t total() const { return params_bytes + features_bytes + activation_bytes; }
};

MemoryEstimate lean_memory_estimate(const ModelConfig& cfg, std::size_t B, std::size_t T,
                                    std::size_t T_dec);

// Total scalars of a configuration from the formulas alone.
std::uint64_t analytic_param_count(const ModelConfig& cfg);

}  // namespace easr
