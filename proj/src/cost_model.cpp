#include "easr/cost_model.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "easr/cffn.hpp"
#include "easr/errors.hpp"
#include "easr/model.hpp"

namespace easr {
namespace {

using u64 = std::uint64_t;

double reduction(u64 base, u64 value) {
  if (base == 0) return std::numeric_limits<double>::quiet_NaN();
  return 100.0 * (static_cast<double>(base) - static_cast<double>(value)) / static_cast<double>(base);
}

std::size_t ffn_chunks(const ModelConfig& cfg) {
  return cfg.variant == Variant::kTransformer ? 1 : cfg.n_chunks;
}

// "encoder.3.ffn.chunk0.key.weight" -> "encoder.3.ffn"; "ctc.head.bias" -> "ctc.head".
std::string block_of(const std::string& name) {
  std::vector<std::string> parts;
  std::stringstream ss(name);
  for (std::string p; std::getline(ss, p, '.');) parts.push_back(p);
  const bool indexed = parts.size() > 2 && !parts[1].empty() &&
                       std::all_of(parts[1].begin(), parts[1].end(), ::isdigit);
  const std::size_t keep = std::min(parts.size(), indexed ? std::size_t{3} : std::size_t{2});
  std::string out = parts[0];
  for (std::size_t i = 1; i < keep; ++i) out += "." + parts[i];
  return out;
}

bool is_ffn_weight(const std::string& name) {
  return name.find(".ffn.") != std::string::npos && name.size() > 7 &&
         name.compare(name.size() - 7, 7, ".weight") == 0;
}

std::string aggregate_of(const std::string& block) {
  if (block == "encoder.input" || block == "decoder.embedding" || block == "decoder.output" ||
      block == "ctc.head") {
    return "sum.embedding_projection";
  }
  const auto tail = block.substr(block.rfind('.') + 1);
  if (tail == "self_attention") return "sum.self_attention";
  if (tail == "cross_attention") return "sum.cross_attention";
  if (tail == "ffn") return "sum.ffn";
  return "sum.norm";
}

const std::vector<std::string>& aggregate_names() {
  static const std::vector<std::string> names{"sum.self_attention", "sum.cross_attention",
                                              "sum.ffn", "sum.norm", "sum.embedding_projection",
                                              "total"};
  return names;
}

void append_aggregates(std::vector<CostRow>& rows) {
  std::map<std::string, CostRow> agg;
  for (const auto& name : aggregate_names()) agg[name].block = name;
  for (const auto& r : rows) {
    for (const std::string& key : {aggregate_of(r.block), std::string("total")}) {
      CostRow& a = agg[key];
      a.params_analytic += r.params_analytic;
      a.params_measured += r.params_measured;
      a.flops_analytic += r.flops_analytic;
      a.flops_measured += r.flops_measured;
    }
  }
  for (const auto& name : aggregate_names()) rows.push_back(agg[name]);
}

// Returns the FFN weight-matrix scalar count.
u64 measure(const ModelConfig& cfg, std::size_t B, std::size_t T, std::size_t T_dec,
            std::vector<CostRow>& rows) {
  const Model model(cfg, 0);
  std::map<std::string, u64> params;
  u64 ffn_weights = 0;
  for (const auto& p : model.parameters()) {
    params[block_of(p.name)] += p.tensor.numel();
    if (is_ffn_weight(p.name)) ffn_weights += p.tensor.numel();
  }

  FlopProfile profile;
  {
    NoGradGuard no_grad;
    RunContext ctx;
    const Tensor features = Tensor::zeros(Shape{B, T, cfg.feature_dim});
    const Tensor memory = model.encode(features, {}, ctx);
    const std::vector<std::vector<int>> tokens(B, std::vector<int>(T_dec, kSosId));
    model.decode(tokens, memory, {}, ctx);
    model.ctc_log_probs(memory);
  }
  for (auto& r : rows) {
    auto p = params.find(r.block);
    if (p != params.end()) {
      r.params_measured = p->second;
      params.erase(p);
    }
    auto f = profile.blocks().find(r.block);
    if (f != profile.blocks().end()) r.flops_measured = f->second;
  }
  for (const auto& [block, count] : params) {
    rows.push_back(CostRow{.block = block, .params_measured = count});
  }
  for (const auto& [block, flops] : profile.blocks()) {
    const bool known = std::any_of(rows.begin(), rows.end(),
                                   [&](const CostRow& r) { return r.block == block; });
    if (!known) rows.push_back(CostRow{.block = block, .flops_measured = flops});
  }
  return ffn_weights;
}

void reconcile(const std::string& model, const std::vector<CostRow>& rows) {
  std::ostringstream diff;
  for (const auto& r : rows) {
    if (r.params_analytic != r.params_measured || r.flops_analytic != r.flops_measured) {
      diff << "\n  " << model << " " << r.block << ": params " << r.params_analytic << " vs "
           << r.params_measured << ", flops " << r.flops_analytic << " vs " << r.flops_measured;
    }
  }
  if (!diff.str().empty()) throw ReconciliationError("analytic/measured mismatch:" + diff.str());
}

}  // namespace

BlockCost mha_cost(u64 d, u64 B, u64 T) {
  return {4 * d * d + 4 * d, 4 * T * T * B * d + 8 * B * T * d * d};
}

BlockCost srmha_shared_cost(u64 d, u64 B, u64 T) {
  return {2 * d * d + 2 * d, 2 * T * T * B * d + 4 * B * T * d * d};
}

BlockCost ffn_cost(u64 d, u64 d_ff, u64 B, u64 T) {
  return {2 * d * d_ff + d_ff + d, 4 * B * T * d * d_ff};
}

BlockCost cffn_cost(u64 d, u64 d_ff, u64 n, u64 B, u64 T) {
  const u64 params = cffn_param_count(d, d_ff, n);
  return {params, 4 * B * T * d * d_ff / n};
}

u64 cffn_weight_count(u64 d, u64 d_ff, u64 n) {
  cffn_param_count(d, d_ff, n);
  return 2 * d * d_ff / n;
}

BlockCost cross_attention_cost(u64 d, u64 B, u64 T_q, u64 T_k) {
  return {4 * d * d + 4 * d, 4 * B * T_q * d * d + 4 * B * T_k * d * d + 4 * B * T_q * T_k * d};
}

BlockCost linear_cost(u64 in, u64 out, u64 B, u64 T) { return {in * out + out, 2 * B * T * in * out}; }

BlockCost layer_norm_cost(u64 d) { return {2 * d, 0}; }

BlockCost embedding_cost(u64 vocab, u64 d) { return {vocab * d, 0}; }

const CostRow& CostReport::row(const std::string& block) const {
  for (const auto& r : rows) {
    if (r.block == block) return r;
  }
  throw std::out_of_range("no cost row " + block);
}

std::vector<CostRow> analytic_rows(const ModelConfig& cfg, std::size_t B, std::size_t T,
                                   std::size_t T_dec) {
  cfg.validate();
  if (T_dec == 0) T_dec = T;
  const u64 d = cfg.d_model, n = ffn_chunks(cfg);
  std::vector<CostRow> rows;
  auto add = [&rows](std::string block, BlockCost c) {
    rows.push_back(CostRow{.block = std::move(block), .params_analytic = c.params,
                           .flops_analytic = c.flops});
  };
  auto attention = [&](const LayerSchedule& s, std::size_t l, u64 steps) {
    if (cfg.variant == Variant::kTransformer || is_update(s.modes[l])) return mha_cost(d, B, steps);
    return srmha_shared_cost(d, B, steps);
  };
  const LayerSchedule enc = build_schedule(cfg.enc_layers, cfg.i_enc, cfg.window);
  const LayerSchedule dec = build_schedule(cfg.dec_layers, cfg.i_dec, cfg.window);
  add("encoder.input", linear_cost(cfg.feature_dim, d, B, T));
  for (std::size_t l = 0; l < cfg.enc_layers; ++l) {
    const std::string p = "encoder." + std::to_string(l);
    add(p + ".self_attention", attention(enc, l, T));
    add(p + ".norm1", layer_norm_cost(d));
    add(p + ".ffn", cffn_cost(d, cfg.d_ff, n, B, T));
    add(p + ".norm2", layer_norm_cost(d));
  }
  add("decoder.embedding", embedding_cost(cfg.vocab_size, d));
  for (std::size_t l = 0; l < cfg.dec_layers; ++l) {
    const std::string p = "decoder." + std::to_string(l);
    add(p + ".self_attention", attention(dec, l, T_dec));
    add(p + ".norm1", layer_norm_cost(d));
    add(p + ".cross_attention", cross_attention_cost(d, B, T_dec, T));
    add(p + ".norm2", layer_norm_cost(d));
    add(p + ".ffn", cffn_cost(d, cfg.d_ff, n, B, T_dec));
    add(p + ".norm3", layer_norm_cost(d));
  }
  add("decoder.output", linear_cost(d, cfg.vocab_size, B, T_dec));
  add("ctc.head", linear_cost(d, cfg.vocab_size, B, T));
  return rows;
}

u64 analytic_param_count(const ModelConfig& cfg) {
  u64 total = 0;
  for (const auto& r : analytic_rows(cfg, 1, 1, 1)) total += r.params_analytic;
  return total;
}

CostReport model_cost_report(const ModelConfig& cfg, const ModelConfig& baseline, std::size_t B,
                             std::size_t T, std::size_t T_dec) {
  if (B == 0 || T == 0) throw ConfigError("cost report needs positive batch and length");
  if (T_dec == 0) T_dec = T;
  CostReport report;
  report.model = variant_name(cfg.variant);
  report.baseline = variant_name(baseline.variant);
  report.batch = B;
  report.enc_steps = T;
  report.dec_steps = T_dec;

  report.rows = analytic_rows(cfg, B, T, T_dec);
  const u64 ffn_weights = measure(cfg, B, T, T_dec, report.rows);
  reconcile(report.model, report.rows);
  report.baseline_rows = analytic_rows(baseline, B, T, T_dec);
  const u64 base_ffn_weights = measure(baseline, B, T, T_dec, report.baseline_rows);
  reconcile(report.baseline, report.baseline_rows);
  append_aggregates(report.rows);
  append_aggregates(report.baseline_rows);

  std::map<std::string, const CostRow*> base;
  for (const auto& r : report.baseline_rows) base[r.block] = &r;
  for (auto& r : report.rows) {
    auto it = base.find(r.block);
    r.reduction_pct = it == base.end() ? std::numeric_limits<double>::quiet_NaN()
                                       : reduction(it->second->params_measured, r.params_measured);
  }
  const CostRow& total = report.row("total");
  const CostRow& base_total = *base.at("total");
  const CostRow& emb = report.row("sum.embedding_projection");
  const CostRow& base_emb = *base.at("sum.embedding_projection");
  report.param_reduction_pct = reduction(base_total.params_measured, total.params_measured);
  report.flop_reduction_pct = reduction(base_total.flops_measured, total.flops_measured);
  report.core_param_reduction_pct = reduction(base_total.params_measured - base_emb.params_measured,
                                              total.params_measured - emb.params_measured);
  report.ffn_weight_reduction_pct = reduction(base_ffn_weights, ffn_weights);
  return report;
}

void write_cost_csv(std::ostream& out, const CostReport& report) {
  out << "block,params_analytic,params_measured,flops_analytic,flops_measured,reduction_pct\n";
  for (const auto& r : report.rows) {
    out << r.block << ',' << r.params_analytic << ',' << r.params_measured << ','
        << r.flops_analytic << ',' << r.flops_measured << ',';
    if (std::isnan(r.reduction_pct)) {
      out << "";
    } else {
      out << std::fixed << std::setprecision(4) << r.reduction_pct << std::defaultfloat;
    }
    out << '\n';
  }
}

void write_cost_table(std::ostream& out, const CostReport& report) {
  out << "cost report: " << report.model << " vs " << report.baseline << ", B=" << report.batch
      << ", T=" << report.enc_steps << ", T_dec=" << report.dec_steps << "\n"
      << "FLOPs: forward matrix products only, 2mnk each; softmax, masks, biases, residuals and\n"
      << "norms are not counted.\n"
      << "Whole-model totals include the input projection, token embedding, output projection\n"
      << "and CTC head (sum.embedding_projection). They depend on vocab_size and feature_dim,\n"
      << "so whole-model percentages are approximate; the core figure excludes them.\n\n";
  out << std::left << std::setw(28) << "block" << std::right << std::setw(14) << "params"
      << std::setw(14) << "baseline" << std::setw(18) << "flops" << std::setw(10) << "reduct%"
      << "\n";
  std::map<std::string, u64> base;
  for (const auto& r : report.baseline_rows) base[r.block] = r.params_measured;
  for (const auto& r : report.rows) {
    out << std::left << std::setw(28) << r.block << std::right << std::setw(14)
        << r.params_measured << std::setw(14);
    auto it = base.find(r.block);
    if (it == base.end()) {
      out << "-";
    } else {
      out << it->second;
    }
    out << std::setw(18) << r.flops_measured << std::setw(10);
    if (std::isnan(r.reduction_pct)) {
      out << "-";
    } else {
      out << std::fixed << std::setprecision(2) << r.reduction_pct << std::defaultfloat;
    }
    out << "\n";
  }
  out << std::fixed << std::setprecision(2) << "\nwhole-model parameter reduction: "
      << report.param_reduction_pct << "%\n"
      << "parameter reduction excluding embeddings/projections: " << report.core_param_reduction_pct
      << "%\n"
      << "FFN weight reduction: " << report.ffn_weight_reduction_pct << "%\n"
      << "FLOP reduction: " << report.flop_reduction_pct << "%\n" << std::defaultfloat;
}

MemoryEstimate lean_memory_estimate(const ModelConfig& cfg, std::size_t B, std::size_t T,
                                    std::size_t T_dec) {
  cfg.validate();
  const u64 d = cfg.d_model, h = cfg.heads, n = ffn_chunks(cfg);
  const u64 M = B * T * d;       // encoder activation
  const u64 Y = B * T_dec * d;   // decoder activation
  const bool banded = cfg.variant != Variant::kTransformer;
  const u64 band = 2 * cfg.window + 1;
  // Score buffers: dense [B,h,T,T] or banded residual + probabilities.
  const u64 enc_scores = banded ? B * h * T * band : B * h * T * T;
  const u64 dec_scores = banded ? B * h * T_dec * band : B * h * T_dec * T_dec;
  const u64 enc_state = banded ? 2 * enc_scores : 0;
  const u64 dec_state = banded ? 2 * dec_scores : 0;
  // Banded layers hold x, q, k next to the carried state; dense layers hold
  // x, q, k, v and the context next to one score buffer.
  const u64 enc_attn = banded ? 3 * M + enc_state : 5 * M + enc_scores;
  const u64 dec_attn = banded ? M + 3 * Y + dec_state : M + 5 * Y + dec_scores;
  const std::vector<u64> phases{
      B * T * cfg.feature_dim + 2 * M,
      enc_attn,
      2 * M + B * T * cfg.d_ff / n + enc_state,
      dec_attn,
      3 * M + 3 * Y + B * h * T_dec * T + dec_state,
      M + 2 * Y + B * T_dec * cfg.d_ff / n + dec_state,
      M + Y + B * T_dec * cfg.vocab_size + dec_state,
  };
  MemoryEstimate est;
  est.params_bytes = analytic_param_count(cfg) * sizeof(double);
  est.features_bytes = B * T * cfg.feature_dim * sizeof(double);
  est.activation_bytes = *std::max_element(phases.begin(), phases.end()) * sizeof(double);
  est.score_bytes = enc_scores * sizeof(double);
  return est;
}

}  // namespace easr
