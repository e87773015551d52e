#include "easr/bench.hpp"

#include <new>
#include <optional>

#include "easr/cost_model.hpp"
#include "easr/errors.hpp"
#include "easr/inference.hpp"
#include "easr/model.hpp"
#include "easr/tensor.hpp"

namespace easr {
namespace {

class LimitGuard {
 public:
  explicit LimitGuard(std::int64_t bytes) : previous_(MemoryTracker::limit()) {
    MemoryTracker::set_limit(bytes);
  }
  ~LimitGuard() { MemoryTracker::set_limit(previous_); }

 private:
  std::int64_t previous_;
};

void run_variant(const ModelConfig& cfg, const BenchConfig& bench, std::uint64_t seed,
                 std::vector<BenchRow>& rows) {
  const std::int64_t before = MemoryTracker::live_bytes();
  std::optional<Model> model;
  try {
    LimitGuard limit(bench.memory_limit_bytes);
    model.emplace(cfg, seed);
  } catch (const std::bad_alloc&) {
    for (std::size_t T : bench.lengths) {
      rows.push_back(BenchRow{.model = variant_name(cfg.variant), .steps = T,
                              .dec_steps = std::max<std::size_t>(1, T / bench.decoder_ratio),
                              .status = "OOM"});
    }
    return;
  }
  const std::int64_t params_bytes = MemoryTracker::live_bytes() - before;
  for (std::size_t T : bench.lengths) {
    BenchRow row;
    row.model = variant_name(cfg.variant);
    row.steps = T;
    row.dec_steps = std::max<std::size_t>(1, T / bench.decoder_ratio);
    row.params_bytes = params_bytes;
    const MemoryEstimate est = lean_memory_estimate(cfg, 1, T, row.dec_steps);
    row.analytic_bytes = static_cast<std::int64_t>(est.total());
    try {
      LimitGuard limit(bench.memory_limit_bytes);
      Rng rng(seed + T);
      Buffer feats(T * cfg.feature_dim);
      for (auto& v : feats) v = rng.normal();
      const Tensor features(Shape{1, T, cfg.feature_dim}, std::move(feats));
      std::vector<std::vector<int>> tokens(1, std::vector<int>{kSosId});
      while (tokens[0].size() < row.dec_steps) {
        tokens[0].push_back(rng.uniform_int(kFirstSymbol, static_cast<int>(cfg.vocab_size) - 1));
      }
      MemoryTracker::reset_peak();
      LeanStats stats;
      {
        const Tensor logits = lean_forward(*model, features, tokens, &stats);
      }
      row.peak_bytes = MemoryTracker::peak_bytes() - before;
      row.score_bytes = static_cast<std::int64_t>(stats.score_bytes);
      row.status = "ok";
    } catch (const std::bad_alloc&) {
      row.peak_bytes = 0;
      row.status = "OOM";
    }
    rows.push_back(row);
  }
}

}  // namespace

std::vector<BenchRow> bench_memory(const ModelConfig& cfg, const BenchConfig& bench,
                                   std::uint64_t seed) {
  if (bench.lengths.empty()) throw ConfigError("bench_lengths is empty");
  if (bench.decoder_ratio == 0) throw ConfigError("bench_decoder_ratio must be positive");
  std::vector<BenchRow> rows;
  run_variant(cfg.matched_baseline(), bench, seed, rows);
  if (cfg.variant != Variant::kTransformer) run_variant(cfg, bench, seed, rows);
  return rows;
}

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows) {
  out << "model,T,T_dec,params_bytes,peak_bytes,analytic_bytes,score_bytes,status\n";
  for (const auto& r : rows) {
    out << r.model << ',' << r.steps << ',' << r.dec_steps << ',' << r.params_bytes << ','
        << r.peak_bytes << ',' << r.analytic_bytes << ',' << r.score_bytes << ',' << r.status
        << '\n';
  }
}

}  // namespace easr
