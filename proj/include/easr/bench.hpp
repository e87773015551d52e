#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "easr/config.hpp"

namespace easr {

struct BenchRow {
  std::string model;
  std::size_t steps = 0;      // encoder length T
  std::size_t dec_steps = 0;  // decoder length
  std::int64_t params_bytes = 0;
  std::int64_t peak_bytes = 0;        // parameters + inputs + activations
  std::int64_t analytic_bytes = 0;
  std::int64_t score_bytes = 0;       // largest self-attention score buffer
  std::string status;                 // "ok" or "OOM"
};

// Batch-1 forward-only runs of the matched baseline and `cfg` at every
// configured length. A run that exceeds bench.memory_limit_bytes (when
// positive) is recorded as OOM and the sweep continues.
std::vector<BenchRow> bench_memory(const ModelConfig& cfg, const BenchConfig& bench,
                                   std::uint64_t seed);

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows);

}  // namespace easr
