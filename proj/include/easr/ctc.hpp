#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "easr/tensor.hpp"

namespace easr {

struct CtcLoss {
  // Mean over the batch of -log p(target | input); +inf when any item has no
  // valid alignment.
  Tensor value;
  std::vector<bool> feasible;

  bool all_feasible() const;
};

// Frames needed by the shortest alignment: one per label plus one blank
// between each pair of equal neighbours.
std::size_t ctc_min_frames(std::span<const int> target);

// Log-space forward algorithm. log_probs [B, T, V] are log-softmax outputs
// and frames at or beyond input_lengths[b] are ignored. Blank id is 0; target
// ids must lie in [1, V).
CtcLoss ctc_loss(const Tensor& log_probs, const std::vector<std::vector<int>>& targets,
                 std::span<const std::size_t> input_lengths, int blank = 0);

}  // namespace easr
