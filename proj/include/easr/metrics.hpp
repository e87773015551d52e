#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace easr {

std::size_t levenshtein(std::span<const int> a, std::span<const int> b);

// Edit distance over reference length. An empty reference scores 0 for an
// empty hypothesis and len(hyp) otherwise.
double cer(std::span<const int> hyp, std::span<const int> ref);

// Total edits over total reference length.
double corpus_cer(const std::vector<std::vector<int>>& hyps,
                  const std::vector<std::vector<int>>& refs);

}  // namespace easr
