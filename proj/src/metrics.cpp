#include "easr/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "easr/errors.hpp"

namespace easr {

std::size_t levenshtein(std::span<const int> a, std::span<const int> b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double cer(std::span<const int> hyp, std::span<const int> ref) {
  if (ref.empty()) return static_cast<double>(hyp.size());
  return static_cast<double>(levenshtein(hyp, ref)) / static_cast<double>(ref.size());
}

double corpus_cer(const std::vector<std::vector<int>>& hyps,
                  const std::vector<std::vector<int>>& refs) {
  if (hyps.size() != refs.size()) throw DimensionError("hypothesis and reference counts differ");
  std::size_t edits = 0, total = 0;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    edits += levenshtein(hyps[i], refs[i]);
    total += refs[i].size();
  }
  if (total == 0) return static_cast<double>(edits);
  return static_cast<double>(edits) / static_cast<double>(total);
}

}  // namespace easr
