#include "easr/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "easr/errors.hpp"

namespace easr {
namespace {

constexpr double kLogZero = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kLogZero) return b;
  if (b == kLogZero) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

struct ItemResult {
  double log_likelihood = kLogZero;
  // d(-log p)/d(log_probs[t, k]) for t < frames; empty when infeasible.
  std::vector<double> grad;
};

// alpha includes the emission at t; beta covers frames after t only, so
// alpha_t(s) + beta_t(s) is the log mass of paths through (t, s).
ItemResult forward_backward(const double* lp, std::size_t frames, std::size_t vocab,
                            std::span<const int> target, int blank) {
  ItemResult result;
  if (ctc_min_frames(target) > frames) return result;

  const std::size_t S = 2 * target.size() + 1;
  std::vector<int> ext(S, blank);
  for (std::size_t i = 0; i < target.size(); ++i) ext[2 * i + 1] = target[i];
  auto emit = [&](std::size_t t, std::size_t s) {
    return lp[t * vocab + static_cast<std::size_t>(ext[s])];
  };
  auto can_skip = [&](std::size_t s) { return s >= 2 && ext[s] != blank && ext[s] != ext[s - 2]; };

  std::vector<double> alpha(frames * S, kLogZero);
  alpha[0] = emit(0, 0);
  if (S > 1) alpha[1] = emit(0, 1);
  for (std::size_t t = 1; t < frames; ++t) {
    for (std::size_t s = 0; s < S; ++s) {
      double acc = alpha[(t - 1) * S + s];
      if (s >= 1) acc = log_add(acc, alpha[(t - 1) * S + s - 1]);
      if (can_skip(s)) acc = log_add(acc, alpha[(t - 1) * S + s - 2]);
      alpha[t * S + s] = acc == kLogZero ? kLogZero : acc + emit(t, s);
    }
  }

  std::vector<double> beta(frames * S, kLogZero);
  beta[(frames - 1) * S + S - 1] = 0.0;
  if (S > 1) beta[(frames - 1) * S + S - 2] = 0.0;
  for (std::size_t t = frames - 1; t-- > 0;) {
    for (std::size_t s = 0; s < S; ++s) {
      auto next = [&](std::size_t s2) { return beta[(t + 1) * S + s2] + emit(t + 1, s2); };
      double acc = next(s);
      if (s + 1 < S) acc = log_add(acc, next(s + 1));
      if (s + 2 < S && can_skip(s + 2)) acc = log_add(acc, next(s + 2));
      beta[t * S + s] = acc;
    }
  }

  double ll = alpha[(frames - 1) * S + S - 1];
  if (S > 1) ll = log_add(ll, alpha[(frames - 1) * S + S - 2]);
  if (ll == kLogZero) return result;
  result.log_likelihood = ll;

  result.grad.assign(frames * vocab, 0.0);
  std::vector<double> occupancy(vocab);
  for (std::size_t t = 0; t < frames; ++t) {
    std::fill(occupancy.begin(), occupancy.end(), kLogZero);
    for (std::size_t s = 0; s < S; ++s) {
      const auto k = static_cast<std::size_t>(ext[s]);
      occupancy[k] = log_add(occupancy[k], alpha[t * S + s] + beta[t * S + s]);
    }
    for (std::size_t k = 0; k < vocab; ++k) {
      if (occupancy[k] != kLogZero) result.grad[t * vocab + k] = -std::exp(occupancy[k] - ll);
    }
  }
  return result;
}

}  // namespace

bool CtcLoss::all_feasible() const {
  return std::all_of(feasible.begin(), feasible.end(), [](bool f) { return f; });
}

std::size_t ctc_min_frames(std::span<const int> target) {
  std::size_t n = target.size();
  for (std::size_t i = 1; i < target.size(); ++i)
    if (target[i] == target[i - 1]) ++n;
  return n;
}

CtcLoss ctc_loss(const Tensor& log_probs, const std::vector<std::vector<int>>& targets,
                 std::span<const std::size_t> input_lengths, int blank) {
  if (log_probs.rank() != 3) {
    throw DimensionError("ctc_loss expects [B,T,V] log-probs, got " +
                         shape_to_string(log_probs.shape()));
  }
  const std::size_t B = log_probs.dim(0), T = log_probs.dim(1), V = log_probs.dim(2);
  if (targets.size() != B || input_lengths.size() != B) {
    throw DimensionError("ctc_loss batch of " + std::to_string(B) + " got " +
                         std::to_string(targets.size()) + " targets and " +
                         std::to_string(input_lengths.size()) + " lengths");
  }
  CtcLoss loss;
  loss.feasible.assign(B, false);
  double total = 0.0;
  std::vector<ItemResult> items(B);
  const double* lp = log_probs.data().data();
  for (std::size_t b = 0; b < B; ++b) {
    if (input_lengths[b] == 0 || input_lengths[b] > T) {
      throw DimensionError("ctc input length " + std::to_string(input_lengths[b]) +
                           " outside [1, " + std::to_string(T) + "]");
    }
    for (int id : targets[b]) {
      if (id == blank || id < 0 || static_cast<std::size_t>(id) >= V) {
        throw VocabError("ctc target id " + std::to_string(id) + " is blank or outside [0, " +
                         std::to_string(V) + ")");
      }
    }
    items[b] = forward_backward(lp + b * T * V, input_lengths[b], V, targets[b], blank);
    loss.feasible[b] = !items[b].grad.empty();
    total += loss.feasible[b] ? -items[b].log_likelihood : std::numeric_limits<double>::infinity();
  }
  const double inv_b = 1.0 / static_cast<double>(B);
  const bool ok = loss.all_feasible();
  loss.value = Tensor::make_result(
      Shape{}, Buffer{total * inv_b}, {log_probs},
      [items = ok ? std::move(items) : std::vector<ItemResult>{}, T, V, inv_b](detail::Node& self) {
        if (items.empty()) return;
        auto& g = self.parents[0]->ensure_grad();
        const double up = self.grad[0] * inv_b;
        for (std::size_t b = 0; b < items.size(); ++b) {
          const auto& ig = items[b].grad;
          for (std::size_t i = 0; i < ig.size(); ++i) g[b * T * V + i] += up * ig[i];
        }
      });
  return loss;
}

}  // namespace easr
