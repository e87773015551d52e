#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "easr/random.hpp"
#include "easr/tensor.hpp"

namespace easr {

// Differentiable tensor operations. Every op returns a fresh tensor; inputs
// are never mutated.

// Matrix product over the last two axes. Leading batch axes must either match
// or be absent on one side (a rank-2 operand is shared across the batch).
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose_last2(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

// [B, T, h*dk] <-> [B, h, T, dk]
Tensor split_heads(const Tensor& x, std::size_t heads);
Tensor merge_heads(const Tensor& x);

// Elementwise sum. b may also be any trailing-suffix shape of a, in which case
// it is broadcast over the leading axes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
// Elementwise product with a constant (non-differentiable) factor buffer.
Tensor mul_const(const Tensor& x, std::span<const double> factors);

Tensor relu(const Tensor& x);
// Inverted dropout; identity when p == 0.
Tensor dropout(const Tensor& x, double p, Rng& rng);

// Softmax over the last axis. kMaskedScore entries map to exactly 0. Throws
// DegenerateRowError when a whole row is masked.
Tensor softmax_rows(const Tensor& x);
Tensor log_softmax_rows(const Tensor& x);

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);

// keep[b][i][j] over the trailing [rows, cols] of a [batch, heads, rows, cols]
// score tensor; shared by every head.
struct ScoreMask {
  std::size_t batch = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> keep;

  bool kept(std::size_t b, std::size_t i, std::size_t j) const {
    return keep[(b * rows + i) * cols + j] != 0;
  }
};

// Replaces non-kept entries with kMaskedScore; gradient flows only through
// kept entries.
Tensor mask_scores(const Tensor& scores, const ScoreMask& mask);

Tensor slice_last(const Tensor& x, std::size_t begin, std::size_t length);
Tensor concat_last(const std::vector<Tensor>& parts);

// Row lookup: table [V, d], ids row-major [batch, steps] -> [batch, steps, d].
Tensor embedding(const Tensor& table, std::span<const int> ids, std::size_t batch,
                 std::size_t steps);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// sum(x * weights) with constant weights.
Tensor weighted_sum(const Tensor& x, std::span<const double> weights);

}  // namespace easr
