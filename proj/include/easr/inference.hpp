#pragma once

#include <cstddef>
#include <vector>

#include "easr/model.hpp"

namespace easr {

// Gradient-free forward pass that frees every intermediate as soon as it is
// consumed. Inputs are unpadded: every item uses the full T and T_dec.
//
// Baseline models store dense [B,h,T,T] score tensors. Efficient models keep
// self-attention scores only inside the band, as [B,h,T,2w+1] with column k
// holding key j = i - w + k; cross-attention stays dense.
struct LeanStats {
  std::size_t score_bytes = 0;  // largest self-attention score buffer
};

// Returns decoder logits [B, T_dec, V] for teacher-forced `tokens` (each
// including sos, all the same length).
Tensor lean_forward(const Model& model, const Tensor& features,
                    const std::vector<std::vector<int>>& tokens, LeanStats* stats = nullptr);

// Encoder output only, [B, T, d_model].
Tensor lean_encode(const Model& model, const Tensor& features, LeanStats* stats = nullptr);

}  // namespace easr
