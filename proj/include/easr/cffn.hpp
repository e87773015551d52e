#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "easr/layers.hpp"

namespace easr {

// Contiguous equal slices along the last axis.
std::vector<Tensor> split_embed(const Tensor& x, std::size_t chunks);

// n * (2 (d/n)(d_ff/n) + d_ff/n + d/n); throws DivisibilityError unless n
// divides both widths.
std::size_t cffn_param_count(std::size_t d_model, std::size_t d_ff, std::size_t chunks);

// Chunk-level feed-forward block: chunk i maps its d/n input slice through
// ReLU(x K_i + b1_i) V_i + b2_i with hidden width d_ff/n. One chunk is the
// ordinary position-wise FFN.
class CffnBlock {
 public:
  struct Chunk {
    Linear key;    // [d/n, d_ff/n]
    Linear value;  // [d_ff/n, d/n]
  };

  CffnBlock(std::size_t d_model, std::size_t d_ff, std::size_t chunks, Rng& rng);

  Tensor forward(const Tensor& x) const;
  Tensor operator()(const Tensor& x) const { return forward(x); }

  std::size_t d_model() const { return d_model_; }
  std::size_t d_ff() const { return d_ff_; }
  std::size_t n_chunks() const { return chunks_.size(); }
  const std::vector<Chunk>& chunks() const { return chunks_; }

  std::size_t parameter_count() const;
  void collect(const std::string& prefix, ParameterList& out) const;

 private:
  std::size_t d_model_;
  std::size_t d_ff_;
  std::vector<Chunk> chunks_;
};

inline Tensor cffn_forward(const Tensor& x, const CffnBlock& block) { return block.forward(x); }

}  // namespace easr
