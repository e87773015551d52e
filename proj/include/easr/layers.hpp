#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "easr/random.hpp"
#include "easr/tensor.hpp"

namespace easr {

struct NamedParameter {
  std::string name;
  Tensor tensor;
};
using ParameterList = std::vector<NamedParameter>;

std::size_t count_scalars(const ParameterList& params);

// Xavier-uniform [fan_in, fan_out] matrix that requires grad.
Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

// y = x W + b with W stored [in, out].
struct Linear {
  Tensor weight;
  Tensor bias;

  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng);

  Tensor operator()(const Tensor& x) const;
  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }
  std::size_t parameter_count() const { return weight.numel() + bias.numel(); }
  void collect(const std::string& prefix, ParameterList& out) const;
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;
  double eps = 1e-12;

  LayerNorm() = default;
  explicit LayerNorm(std::size_t width, double eps = 1e-12);

  Tensor operator()(const Tensor& x) const;
  std::size_t parameter_count() const { return gamma.numel() + beta.numel(); }
  void collect(const std::string& prefix, ParameterList& out) const;
};

// Sinusoidal absolute positions, [steps, width].
Tensor sinusoidal_positions(std::size_t steps, std::size_t width);

}  // namespace easr
