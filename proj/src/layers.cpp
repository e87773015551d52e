#include "easr/layers.hpp"

#include <cmath>

#include "easr/ops.hpp"

namespace easr {

std::size_t count_scalars(const ParameterList& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Buffer data(fan_in * fan_out);
  for (auto& v : data) v = rng.uniform(-limit, limit);
  return Tensor(Shape{fan_in, fan_out}, std::move(data), true);
}

Linear::Linear(std::size_t in, std::size_t out, Rng& rng)
    : weight(xavier_uniform(in, out, rng)), bias(Tensor::zeros(Shape{out}, true)) {}

Tensor Linear::operator()(const Tensor& x) const { return add(matmul(x, weight), bias); }

void Linear::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

LayerNorm::LayerNorm(std::size_t width, double eps_)
    : gamma(Tensor::full(Shape{width}, 1.0, true)), beta(Tensor::zeros(Shape{width}, true)),
      eps(eps_) {}

Tensor LayerNorm::operator()(const Tensor& x) const { return layer_norm(x, gamma, beta, eps); }

void LayerNorm::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

Tensor sinusoidal_positions(std::size_t steps, std::size_t width) {
  Buffer pe(steps * width);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t i = 0; i < width; i += 2) {
      const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) /
                                   static_cast<double>(width));
      pe[t * width + i] = std::sin(static_cast<double>(t) * freq);
      if (i + 1 < width) pe[t * width + i + 1] = std::cos(static_cast<double>(t) * freq);
    }
  }
  return Tensor(Shape{steps, width}, std::move(pe));
}

}  // namespace easr
