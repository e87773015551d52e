#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "easr/model.hpp"

namespace easr {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
};

// Adam with bias correction. Moments are allocated once, one buffer per
// parameter with the parameter's shape.
class Adam {
 public:
  explicit Adam(ParameterList params, AdamOptions options = {});

  // Consumes the gradients currently stored on the parameters.
  void step(double lr);
  void zero_grad();

  std::size_t steps() const { return steps_; }
  const ParameterList& parameters() const { return params_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }

 private:
  ParameterList params_;
  AdamOptions options_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::size_t steps_ = 0;
};

// Linear warmup to `peak` over `warmup` steps, then constant. `step` counts
// from 0, so step 0 already gets peak / warmup.
double warmup_lr(double peak, std::size_t step, std::size_t warmup);

struct StepResult {
  double loss = 0.0;  // pre-update joint loss
  double ce = 0.0;
  double ctc = 0.0;
};

class Trainer {
 public:
  Trainer(Model& model, std::uint64_t seed, AdamOptions options = {});

  // Forward with dropout, joint loss, backward, Adam update. Throws
  // NonFiniteLoss (model untouched) if the loss is not finite.
  StepResult train_step(const Batch& batch, double lr);

  const Adam& optimizer() const { return adam_; }

 private:
  Model& model_;
  Rng rng_;
  Adam adam_;
};

}  // namespace easr
