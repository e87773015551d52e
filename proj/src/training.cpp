#include "easr/training.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "easr/errors.hpp"

namespace easr {

Adam::Adam(ParameterList params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.push_back(Tensor::zeros(p.tensor.shape()));
    v_.push_back(Tensor::zeros(p.tensor.shape()));
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void Adam::step(double lr) {
  ++steps_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i].tensor;
    const std::span<const double> g = p.grad();
    std::span<double> m = m_[i].mutable_data();
    std::span<double> v = v_[i].mutable_data();
    for (std::size_t k = 0; k < g.size(); ++k) {
      m[k] = b1 * m[k] + (1.0 - b1) * g[k];
      v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
    }
    if (lr == 0.0) continue;
    std::span<double> w = p.mutable_data();
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      w[k] -= lr * mhat / (std::sqrt(vhat) + options_.eps);
    }
  }
}

double warmup_lr(double peak, std::size_t step, std::size_t warmup) {
  if (warmup == 0 || step >= warmup) return peak;
  return peak * static_cast<double>(step + 1) / static_cast<double>(warmup);
}

Trainer::Trainer(Model& model, std::uint64_t seed, AdamOptions options)
    : model_(model), rng_(seed), adam_(model.parameters(), options) {}

StepResult Trainer::train_step(const Batch& batch, double lr) {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be finite and >= 0");
  RunContext ctx{.training = true, .rng = &rng_};
  const LossBreakdown loss = model_.loss(batch, ctx);
  const double total = loss.total.item();
  if (!std::isfinite(total)) {
    std::ostringstream msg;
    msg << "non-finite loss " << total << " (ce=" << loss.ce << ", ctc=" << loss.ctc
        << ", ctc feasible=" << (loss.feasible ? "yes" : "no") << ", batch=" << batch.size()
        << ") after " << adam_.steps() << " updates";
    throw NonFiniteLoss(msg.str());
  }
  adam_.zero_grad();
  loss.total.backward();
  adam_.step(lr);
  return {total, loss.ce, loss.ctc};
}

}  // namespace easr
