#pragma once

#include <cmath>
#include <cstdint>

#include "pbooth/nn/autograd.h"

namespace pbooth::nn {

struct OptimizerConfig {
  double learning_rate = 1e-4;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void Validate() const;
};

// AdamW with bias-corrected moments and decoupled weight decay.
template <typename T>
class AdamW {
 public:
  explicit AdamW(OptimizerConfig config);

  // Updates every trainable parameter from its gradient. Throws
  // NumericError naming the parameter if a gradient is not finite.
  void Step(const ParameterList<T>& params);
  std::int64_t steps() const { return steps_; }
  const OptimizerConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }

 private:
  OptimizerConfig config_;
  std::int64_t steps_ = 0;
};

template <typename T>
void ZeroGrad(const ParameterList<T>& params) {
  for (auto* p : params) p->ZeroGrad();
}

template <typename T>
double GradNorm(const ParameterList<T>& params) {
  double s = 0.0;
  for (auto* p : params) {
    for (T g : p->grad.values()) s += static_cast<double>(g) * static_cast<double>(g);
  }
  return std::sqrt(s);
}

}  // namespace pbooth::nn
