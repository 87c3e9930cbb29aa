#include "pbooth/nn/optim.h"

#include <cmath>

#include "pbooth/errors.h"

namespace pbooth::nn {

void OptimizerConfig::Validate() const {
  if (!(learning_rate > 0.0)) {
    throw ConfigError("optimizer: learning_rate must be > 0");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("optimizer: betas must lie in [0, 1)");
  }
  if (weight_decay < 0.0 || epsilon <= 0.0) {
    throw ConfigError("optimizer: weight_decay must be >= 0 and epsilon > 0");
  }
}

template <typename T>
AdamW<T>::AdamW(OptimizerConfig config) : config_(config) {
  config_.Validate();
}

template <typename T>
void AdamW<T>::Step(const ParameterList<T>& params) {
  for (auto* p : params) {
    if (p->trainable && !p->grad.AllFinite()) {
      throw NumericError("non-finite gradient in parameter '" + p->name + "'");
    }
  }
  ++steps_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  const double lr = config_.learning_rate;
  const double decay = lr * config_.weight_decay;
  for (auto* p : params) {
    if (!p->trainable) continue;
    const std::size_t n = p->value.size();
    T* w = p->value.data();
    const T* g = p->grad.data();
    T* m = p->first_moment.data();
    T* v = p->second_moment.data();
    for (std::size_t i = 0; i < n; ++i) {
      const double gi = g[i];
      const double mi = b1 * m[i] + (1.0 - b1) * gi;
      const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double update = (mi / c1) / (std::sqrt(vi / c2) + config_.epsilon);
      w[i] = static_cast<T>(w[i] - decay * w[i] - lr * update);
    }
  }
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace pbooth::nn
