#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "pbooth/nn/tensor.h"

namespace pbooth::diffusion {

enum class ScheduleKind { kCosine, kLinear };

std::string_view ScheduleKindName(ScheduleKind kind);
ScheduleKind ScheduleKindFromName(std::string_view name);  // ConfigError

// Steps are indexed 0..T-1; index 0 is the least noisy (alpha_bar close to 1).
struct DiffusionSchedule {
  std::size_t steps = 0;
  ScheduleKind kind = ScheduleKind::kCosine;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;
  // Posterior q(x_{t-1} | x_t, x_0) = N(coef_x0 * x_0 + coef_xt * x_t, variance)
  // for t >= 1.
  std::vector<double> posterior_coef_x0;
  std::vector<double> posterior_coef_xt;
  std::vector<double> posterior_variance;

  static DiffusionSchedule Make(std::size_t steps, ScheduleKind kind = ScheduleKind::kCosine);

  void CheckStep(std::size_t t) const;  // UsageError when t >= steps
};

// Offset used by the cosine schedule, f(u) = cos^2(((u + s) / (1 + s)) * pi / 2).
inline constexpr double kCosineOffset = 0.008;
inline constexpr double kMaxBeta = 0.999;

// x_t = sqrt(alpha_bar_t) x_0 + sqrt(1 - alpha_bar_t) noise.
nn::Tensor<float> QSample(const nn::Tensor<float>& x0, std::size_t t,
                          const nn::Tensor<float>& noise,
                          const DiffusionSchedule& schedule);

// One ancestral step: the posterior mean given the x_0 estimate plus scaled
// noise. At t = 0 returns x0_hat unchanged.
nn::Tensor<float> PosteriorStep(const nn::Tensor<float>& xt,
                                const nn::Tensor<float>& x0_hat, std::size_t t,
                                const nn::Tensor<float>& noise,
                                const DiffusionSchedule& schedule);

}  // namespace pbooth::diffusion
