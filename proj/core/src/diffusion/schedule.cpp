#include "pbooth/diffusion/schedule.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "pbooth/errors.h"

namespace pbooth::diffusion {

std::string_view ScheduleKindName(ScheduleKind kind) {
  return kind == ScheduleKind::kCosine ? "cosine" : "linear";
}

ScheduleKind ScheduleKindFromName(std::string_view name) {
  if (name == "cosine") return ScheduleKind::kCosine;
  if (name == "linear") return ScheduleKind::kLinear;
  throw ConfigError("unknown noise schedule '" + std::string(name) +
                    "' (expected cosine or linear)");
}

namespace {

double CosineLevel(double u) {
  const double v = std::cos((u + kCosineOffset) / (1.0 + kCosineOffset) * M_PI / 2.0);
  return v * v;
}

}  // namespace

DiffusionSchedule DiffusionSchedule::Make(std::size_t steps, ScheduleKind kind) {
  if (steps < 2) throw ConfigError("diffusion needs at least 2 steps");
  DiffusionSchedule s;
  s.steps = steps;
  s.kind = kind;
  const double n = static_cast<double>(steps);
  for (std::size_t i = 0; i < steps; ++i) {
    double beta = 0.0;
    if (kind == ScheduleKind::kCosine) {
      beta = 1.0 - CosineLevel((i + 1) / n) / CosineLevel(i / n);
    } else {
      // Endpoints of the 1000-step linear schedule, rescaled to `steps`.
      const double scale = 1000.0 / n;
      const double lo = 1e-4 * scale;
      const double hi = 0.02 * scale;
      beta = lo + (hi - lo) * (steps == 1 ? 0.0 : i / (n - 1.0));
    }
    s.beta.push_back(std::clamp(beta, 1e-8, kMaxBeta));
  }
  double running = 1.0;
  for (double b : s.beta) {
    s.alpha.push_back(1.0 - b);
    running *= 1.0 - b;
    s.alpha_bar.push_back(running);
  }
  for (std::size_t t = 0; t < steps; ++t) {
    if (t == 0) {
      s.posterior_coef_x0.push_back(1.0);
      s.posterior_coef_xt.push_back(0.0);
      s.posterior_variance.push_back(0.0);
      continue;
    }
    const double ab = s.alpha_bar[t];
    const double ab_prev = s.alpha_bar[t - 1];
    s.posterior_coef_x0.push_back(s.beta[t] * std::sqrt(ab_prev) / (1.0 - ab));
    s.posterior_coef_xt.push_back((1.0 - ab_prev) * std::sqrt(s.alpha[t]) / (1.0 - ab));
    s.posterior_variance.push_back(s.beta[t] * (1.0 - ab_prev) / (1.0 - ab));
  }
  return s;
}

void DiffusionSchedule::CheckStep(std::size_t t) const {
  if (t >= steps) {
    throw UsageError("diffusion step " + std::to_string(t) + " outside [0, " +
                     std::to_string(steps) + ")");
  }
}

nn::Tensor<float> QSample(const nn::Tensor<float>& x0, std::size_t t,
                          const nn::Tensor<float>& noise,
                          const DiffusionSchedule& schedule) {
  schedule.CheckStep(t);
  nn::CheckSameShape(x0.shape(), noise.shape(), "q_sample");
  const double a = std::sqrt(schedule.alpha_bar[t]);
  const double s = std::sqrt(1.0 - schedule.alpha_bar[t]);
  nn::Tensor<float> out(x0.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<float>(a * x0[i] + s * noise[i]);
  }
  return out;
}

nn::Tensor<float> PosteriorStep(const nn::Tensor<float>& xt,
                                const nn::Tensor<float>& x0_hat, std::size_t t,
                                const nn::Tensor<float>& noise,
                                const DiffusionSchedule& schedule) {
  schedule.CheckStep(t);
  nn::CheckSameShape(xt.shape(), x0_hat.shape(), "posterior step");
  if (t == 0) return x0_hat;
  nn::CheckSameShape(xt.shape(), noise.shape(), "posterior step");
  const double c0 = schedule.posterior_coef_x0[t];
  const double ct = schedule.posterior_coef_xt[t];
  const double sd = std::sqrt(schedule.posterior_variance[t]);
  nn::Tensor<float> out(xt.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<float>(c0 * x0_hat[i] + ct * xt[i] + sd * noise[i]);
  }
  return out;
}

}  // namespace pbooth::diffusion
