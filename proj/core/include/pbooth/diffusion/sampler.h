#pragma once

#include <cstddef>
#include <functional>

#include "pbooth/data/motion.h"
#include "pbooth/diffusion/denoiser.h"
#include "pbooth/diffusion/schedule.h"

namespace pbooth::diffusion {

struct GuidanceConfig {
  double g_t = 10.0;
  double g_v = 15.0;
  double b = 0.7;
  double s_t = 0.3;
  double s_v = 0.3;

  void Validate() const;  // ConfigError on non-finite values or b outside [0, 1]
};

// Dual extrapolation from the three distinct conditional predictions:
//   D_T = D(V*, none) + g_t (D(V*, T*) - D(V*, none))
//   D_V = D(none, T*) + g_v (D(V*, T*) - D(none, T*))
//   out = b D_T + (1 - b) D_V
template <typename T>
nn::Tensor<T> CombineGuidance(const nn::Tensor<T>& full, const nn::Tensor<T>& visual_only,
                              const nn::Tensor<T>& text_only, const GuidanceConfig& guidance);

// Conditioning for sampling. An empty v_star means no visual condition, in
// which case D(V*, none) is the fully unconditional prediction.
struct SamplingConditions {
  nn::Tensor<float> text;    // 1 x d_clip personalized text feature T*
  nn::Tensor<float> v_star;  // rows x d_model, may be empty
};

nn::Tensor<float> CfgPredict(Denoiser<float>& denoiser, const nn::Tensor<float>& x_t,
                             std::size_t t, const SamplingConditions& conditions,
                             const GuidanceConfig& guidance);

// Returns an x0 estimate for (x_t, t).
using Predictor =
    std::function<nn::Tensor<float>(const nn::Tensor<float>& x_t, std::size_t t)>;

// Ancestral sampling from standard normal noise of the given shape. Throws
// NumericError naming the step if the state becomes non-finite.
nn::Tensor<float> SampleLoop(const Predictor& predictor, const DiffusionSchedule& schedule,
                             std::size_t frames, std::size_t channels, nn::Rng& rng);

// Full sampler: guided ancestral sampling, mapped back to raw features with
// contact channels thresholded at 0.5.
data::MotionClip Sample(Denoiser<float>& denoiser, const data::FeatureNormalizer& normalizer,
                        const SamplingConditions& conditions,
                        const DiffusionSchedule& schedule, const GuidanceConfig& guidance,
                        std::size_t frames, nn::Rng& rng);

}  // namespace pbooth::diffusion
