#include "pbooth/diffusion/sampler.h"

#include <cmath>

#include "pbooth/errors.h"

namespace pbooth::diffusion {

void GuidanceConfig::Validate() const {
  for (double v : {g_t, g_v, b, s_t, s_v}) {
    if (!std::isfinite(v)) throw ConfigError("guidance values must be finite");
  }
  if (b < 0.0 || b > 1.0) throw ConfigError("guidance balance b must lie in [0, 1]");
}

template <typename T>
nn::Tensor<T> CombineGuidance(const nn::Tensor<T>& full, const nn::Tensor<T>& visual_only,
                              const nn::Tensor<T>& text_only,
                              const GuidanceConfig& guidance) {
  nn::CheckSameShape(full.shape(), visual_only.shape(), "guidance");
  nn::CheckSameShape(full.shape(), text_only.shape(), "guidance");
  const double gt = guidance.g_t, gv = guidance.g_v, b = guidance.b;
  nn::Tensor<T> out(full.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double d_t = visual_only[i] + gt * (full[i] - visual_only[i]);
    const double d_v = text_only[i] + gv * (full[i] - text_only[i]);
    out[i] = static_cast<T>(b * d_t + (1.0 - b) * d_v);
  }
  return out;
}

nn::Tensor<float> CfgPredict(Denoiser<float>& denoiser, const nn::Tensor<float>& x_t,
                             std::size_t t, const SamplingConditions& conditions,
                             const GuidanceConfig& guidance) {
  using nn::Var;
  const float s_v = static_cast<float>(guidance.s_v);
  const Var<float> text = Var<float>::Constant(conditions.text);
  Var<float> v_star;
  if (!conditions.v_star.empty()) v_star = Var<float>::Constant(conditions.v_star);
  auto eval = [&](bool with_visual, bool with_text) {
    nn::Graph<float> g(false);
    Conditions<float> c;
    c.s_v = s_v;
    if (with_text) c.text = text;
    if (with_visual) c.v_star = v_star;
    return denoiser.Forward(g, x_t, t, c).value();
  };
  const auto full = eval(true, true);
  const auto visual_only = eval(true, false);
  const auto text_only = eval(false, true);
  return CombineGuidance(full, visual_only, text_only, guidance);
}

nn::Tensor<float> SampleLoop(const Predictor& predictor, const DiffusionSchedule& schedule,
                             std::size_t frames, std::size_t channels, nn::Rng& rng) {
  nn::Tensor<float> x = rng.NormalTensor<float>({frames, channels});
  for (std::size_t step = schedule.steps; step-- > 0;) {
    const nn::Tensor<float> x0 = predictor(x, step);
    nn::CheckSameShape(x.shape(), x0.shape(), "sampler prediction");
    const nn::Tensor<float> noise =
        step > 0 ? rng.NormalTensor<float>(x.shape()) : nn::Tensor<float>(x.shape());
    x = PosteriorStep(x, x0, step, noise, schedule);
    if (!x.AllFinite()) {
      throw NumericError("sampling state became non-finite at step " + std::to_string(step));
    }
  }
  return x;
}

data::MotionClip Sample(Denoiser<float>& denoiser, const data::FeatureNormalizer& normalizer,
                        const SamplingConditions& conditions,
                        const DiffusionSchedule& schedule, const GuidanceConfig& guidance,
                        std::size_t frames, nn::Rng& rng) {
  guidance.Validate();
  const Predictor predictor = [&](const nn::Tensor<float>& x, std::size_t t) {
    return CfgPredict(denoiser, x, t, conditions, guidance);
  };
  const auto x = SampleLoop(predictor, schedule, frames, denoiser.config().channels, rng);
  data::MotionClip clip;
  clip.features = normalizer.Denormalize(x);
  for (std::size_t i = 0; i < frames; ++i) {
    for (std::size_t c = 0; c < data::channel::kContactCount; ++c) {
      float& v = clip.features(i, data::channel::kFirstContact + c);
      v = v >= 0.5f ? 1.0f : 0.0f;
    }
  }
  return clip;
}

template nn::Tensor<float> CombineGuidance(const nn::Tensor<float>&, const nn::Tensor<float>&,
                                           const nn::Tensor<float>&, const GuidanceConfig&);
template nn::Tensor<double> CombineGuidance(const nn::Tensor<double>&,
                                            const nn::Tensor<double>&,
                                            const nn::Tensor<double>&, const GuidanceConfig&);

}  // namespace pbooth::diffusion
