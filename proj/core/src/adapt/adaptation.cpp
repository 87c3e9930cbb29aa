#include "pbooth/adapt/adaptation.h"

#include <cmath>

#include "pbooth/errors.h"

namespace pbooth::adapt {

using nn::Var;

std::string_view AdaptKindName(AdaptKind kind) {
  switch (kind) {
    case AdaptKind::kSelfAttention: return "self-attention";
    case AdaptKind::kCrossAttention: return "cross-attention";
    case AdaptKind::kAdaIN: return "adain";
  }
  return "self-attention";
}

AdaptKind AdaptKindFromName(std::string_view name) {
  if (name == "self-attention") return AdaptKind::kSelfAttention;
  if (name == "cross-attention") return AdaptKind::kCrossAttention;
  if (name == "adain") return AdaptKind::kAdaIN;
  throw ConfigError("unknown adapter kind '" + std::string(name) +
                    "' (expected self-attention, cross-attention or adain)");
}

template <typename T>
Var<T> Gate<T>::Factor(nn::Graph<T>& g, T scale) {
  return nn::Scale(nn::Tanh(g.Bind(gamma_)), scale);
}

template <typename T>
bool Gate<T>::Inert(const nn::Graph<T>& g, T scale) const {
  const bool differentiable = g.recording() && gamma_.trainable;
  return !differentiable && scale * std::tanh(gamma_.value[0]) == T{0};
}

template <typename T>
Var<T> PersonalizedTextFeature(nn::Graph<T>& g, clip::TextEncoder<T>& encoder,
                               Gate<T>& gate, const data::PromptText& prompt,
                               const Var<T>& p_star, T s_t, Var<T> base) {
  if (!prompt.subject_index) {
    throw DataError("prompt '" + prompt.text + "' has no subject token");
  }
  if (!base.defined()) base = encoder.Encode(g, prompt);
  if (gate.Inert(g, s_t)) return base;
  const data::PromptText personalized = data::Personalize(prompt);
  const Var<T> injected = encoder.EncodeWithInjection(
      g, personalized, *personalized.placeholder_index, p_star);
  return nn::Add(base, nn::ScaleBy(injected, gate.Factor(g, s_t)));
}

template <typename T>
AdaptiveLayer<T>::AdaptiveLayer(const std::string& name, std::size_t width,
                                std::size_t heads, AdaptKind kind, nn::Rng& rng)
    : kind_(kind),
      width_(width),
      gate_(name + ".gamma"),
      norm_(name + ".norm", width),
      visual_projection_(name + ".visual_projection", width, width, rng) {
  if (kind == AdaptKind::kAdaIN) {
    style_scale_ = nn::Linear<T>(name + ".style_scale", width, width, rng);
    style_shift_ = nn::Linear<T>(name + ".style_shift", width, width, rng);
  } else {
    attention_ = nn::MultiHeadAttention<T>(name + ".attn", width, heads, rng);
  }
}

template <typename T>
Var<T> AdaptiveLayer<T>::Adapt(nn::Graph<T>& g, const Var<T>& z,
                               const Var<T>& v_star) {
  if (z.cols() != width_) {
    throw DimensionError("adaptive layer expects width " + std::to_string(width_) +
                         ", got " + nn::ShapeToString(z.value().shape()));
  }
  const bool has_visual = v_star.defined() && v_star.rows() > 0;
  if (has_visual && v_star.cols() != width_) {
    throw DimensionError("adaptive layer: V* " +
                         nn::ShapeToString(v_star.value().shape()) +
                         " does not have width " + std::to_string(width_));
  }
  const Var<T> zn = norm_(g, z);
  switch (kind_) {
    case AdaptKind::kSelfAttention: {
      // Only the z rows of self-attention over [z, V*] are kept, so queries
      // are needed for those rows alone.
      const Var<T> context =
          has_visual ? nn::ConcatRows<T>({zn, visual_projection_(g, v_star)}) : zn;
      return attention_(g, zn, context);
    }
    case AdaptKind::kCrossAttention: {
      if (!has_visual) return nn::Scale(zn, T{0});
      return attention_(g, zn, visual_projection_(g, v_star));
    }
    case AdaptKind::kAdaIN: {
      if (!has_visual) return nn::Scale(zn, T{0});
      const Var<T> style = nn::MeanRows(visual_projection_(g, v_star));
      // Instance normalization over time, per channel.
      const std::size_t n = z.rows();
      const Var<T> ones = Var<T>::Constant(nn::Tensor<T>::Matrix(1, n, T{1}));
      const Var<T> zeros = Var<T>::Constant(nn::Tensor<T>::Matrix(1, n));
      const Var<T> normalized =
          nn::Transpose(nn::LayerNorm(nn::Transpose(z), ones, zeros));
      const Var<T> scale = nn::AddScalar(style_scale_(g, style), T{1});
      return nn::AddBias(nn::Mul(normalized, nn::BroadcastRows(scale, n)),
                         style_shift_(g, style));
    }
  }
  return zn;
}

template <typename T>
Var<T> AdaptiveLayer<T>::operator()(nn::Graph<T>& g, const Var<T>& z,
                                    const Var<T>& v_star, T s_v) {
  if (gate_.Inert(g, s_v)) return z;
  return nn::Add(z, nn::ScaleBy(Adapt(g, z, v_star), gate_.Factor(g, s_v)));
}

template <typename T>
void AdaptiveLayer<T>::CollectParameters(nn::ParameterList<T>& out) {
  out.push_back(&gate_.gamma());
  norm_.CollectParameters(out);
  visual_projection_.CollectParameters(out);
  if (kind_ == AdaptKind::kAdaIN) {
    style_scale_.CollectParameters(out);
    style_shift_.CollectParameters(out);
  } else {
    attention_.CollectParameters(out);
  }
}

template class Gate<float>;
template class Gate<double>;
template class AdaptiveLayer<float>;
template class AdaptiveLayer<double>;
template Var<float> PersonalizedTextFeature(nn::Graph<float>&, clip::TextEncoder<float>&,
                                            Gate<float>&, const data::PromptText&,
                                            const Var<float>&, float,
                                            Var<float>);
template Var<double> PersonalizedTextFeature(nn::Graph<double>&, clip::TextEncoder<double>&,
                                             Gate<double>&, const data::PromptText&,
                                             const Var<double>&, double,
                                             Var<double>);

}  // namespace pbooth::adapt
