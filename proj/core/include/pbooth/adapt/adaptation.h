#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "pbooth/clip/clip_model.h"
#include "pbooth/nn/layers.h"

namespace pbooth::adapt {

enum class AdaptKind { kSelfAttention, kCrossAttention, kAdaIN };

std::string_view AdaptKindName(AdaptKind kind);
AdaptKind AdaptKindFromName(std::string_view name);  // ConfigError if unknown

// Zero-initialized scalar gate; the effective factor is scale * tanh(gamma).
template <typename T>
class Gate {
 public:
  Gate() = default;
  explicit Gate(const std::string& name)
      : gamma_(name, nn::Tensor<T>::Matrix(1, 1)) {}

  // 1 x 1 factor node.
  nn::Var<T> Factor(nn::Graph<T>& g, T scale);
  // True when the factor is exactly zero and no gradient can flow through
  // it, so the gated branch may be skipped without changing any output.
  bool Inert(const nn::Graph<T>& g, T scale) const;

  nn::Parameter<T>& gamma() { return gamma_; }
  const nn::Parameter<T>& gamma() const { return gamma_; }

 private:
  nn::Parameter<T> gamma_;
};

// T* = X(T_in) + s_t * tanh(gamma_t) * X(T~_in with P* at the placeholder).
// Throws DataError when the prompt has no subject token. A defined `base`
// stands in for X(T_in) when the caller already has it.
template <typename T>
nn::Var<T> PersonalizedTextFeature(nn::Graph<T>& g, clip::TextEncoder<T>& encoder,
                                   Gate<T>& gate, const data::PromptText& prompt,
                                   const nn::Var<T>& p_star, T s_t,
                                   nn::Var<T> base = {});

// Layer placed between a block's attention and feed-forward halves:
// z' = z + s_v * tanh(gamma_v) * Adapt(z, V*), returning n rows for n-row z.
template <typename T>
class AdaptiveLayer {
 public:
  AdaptiveLayer() = default;
  AdaptiveLayer(const std::string& name, std::size_t width, std::size_t heads,
                AdaptKind kind, nn::Rng& rng);

  // `v_star` may be undefined or have zero rows (no visual condition).
  nn::Var<T> operator()(nn::Graph<T>& g, const nn::Var<T>& z,
                        const nn::Var<T>& v_star, T s_v);
  // The ungated adapter output Adapt(z, V*).
  nn::Var<T> Adapt(nn::Graph<T>& g, const nn::Var<T>& z, const nn::Var<T>& v_star);

  void CollectParameters(nn::ParameterList<T>& out);
  Gate<T>& gate() { return gate_; }
  AdaptKind kind() const { return kind_; }

 private:
  AdaptKind kind_ = AdaptKind::kSelfAttention;
  std::size_t width_ = 0;
  Gate<T> gate_;
  nn::LayerNormLayer<T> norm_;
  nn::Linear<T> visual_projection_;
  nn::MultiHeadAttention<T> attention_;
  nn::Linear<T> style_scale_;  // AdaIN only
  nn::Linear<T> style_shift_;  // AdaIN only
};

}  // namespace pbooth::adapt
