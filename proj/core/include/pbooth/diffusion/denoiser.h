#pragma once

#include <cstddef>
#include <vector>

#include "pbooth/adapt/adaptation.h"
#include "pbooth/nn/layers.h"

namespace pbooth::diffusion {

struct DenoiserConfig {
  std::size_t d_model = 64;
  std::size_t d_clip = 32;  // width of the text condition T*
  std::size_t heads = 4;
  std::size_t blocks = 4;
  std::size_t ff_width = 128;
  std::size_t channels = 32;
  std::size_t max_frames = 64;
  adapt::AdaptKind adapt_kind = adapt::AdaptKind::kSelfAttention;
};

// Conditioning of one denoiser evaluation. An undefined `text` selects the
// learned null text feature; an undefined or empty `v_star` means no visual
// condition.
template <typename T>
struct Conditions {
  nn::Var<T> text;    // 1 x d_clip
  nn::Var<T> v_star;  // rows x d_model
  T s_v = T{1};
};

// Transformer that predicts the clean sample from (x_t, t, conditions). The
// text condition enters as a token prepended to the frames and summed with the
// timestep embedding; V* reaches the network only through the adaptive layer
// inside each block.
template <typename T>
class Denoiser {
 public:
  Denoiser() = default;
  Denoiser(const DenoiserConfig& config, nn::Rng& rng);

  // x_t is f x channels in normalized feature space.
  nn::Var<T> Forward(nn::Graph<T>& g, const nn::Tensor<T>& x_t, std::size_t t,
                     const Conditions<T>& conditions);

  nn::Var<T> NullText(nn::Graph<T>& g) { return g.Bind(null_text_); }

  // Everything present before finetuning, including the null text feature.
  void CollectBaseParameters(nn::ParameterList<T>& out);
  void CollectAdapterParameters(nn::ParameterList<T>& out);
  nn::Parameter<T>& null_text() { return null_text_; }
  std::vector<adapt::AdaptiveLayer<T>>& adapters() { return adapters_; }
  const DenoiserConfig& config() const { return config_; }

 private:
  DenoiserConfig config_;
  nn::Linear<T> input_;
  nn::Tensor<T> positions_;
  nn::Mlp<T> time_mlp_;
  nn::Linear<T> text_projection_;
  nn::Parameter<T> null_text_;
  std::vector<nn::TransformerBlock<T>> blocks_;
  std::vector<adapt::AdaptiveLayer<T>> adapters_;
  nn::LayerNormLayer<T> final_norm_;
  nn::Linear<T> output_;
};

}  // namespace pbooth::diffusion
