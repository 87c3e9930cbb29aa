#include "pbooth/diffusion/denoiser.h"

#include "pbooth/errors.h"

namespace pbooth::diffusion {

using nn::Var;

template <typename T>
Denoiser<T>::Denoiser(const DenoiserConfig& config, nn::Rng& rng)
    : config_(config),
      input_("denoiser.input", config.channels, config.d_model, rng),
      positions_(nn::SinusoidalTable<T>(config.max_frames + 1, config.d_model)),
      time_mlp_("denoiser.time", config.d_model, config.d_model, config.d_model, rng),
      text_projection_("denoiser.text", config.d_clip, config.d_model, rng),
      final_norm_("denoiser.final_norm", config.d_model),
      output_("denoiser.output", config.d_model, config.channels, rng) {
  nn::Tensor<T> null = nn::Tensor<T>::Matrix(1, config.d_clip);
  for (auto& v : null.values()) v = static_cast<T>(0.1 * rng.Normal());
  null_text_ = nn::Parameter<T>("denoiser.null_text", std::move(null));
  for (std::size_t b = 0; b < config.blocks; ++b) {
    const std::string name = "denoiser.block" + std::to_string(b);
    blocks_.emplace_back(name, config.d_model, config.heads, config.ff_width, rng);
  }
  // Adapters draw from their own stream so the base weights do not depend on
  // the adapter kind.
  nn::Rng adapter_rng = rng.Fork(0xada);
  for (std::size_t b = 0; b < config.blocks; ++b) {
    adapters_.emplace_back("denoiser.adapter" + std::to_string(b), config.d_model,
                           config.heads, config.adapt_kind, adapter_rng);
  }
}

template <typename T>
Var<T> Denoiser<T>::Forward(nn::Graph<T>& g, const nn::Tensor<T>& x_t, std::size_t t,
                            const Conditions<T>& conditions) {
  const std::size_t f = x_t.rows();
  if (x_t.cols() != config_.channels || f == 0 || f > config_.max_frames) {
    throw DimensionError("denoiser input " + nn::ShapeToString(x_t.shape()) +
                         " is not (1.." + std::to_string(config_.max_frames) +
                         ") x " + std::to_string(config_.channels));
  }
  const Var<T> text = conditions.text.defined() ? conditions.text : NullText(g);
  if (text.rows() != 1 || text.cols() != config_.d_clip) {
    throw DimensionError("text condition must be 1 x " +
                         std::to_string(config_.d_clip) + ", got " +
                         nn::ShapeToString(text.value().shape()));
  }
  const Var<T> time = time_mlp_(
      g, Var<T>::Constant(nn::SinusoidalEmbedding<T>(static_cast<double>(t),
                                                     config_.d_model)));
  const Var<T> condition = nn::Add(time, text_projection_(g, text));
  const Var<T> frames = input_(g, Var<T>::Constant(x_t));
  Var<T> h = nn::Add(nn::ConcatRows<T>({condition, frames}),
                     Var<T>::Constant(positions_.RowSlice(0, f + 1)));
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    h = blocks_[b].AttentionResidual(g, h);
    h = adapters_[b](g, h, conditions.v_star, conditions.s_v);
    h = blocks_[b].FeedForwardResidual(g, h);
  }
  h = final_norm_(g, nn::SliceRows(h, 1, f));
  return output_(g, h);
}

template <typename T>
void Denoiser<T>::CollectBaseParameters(nn::ParameterList<T>& out) {
  input_.CollectParameters(out);
  time_mlp_.CollectParameters(out);
  text_projection_.CollectParameters(out);
  out.push_back(&null_text_);
  for (auto& block : blocks_) block.CollectParameters(out);
  final_norm_.CollectParameters(out);
  output_.CollectParameters(out);
}

template <typename T>
void Denoiser<T>::CollectAdapterParameters(nn::ParameterList<T>& out) {
  for (auto& adapter : adapters_) adapter.CollectParameters(out);
}

template class Denoiser<float>;
template class Denoiser<double>;

}  // namespace pbooth::diffusion
