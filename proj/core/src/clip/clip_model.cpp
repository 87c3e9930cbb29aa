#include "pbooth/clip/clip_model.h"

#include <numeric>

#include "pbooth/errors.h"

namespace pbooth::clip {

using nn::Var;

template <typename T>
TextEncoder<T>::TextEncoder(const ClipConfig& config, std::size_t vocab_size,
                            nn::Rng& rng)
    : config_(config),
      positions_(nn::SinusoidalTable<T>(config.max_tokens, config.d_text)),
      final_norm_("text.final_norm", config.d_text),
      projection_("text.projection", config.d_text, config.d_clip, rng) {
  nn::Tensor<T> table = nn::Tensor<T>::Matrix(vocab_size, config.d_text);
  for (auto& v : table.values()) v = static_cast<T>(0.5 * rng.Normal());
  table_ = nn::Parameter<T>("text.token_table", std::move(table));
  for (std::size_t b = 0; b < config.blocks; ++b) {
    blocks_.emplace_back("text.block" + std::to_string(b), config.d_text,
                         config.heads, config.ff_width, rng);
  }
}

template <typename T>
Var<T> TextEncoder<T>::TokenEmbeddings(
    nn::Graph<T>& g, const data::PromptText& prompt,
    const std::optional<Injection<T>>& injection) {
  const std::size_t n = prompt.tokens.size();
  if (n == 0) throw DataError("cannot encode an empty prompt");
  if (n > config_.max_tokens) {
    throw DataError("prompt has " + std::to_string(n) + " tokens; limit is " +
                    std::to_string(config_.max_tokens));
  }
  for (std::size_t id : prompt.tokens) {
    if (id >= table_.value.rows()) {
      throw VocabularyError("token id " + std::to_string(id) +
                            " is outside the vocabulary");
    }
  }
  const Var<T> table = g.Bind(table_);
  if (!injection) return nn::GatherRows(table, prompt.tokens);

  const std::size_t pos = injection->position;
  if (!prompt.placeholder_index || *prompt.placeholder_index != pos) {
    throw UsageError("injection position " + std::to_string(pos) +
                     " is not the prompt's placeholder position");
  }
  if (injection->vector.rows() != 1 ||
      injection->vector.cols() != config_.d_text) {
    throw DimensionError("injected vector must be 1 x " +
                         std::to_string(config_.d_text) + ", got " +
                         nn::ShapeToString(injection->vector.value().shape()));
  }
  std::vector<Var<T>> parts;
  if (pos > 0) {
    parts.push_back(nn::GatherRows(
        table, std::vector<std::size_t>(prompt.tokens.begin(),
                                        prompt.tokens.begin() + pos)));
  }
  parts.push_back(injection->vector);
  if (pos + 1 < n) {
    parts.push_back(nn::GatherRows(
        table, std::vector<std::size_t>(prompt.tokens.begin() + pos + 1,
                                        prompt.tokens.end())));
  }
  return parts.size() == 1 ? parts[0] : nn::ConcatRows(parts);
}

template <typename T>
Var<T> TextEncoder<T>::Run(nn::Graph<T>& g, const Var<T>& embeddings) {
  const std::size_t n = embeddings.rows();
  Var<T> x = nn::Add(embeddings, Var<T>::Constant(positions_.RowSlice(0, n)));
  for (auto& block : blocks_) x = block(g, x);
  x = final_norm_(g, x);
  return nn::NormalizeRows(projection_(g, nn::SliceRows(x, 0, 1)));
}

template <typename T>
Var<T> TextEncoder<T>::Encode(nn::Graph<T>& g, const data::PromptText& prompt) {
  return Run(g, TokenEmbeddings(g, prompt, std::nullopt));
}

template <typename T>
Var<T> TextEncoder<T>::EncodeWithInjection(nn::Graph<T>& g,
                                           const data::PromptText& prompt,
                                           std::size_t position,
                                           const Var<T>& vector) {
  return Run(g, TokenEmbeddings(g, prompt, Injection<T>{position, vector}));
}

template <typename T>
void TextEncoder<T>::CollectParameters(nn::ParameterList<T>& out) {
  out.push_back(&table_);
  for (auto& block : blocks_) block.CollectParameters(out);
  final_norm_.CollectParameters(out);
  projection_.CollectParameters(out);
}

template <typename T>
MotionEncoder<T>::MotionEncoder(const ClipConfig& config, nn::Rng& rng)
    : config_(config),
      input_("motion.input", data::kChannels, config.d_model, rng),
      positions_(nn::SinusoidalTable<T>(data::kMaxFrames, config.d_model)),
      final_norm_("motion.final_norm", config.d_model),
      projection_("motion.projection", config.d_model, config.d_clip, rng) {
  for (std::size_t b = 0; b < config.blocks; ++b) {
    blocks_.emplace_back("motion.block" + std::to_string(b), config.d_model,
                         config.heads, config.ff_width, rng);
  }
}

template <typename T>
MotionEncoding<T> MotionEncoder<T>::Encode(nn::Graph<T>& g,
                                           const nn::Tensor<float>& features) {
  if (features.cols() != data::kChannels) {
    throw DimensionError("motion encoder expects " +
                         std::to_string(data::kChannels) + " channels, got " +
                         nn::ShapeToString(features.shape()));
  }
  const std::size_t f = features.rows();
  if (f == 0 || f > data::kMaxFrames) {
    throw DimensionError("motion encoder got " + std::to_string(f) +
                         " frames; supported range is 1.." +
                         std::to_string(data::kMaxFrames));
  }
  const auto x0 = Var<T>::Constant(normalizer_.Normalize(features).template Cast<T>());
  Var<T> x = nn::Add(input_(g, x0), Var<T>::Constant(positions_.RowSlice(0, f)));
  for (auto& block : blocks_) x = block(g, x);
  MotionEncoding<T> out;
  out.frames = final_norm_(g, x);
  out.pooled = nn::NormalizeRows(projection_(g, nn::MeanRows(out.frames)));
  return out;
}

template <typename T>
void MotionEncoder<T>::CollectParameters(nn::ParameterList<T>& out) {
  input_.CollectParameters(out);
  for (auto& block : blocks_) block.CollectParameters(out);
  final_norm_.CollectParameters(out);
  projection_.CollectParameters(out);
}

template <typename T>
ClipModel<T>::ClipModel(const ClipConfig& config_in, nn::Rng& rng)
    : config(config_in),
      text(config_in, data::Vocabulary::Default().size(), rng),
      motion(config_in, rng) {}

template <typename T>
void ClipModel<T>::CollectParameters(nn::ParameterList<T>& out) {
  text.CollectParameters(out);
  motion.CollectParameters(out);
}

template <typename T>
nn::ParameterList<T> ClipModel<T>::Parameters() {
  nn::ParameterList<T> out;
  CollectParameters(out);
  return out;
}

template <typename T>
Var<T> ClipContrastiveLoss(const Var<T>& motion_embs, const Var<T>& text_embs,
                           T temperature) {
  const std::size_t n = motion_embs.rows();
  if (n < 2) throw DataError("contrastive loss needs at least 2 pairs");
  if (text_embs.rows() != n || text_embs.cols() != motion_embs.cols()) {
    throw DimensionError("contrastive loss: " +
                         nn::ShapeToString(motion_embs.value().shape()) +
                         " vs " + nn::ShapeToString(text_embs.value().shape()));
  }
  std::vector<std::size_t> targets(n);
  std::iota(targets.begin(), targets.end(), std::size_t{0});
  const Var<T> logits = nn::Scale(nn::MatMulNT(motion_embs, text_embs),
                                  T{1} / temperature);
  const Var<T> m2t = nn::SoftmaxCrossEntropy(logits, targets);
  const Var<T> t2m = nn::SoftmaxCrossEntropy(nn::Transpose(logits), targets);
  return nn::Scale(nn::Add(m2t, t2m), T(0.5));
}

std::vector<float> EmbedText(ClipModel<float>& model,
                             const data::PromptText& prompt) {
  nn::Graph<float> g(false);
  const auto out = model.text.Encode(g, prompt);
  return {out.value().data(), out.value().data() + out.value().size()};
}

std::vector<float> EmbedMotion(ClipModel<float>& model,
                               const nn::Tensor<float>& features) {
  nn::Graph<float> g(false);
  const auto out = model.motion.Encode(g, features).pooled;
  return {out.value().data(), out.value().data() + out.value().size()};
}

template class TextEncoder<float>;
template class TextEncoder<double>;
template class MotionEncoder<float>;
template class MotionEncoder<double>;
template struct ClipModel<float>;
template struct ClipModel<double>;
template Var<float> ClipContrastiveLoss(const Var<float>&, const Var<float>&, float);
template Var<double> ClipContrastiveLoss(const Var<double>&, const Var<double>&, double);

}  // namespace pbooth::clip
