#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "pbooth/data/motion.h"
#include "pbooth/data/text.h"
#include "pbooth/nn/layers.h"

namespace pbooth::clip {

struct ClipConfig {
  std::size_t d_model = 64;  // motion encoder width
  std::size_t d_text = 64;   // token embedding width
  std::size_t d_clip = 32;   // shared embedding width
  std::size_t heads = 4;
  std::size_t blocks = 2;
  std::size_t ff_width = 128;
  std::size_t max_tokens = 16;
};

// Replacement of one token embedding before the transformer runs.
template <typename T>
struct Injection {
  std::size_t position = 0;
  nn::Var<T> vector;  // 1 x d_text
};

template <typename T>
class TextEncoder {
 public:
  TextEncoder() = default;
  TextEncoder(const ClipConfig& config, std::size_t vocab_size, nn::Rng& rng);

  // Unit-norm 1 x d_clip sentence feature.
  nn::Var<T> Encode(nn::Graph<T>& g, const data::PromptText& prompt);
  // As Encode with the placeholder's table row swapped for `vector`. Throws
  // UsageError unless `position` is the prompt's placeholder position.
  nn::Var<T> EncodeWithInjection(nn::Graph<T>& g, const data::PromptText& prompt,
                                 std::size_t position, const nn::Var<T>& vector);
  // Token embeddings that enter the transformer (before positional terms).
  nn::Var<T> TokenEmbeddings(nn::Graph<T>& g, const data::PromptText& prompt,
                             const std::optional<Injection<T>>& injection);

  void CollectParameters(nn::ParameterList<T>& out);
  nn::Parameter<T>& table() { return table_; }
  std::size_t d_text() const { return config_.d_text; }

 private:
  nn::Var<T> Run(nn::Graph<T>& g, const nn::Var<T>& embeddings);

  ClipConfig config_;
  nn::Parameter<T> table_;
  nn::Tensor<T> positions_;
  std::vector<nn::TransformerBlock<T>> blocks_;
  nn::LayerNormLayer<T> final_norm_;
  nn::Linear<T> projection_;
};

template <typename T>
struct MotionEncoding {
  nn::Var<T> pooled;  // 1 x d_clip, unit norm
  nn::Var<T> frames;  // f x d_model
};

template <typename T>
class MotionEncoder {
 public:
  MotionEncoder() = default;
  MotionEncoder(const ClipConfig& config, nn::Rng& rng);

  // `features` are raw clip features (f x kChannels); normalization happens
  // inside with the stored statistics. Throws DimensionError on a channel
  // mismatch.
  MotionEncoding<T> Encode(nn::Graph<T>& g, const nn::Tensor<float>& features);

  void CollectParameters(nn::ParameterList<T>& out);
  void set_normalizer(data::FeatureNormalizer n) { normalizer_ = std::move(n); }
  const data::FeatureNormalizer& normalizer() const { return normalizer_; }
  std::size_t d_model() const { return config_.d_model; }

 private:
  ClipConfig config_;
  data::FeatureNormalizer normalizer_ = data::FeatureNormalizer::Identity();
  nn::Linear<T> input_;
  nn::Tensor<T> positions_;
  std::vector<nn::TransformerBlock<T>> blocks_;
  nn::LayerNormLayer<T> final_norm_;
  nn::Linear<T> projection_;
};

template <typename T>
struct ClipModel {
  ClipModel() = default;
  ClipModel(const ClipConfig& config, nn::Rng& rng);

  void CollectParameters(nn::ParameterList<T>& out);
  nn::ParameterList<T> Parameters();

  ClipConfig config;
  TextEncoder<T> text;
  MotionEncoder<T> motion;
};

// Symmetric InfoNCE over cosine logits / temperature; row i of each input is
// a matching pair. Inputs are assumed unit-norm. Throws DataError if N < 2.
template <typename T>
nn::Var<T> ClipContrastiveLoss(const nn::Var<T>& motion_embs,
                               const nn::Var<T>& text_embs, T temperature);

// Convenience: embeddings as plain vectors with no graph recording.
std::vector<float> EmbedText(ClipModel<float>& model, const data::PromptText& prompt);
std::vector<float> EmbedMotion(ClipModel<float>& model, const nn::Tensor<float>& features);

}  // namespace pbooth::clip
