#pragma once

#include <cstddef>
#include <vector>

#include "pbooth/data/corpus.h"
#include "pbooth/nn/layers.h"

namespace pbooth::persona {

struct PersonaConfig {
  std::size_t d_model = 64;
  std::size_t d_text = 64;
  std::size_t d_proj = 32;
  std::size_t heads = 4;
  std::size_t blocks = 2;
  std::size_t ff_width = 128;
  double temperature = 0.1;
};

template <typename T>
struct PersonaFeatures {
  nn::Var<T> v_star;  // (f + 1) x d_model, class-token slot first
  nn::Var<T> y;       // 1 x d_model, row 0 of v_star
  nn::Var<T> p_star;  // 1 x d_text
};

// Class token + transformer over motion-encoder frame features. The
// projection head feeds only the cohesion loss.
template <typename T>
class PersonaExtractor {
 public:
  PersonaExtractor() = default;
  PersonaExtractor(const PersonaConfig& config, nn::Rng& rng);

  PersonaFeatures<T> Extract(nn::Graph<T>& g, const nn::Var<T>& frame_features);
  // Projection head h applied row-wise, e.g. to stacked Y rows.
  nn::Var<T> Project(nn::Graph<T>& g, const nn::Var<T>& y);

  void CollectParameters(nn::ParameterList<T>& out);
  const PersonaConfig& config() const { return config_; }

 private:
  PersonaConfig config_;
  nn::Parameter<T> class_token_;
  std::vector<nn::TransformerBlock<T>> blocks_;
  nn::LayerNormLayer<T> final_norm_;
  nn::Mlp<T> token_head_;
  nn::Mlp<T> projection_head_;
};

// Supervised contrastive loss with one positive per anchor, averaged over all
// anchors: -log(exp(s_ip / tau) / sum_{k != i} exp(s_ik / tau)) with cosine
// similarities s. Throws DataError when an anchor's positive is itself, out of
// range, or carries a different label.
template <typename T>
nn::Var<T> PersonaCohesionLoss(const nn::Var<T>& projected,
                               const std::vector<int>& labels,
                               const std::vector<std::size_t>& positives,
                               T temperature);

// Pair layout: rows 2m and 2m + 1 are each other's positive.
std::vector<std::size_t> PairedPositives(const std::vector<int>& labels);

// Uniform draw from the anchor's persona group in `split`, excluding the
// anchor clip itself. Throws DataError when no other member exists.
std::size_t SamplePositive(const data::Corpus& corpus, data::Split split,
                           std::size_t anchor, nn::Rng& rng);

}  // namespace pbooth::persona
