#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "pbooth/data/corpus.h"
#include "pbooth/nn/layers.h"

namespace pbooth::eval {

struct PraConfig {
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t blocks = 2;
  std::size_t ff_width = 128;
  std::size_t epochs = 12;
  std::size_t batch = 16;
  double learning_rate = 1e-3;
  double min_validation_accuracy = 0.9;
  std::uint64_t seed = 11;
};

// Persona classifier over raw motion features: input projection, a small
// transformer, mean pooling and a linear head. Class c is persona id c + 1.
class PraClassifier {
 public:
  PraClassifier() = default;
  PraClassifier(const PraConfig& config, std::size_t classes,
                data::FeatureNormalizer normalizer, nn::Rng& rng);

  nn::Var<float> Logits(nn::Graph<float>& g, const nn::Tensor<float>& features);
  int PredictPersona(const nn::Tensor<float>& features);
  void CollectParameters(nn::ParameterList<float>& out);
  std::size_t classes() const { return classes_; }

 private:
  PraConfig config_;
  std::size_t classes_ = 0;
  data::FeatureNormalizer normalizer_;
  nn::Linear<float> input_;
  nn::Tensor<float> positions_;
  std::vector<nn::TransformerBlock<float>> blocks_;
  nn::LayerNormLayer<float> final_norm_;
  nn::Linear<float> head_;
};

struct PraTraining {
  std::vector<double> epoch_loss;
  double validation_accuracy = 0.0;
};

// Trains on ground-truth finetune-split clips (random crops) and validates on
// the full test-split clips. Throws ProtocolError when validation accuracy is
// below the configured floor, since the score would then be meaningless.
PraTraining TrainPra(PraClassifier& classifier, const data::Corpus& corpus,
                     const PraConfig& config);

// Fraction of clips classified as their intended persona.
double PraScore(PraClassifier& classifier, const std::vector<data::MotionClip>& clips,
                const std::vector<int>& intended_personas);

}  // namespace pbooth::eval
