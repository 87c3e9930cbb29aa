#include "pbooth/eval/pra.h"

#include <cmath>

#include "pbooth/errors.h"
#include "pbooth/nn/optim.h"

namespace pbooth::eval {

using nn::Var;

PraClassifier::PraClassifier(const PraConfig& config, std::size_t classes,
                             data::FeatureNormalizer normalizer, nn::Rng& rng)
    : config_(config),
      classes_(classes),
      normalizer_(std::move(normalizer)),
      input_("pra.input", data::kChannels, config.d_model, rng),
      positions_(nn::SinusoidalTable<float>(data::kMaxFrames, config.d_model)),
      final_norm_("pra.final_norm", config.d_model),
      head_("pra.head", config.d_model, classes, rng) {
  if (classes < 2) throw ConfigError("persona classifier needs at least 2 classes");
  for (std::size_t b = 0; b < config.blocks; ++b) {
    blocks_.emplace_back("pra.block" + std::to_string(b), config.d_model, config.heads,
                         config.ff_width, rng);
  }
}

Var<float> PraClassifier::Logits(nn::Graph<float>& g, const nn::Tensor<float>& features) {
  if (features.cols() != data::kChannels || features.rows() == 0 ||
      features.rows() > data::kMaxFrames) {
    throw DimensionError("persona classifier input " + nn::ShapeToString(features.shape()));
  }
  Var<float> x = nn::Add(input_(g, Var<float>::Constant(normalizer_.Normalize(features))),
                         Var<float>::Constant(positions_.RowSlice(0, features.rows())));
  for (auto& block : blocks_) x = block(g, x);
  return head_(g, nn::MeanRows(final_norm_(g, x)));
}

int PraClassifier::PredictPersona(const nn::Tensor<float>& features) {
  nn::Graph<float> g(false);
  const auto logits = Logits(g, features);
  std::size_t best = 0;
  for (std::size_t c = 1; c < classes_; ++c) {
    if (logits.value()[c] > logits.value()[best]) best = c;
  }
  return static_cast<int>(best) + 1;
}

void PraClassifier::CollectParameters(nn::ParameterList<float>& out) {
  input_.CollectParameters(out);
  for (auto& block : blocks_) block.CollectParameters(out);
  final_norm_.CollectParameters(out);
  head_.CollectParameters(out);
}

PraTraining TrainPra(PraClassifier& classifier, const data::Corpus& corpus,
                     const PraConfig& config) {
  nn::ParameterList<float> params;
  classifier.CollectParameters(params);
  nn::OptimizerConfig opt;
  opt.learning_rate = config.learning_rate;
  nn::AdamW<float> optimizer(opt);
  nn::Rng rng(config.seed);
  const auto pool = corpus.Indices(data::Split::kFinetune);
  if (pool.empty()) throw DataError("persona classifier needs finetune-split clips");

  PraTraining out;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = nn::Permutation(pool.size(), rng);
    double sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch) {
      const std::size_t end = std::min(order.size(), begin + config.batch);
      nn::Graph<float> g;
      std::vector<Var<float>> logits;
      std::vector<std::size_t> targets;
      for (std::size_t k = begin; k < end; ++k) {
        const auto& clip = corpus.clips[pool[order[k]]];
        const std::size_t len =
            data::kMinFrames + rng.Index(clip.frames() - data::kMinFrames + 1);
        const std::size_t start = rng.Index(clip.frames() - len + 1);
        logits.push_back(classifier.Logits(g, data::Crop(clip, start, len).features));
        targets.push_back(static_cast<std::size_t>(clip.persona_id - 1));
      }
      const auto loss = nn::SoftmaxCrossEntropy(nn::ConcatRows(logits), targets);
      if (!std::isfinite(loss.value()[0])) {
        throw NumericError("persona classifier loss became non-finite");
      }
      nn::ZeroGrad(params);
      g.Backward(loss);
      g.AccumulateGrads();
      optimizer.Step(params);
      sum += loss.value()[0];
      ++steps;
    }
    out.epoch_loss.push_back(sum / static_cast<double>(steps));
  }

  std::vector<data::MotionClip> heldout;
  std::vector<int> labels;
  for (std::size_t i : corpus.Indices(data::Split::kTest)) {
    heldout.push_back(corpus.clips[i]);
    labels.push_back(corpus.clips[i].persona_id);
  }
  out.validation_accuracy = PraScore(classifier, heldout, labels);
  if (out.validation_accuracy < config.min_validation_accuracy) {
    throw ProtocolError("persona classifier validation accuracy " +
                        std::to_string(out.validation_accuracy) + " is below the required " +
                        std::to_string(config.min_validation_accuracy));
  }
  return out;
}

double PraScore(PraClassifier& classifier, const std::vector<data::MotionClip>& clips,
                const std::vector<int>& intended_personas) {
  if (clips.size() != intended_personas.size()) {
    throw DimensionError("PRA: clip and persona counts differ");
  }
  if (clips.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    hits += classifier.PredictPersona(clips[i].features) == intended_personas[i] ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(clips.size());
}

}  // namespace pbooth::eval
