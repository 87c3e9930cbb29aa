#include "pbooth/clip/clip_training.h"

#include <cmath>

#include "pbooth/errors.h"
#include "pbooth/nn/optim.h"

namespace pbooth::clip {

double Cosine(const std::vector<float>& a, const std::vector<float>& b) {
  if (a.size() != b.size()) throw DimensionError("cosine of mismatched vectors");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  const double denom = std::sqrt(na * nb);
  return denom > 0.0 ? dot / denom : 0.0;
}

ClipTrainResult TrainClip(ClipModel<float>& model, const data::Corpus& corpus,
                          const ClipTrainConfig& config) {
  std::vector<std::vector<std::size_t>> by_content(corpus.spec.contents);
  for (std::size_t i : corpus.Indices(data::Split::kPretrain)) {
    by_content[static_cast<std::size_t>(corpus.clips[i].content_id)].push_back(i);
  }
  for (std::size_t c = 0; c < by_content.size(); ++c) {
    if (by_content[c].empty()) {
      throw DataError("pretrain split has no clips of content " +
                      std::string(data::ContentName(static_cast<int>(c))));
    }
  }

  nn::OptimizerConfig opt_config;
  opt_config.learning_rate = config.learning_rate;
  nn::AdamW<float> optimizer(opt_config);
  const auto params = model.Parameters();
  nn::Rng rng(config.seed);

  std::vector<nn::Tensor<float>> last_good;
  std::size_t last_good_step = 0;
  auto snapshot = [&](std::size_t step) {
    last_good.clear();
    for (auto* p : params) last_good.push_back(p->value);
    last_good_step = step;
  };
  snapshot(0);

  ClipTrainResult result;
  double running = 0.0;
  std::size_t running_count = 0;
  for (std::size_t step = 1; step <= config.steps; ++step) {
    nn::Graph<float> g;
    std::vector<nn::Var<float>> motions, texts;
    for (std::size_t c = 0; c < by_content.size(); ++c) {
      const auto& pool = by_content[c];
      const auto& clip = corpus.clips[pool[rng.Index(pool.size())]];
      const std::size_t len =
          data::kMinFrames + rng.Index(clip.frames() - data::kMinFrames + 1);
      const std::size_t start = rng.Index(clip.frames() - len + 1);
      motions.push_back(
          model.motion.Encode(g, data::Crop(clip, start, len).features).pooled);
      const int variant = static_cast<int>(rng.Index(data::kVariantsPerContent));
      texts.push_back(model.text.Encode(g, data::Describe(static_cast<int>(c), variant)));
    }
    const auto loss = ClipContrastiveLoss(nn::ConcatRows(motions), nn::ConcatRows(texts),
                                          static_cast<float>(config.temperature));
    const double value = loss.value()[0];
    if (!std::isfinite(value)) {
      for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = last_good[i];
      throw NumericError("clip training loss became non-finite at step " +
                         std::to_string(step) + "; rolled back to step " +
                         std::to_string(last_good_step));
    }
    nn::ZeroGrad(params);
    g.Backward(loss);
    g.AccumulateGrads();
    optimizer.Step(params);
    running += value;
    ++running_count;
    if (step % config.log_every == 0 || step == config.steps) {
      result.curve.push_back({step, running / static_cast<double>(running_count)});
      running = 0.0;
      running_count = 0;
      snapshot(step);
    }
  }
  result.recall_at_1 = HeldOutRecallAt1(model, corpus.spec, config.eval_takes);
  return result;
}

double HeldOutRecallAt1(ClipModel<float>& model, const data::CorpusSpec& spec,
                        std::size_t takes_per_content) {
  std::vector<std::vector<float>> prompts;
  for (std::size_t c = 0; c < spec.contents; ++c) {
    prompts.push_back(EmbedText(model, data::Describe(static_cast<int>(c), 0)));
  }
  std::size_t hits = 0, total = 0;
  for (std::size_t c = 0; c < spec.contents; ++c) {
    for (std::size_t t = 0; t < takes_per_content; ++t) {
      // Take indices past the pretrain range were never generated for training.
      const std::size_t take = spec.pretrain_takes + t;
      const auto clip = data::SynthesizeClip(
          data::PersonaParams::Neutral(), static_cast<int>(c), spec.frames,
          data::TakeSeed(spec.corpus_seed, data::kNeutralPersona,
                         static_cast<int>(c), take));
      const auto emb = EmbedMotion(model, clip.features);
      std::size_t best = 0;
      double best_sim = -2.0;
      for (std::size_t p = 0; p < prompts.size(); ++p) {
        const double sim = Cosine(emb, prompts[p]);
        if (sim > best_sim) {
          best_sim = sim;
          best = p;
        }
      }
      hits += best == c ? 1 : 0;
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace pbooth::clip
