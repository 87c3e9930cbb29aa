#include "pbooth/diffusion/training.h"

#include <cmath>

#include "pbooth/errors.h"

namespace pbooth::diffusion {

using nn::Var;

template <typename T>
LossTerms<T> DiffusionLoss(const Var<T>& prediction, const nn::Tensor<T>& target,
                           T lambda_geo) {
  nn::CheckSameShape(prediction.value().shape(), target.shape(), "diffusion loss");
  const std::size_t f = target.rows();
  const Var<T> truth = Var<T>::Constant(target);
  LossTerms<T> out;
  out.mse = nn::MeanSquaredError(prediction, truth);
  if (f >= 2) {
    const Var<T> dp = nn::Sub(nn::SliceRows(prediction, 1, f - 1),
                              nn::SliceRows(prediction, 0, f - 1));
    const Var<T> dt = nn::Sub(nn::SliceRows(truth, 1, f - 1),
                              nn::SliceRows(truth, 0, f - 1));
    out.velocity = nn::MeanSquaredError(dp, dt);
  } else {
    out.velocity = Var<T>::Constant(nn::Tensor<T>::Scalar(T{0}));
  }
  const std::size_t c0 = data::channel::kFirstContact;
  const std::size_t nc = data::channel::kContactCount;
  nn::Tensor<T> contact_target = nn::Tensor<T>::Matrix(f, nc);
  for (std::size_t i = 0; i < f; ++i) {
    for (std::size_t c = 0; c < nc; ++c) contact_target(i, c) = target(i, c0 + c);
  }
  out.contact = nn::BinaryCrossEntropy(nn::SliceCols(prediction, c0, nc), contact_target);
  out.total = nn::Add(out.mse, nn::Scale(nn::Add(out.velocity, out.contact), lambda_geo));
  return out;
}

void TrainConfig::Validate() const {
  if (epochs == 0 || batch == 0) throw ConfigError("epochs and batch must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
  for (double p : {text_drop, visual_drop}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("drop probabilities must lie in [0, 1]");
  }
  if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
  if (crop_frames < data::kMinFrames || crop_frames > data::kMaxFrames) {
    throw ConfigError("crop_frames must lie in [32, 64]");
  }
  if (lambda_pc < 0.0 || lambda_geo < 0.0) throw ConfigError("loss weights must be >= 0");
}

DropDecision DrawDrop(nn::Rng& rng, double text_drop, double visual_drop) {
  DropDecision d;
  d.text = rng.Bernoulli(text_drop);
  d.visual = rng.Bernoulli(visual_drop);
  return d;
}

std::vector<nn::Tensor<float>> CachePromptFeatures(clip::ClipModel<float>& clip,
                                                   std::size_t contents) {
  std::vector<nn::Tensor<float>> cache;
  for (std::size_t c = 0; c < contents; ++c) {
    for (std::size_t v = 0; v < data::kVariantsPerContent; ++v) {
      nn::Graph<float> g(false);
      cache.push_back(
          clip.text.Encode(g, data::Describe(static_cast<int>(c), static_cast<int>(v)))
              .value());
    }
  }
  return cache;
}

namespace {

data::MotionClip RandomCrop(const data::MotionClip& clip, std::size_t frames,
                            nn::Rng& rng) {
  const std::size_t len = std::min(frames, clip.frames());
  const std::size_t start = rng.Index(clip.frames() - len + 1);
  return data::Crop(clip, start, len);
}

void CheckFinite(double value, const char* what, std::size_t epoch) {
  if (!std::isfinite(value)) {
    throw NumericError(std::string(what) + " became non-finite in epoch " +
                       std::to_string(epoch));
  }
}

}  // namespace

std::vector<EpochLog> Pretrain(Denoiser<float>& denoiser, clip::ClipModel<float>& clip,
                               const data::Corpus& corpus,
                               const DiffusionSchedule& schedule,
                               const TrainConfig& config) {
  config.Validate();
  const auto prompts = CachePromptFeatures(clip, corpus.spec.contents);
  const auto& normalizer = clip.motion.normalizer();
  nn::ParameterList<float> params;
  denoiser.CollectBaseParameters(params);
  nn::ParameterList<float> adapters;
  denoiser.CollectAdapterParameters(adapters);
  nn::SetTrainable(adapters, false);
  nn::SetTrainable(params, true);

  nn::OptimizerConfig opt;
  opt.learning_rate = config.learning_rate;
  opt.weight_decay = config.weight_decay;
  nn::AdamW<float> optimizer(opt);
  nn::Rng rng(config.seed);
  const auto pool = corpus.Indices(data::Split::kPretrain);
  if (pool.empty()) throw DataError("pretrain split is empty");

  std::vector<EpochLog> logs;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto order = nn::Permutation(pool.size(), rng);
    double sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch) {
      const std::size_t end = std::min(order.size(), begin + config.batch);
      nn::Graph<float> g;
      Var<float> total;
      for (std::size_t k = begin; k < end; ++k) {
        const auto& source = corpus.clips[pool[order[k]]];
        const auto target =
            normalizer.Normalize(RandomCrop(source, config.crop_frames, rng).features);
        const std::size_t variant = rng.Index(data::kVariantsPerContent);
        Conditions<float> cond;
        if (!rng.Bernoulli(config.text_drop)) {
          cond.text = Var<float>::Constant(
              prompts[static_cast<std::size_t>(source.content_id) *
                          data::kVariantsPerContent + variant]);
        }
        const std::size_t t = rng.Index(schedule.steps);
        const auto noise = rng.NormalTensor<float>(target.shape());
        const auto pred = denoiser.Forward(g, QSample(target, t, noise, schedule), t, cond);
        const auto loss = DiffusionLoss(pred, target, static_cast<float>(config.lambda_geo));
        total = total.defined() ? nn::Add(total, loss.total) : loss.total;
      }
      total = nn::Scale(total, 1.0f / static_cast<float>(end - begin));
      const double value = total.value()[0];
      CheckFinite(value, "pretraining loss", epoch);
      nn::ZeroGrad(params);
      g.Backward(total);
      g.AccumulateGrads();
      optimizer.Step(params);
      sum += value;
      ++steps;
    }
    EpochLog log;
    log.epoch = epoch;
    log.loss = log.diffusion_loss = sum / static_cast<double>(steps);
    logs.push_back(log);
  }
  return logs;
}

std::pair<nn::ParameterList<float>, nn::ParameterList<float>> PrepareFinetune(
    const FinetuneModels<float>& models, bool text_persona) {
  nn::ParameterList<float> trainable, frozen;
  models.clip.CollectParameters(frozen);
  models.denoiser.CollectBaseParameters(frozen);
  std::erase(frozen, &models.denoiser.null_text());
  models.denoiser.CollectAdapterParameters(trainable);
  models.extractor.CollectParameters(trainable);
  trainable.push_back(&models.denoiser.null_text());
  if (text_persona) {
    trainable.push_back(&models.text_gate.gamma());
  } else {
    frozen.push_back(&models.text_gate.gamma());
  }
  nn::SetTrainable(frozen, false);
  nn::SetTrainable(trainable, true);
  return {trainable, frozen};
}

StepReport FinetuneStep(const FinetuneModels<float>& models, const data::Corpus& corpus,
                        const std::vector<std::size_t>& batch,
                        const DiffusionSchedule& schedule, const TrainConfig& config,
                        const std::vector<nn::Tensor<float>>& prompt_cache,
                        nn::AdamW<float>& optimizer, nn::Rng& rng) {
  if (batch.empty()) throw DataError("finetune step with an empty batch");
  nn::ParameterList<float> all;
  models.clip.CollectParameters(all);
  models.denoiser.CollectBaseParameters(all);
  models.denoiser.CollectAdapterParameters(all);
  models.extractor.CollectParameters(all);
  all.push_back(&models.text_gate.gamma());
  nn::ParameterList<float> trainable, frozen;
  for (auto* p : all) (p->trainable ? trainable : frozen).push_back(p);

  const auto& normalizer = models.clip.motion.normalizer();
  const bool use_pc = config.lambda_pc > 0.0;
  StepReport report;
  nn::Graph<float> g;

  auto persona_features = [&](const data::MotionClip& clip) {
    const auto input = RandomCrop(clip, config.crop_frames, rng);
    nn::Graph<float> frozen_graph(false);
    const auto frames = models.clip.motion.Encode(frozen_graph, input.features).frames;
    return models.extractor.Extract(g, Var<float>::Constant(frames.value()));
  };

  Var<float> diffusion_sum;
  std::vector<Var<float>> ys;
  std::vector<int> labels;
  for (std::size_t anchor : batch) {
    const auto& clip = corpus.clips.at(anchor);
    const auto features = persona_features(clip);
    const auto target =
        normalizer.Normalize(RandomCrop(clip, config.crop_frames, rng).features);
    const auto drop = DrawDrop(rng, config.text_drop, config.visual_drop);
    ++report.cases[CaseIndex(drop)];

    Conditions<float> cond;
    cond.s_v = static_cast<float>(config.s_v);
    if (!drop.text) {
      const int variant = static_cast<int>(rng.Index(data::kVariantsPerContent));
      const Var<float> base = Var<float>::Constant(
          prompt_cache[static_cast<std::size_t>(clip.content_id) *
                           data::kVariantsPerContent + static_cast<std::size_t>(variant)]);
      cond.text = config.text_persona
                      ? adapt::PersonalizedTextFeature(
                            g, models.clip.text, models.text_gate,
                            data::Describe(clip.content_id, variant), features.p_star,
                            static_cast<float>(config.s_t), base)
                      : base;
    }
    if (!drop.visual) cond.v_star = features.v_star;

    const std::size_t t = rng.Index(schedule.steps);
    const auto noise = rng.NormalTensor<float>(target.shape());
    const auto pred = models.denoiser.Forward(g, QSample(target, t, noise, schedule), t, cond);
    const auto loss = DiffusionLoss(pred, target, static_cast<float>(config.lambda_geo));
    diffusion_sum = diffusion_sum.defined() ? nn::Add(diffusion_sum, loss.total) : loss.total;

    if (use_pc) {
      const std::size_t positive =
          persona::SamplePositive(corpus, data::Split::kFinetune, anchor, rng);
      ys.push_back(features.y);
      ys.push_back(persona_features(corpus.clips[positive]).y);
      labels.push_back(clip.persona_id);
      labels.push_back(clip.persona_id);
    }
  }
  const Var<float> diffusion_loss =
      nn::Scale(diffusion_sum, 1.0f / static_cast<float>(batch.size()));
  Var<float> total = diffusion_loss;
  report.diffusion_loss = diffusion_loss.value()[0];
  if (use_pc) {
    const auto projected = models.extractor.Project(g, nn::ConcatRows(ys));
    const auto pc = persona::PersonaCohesionLoss(
        projected, labels, persona::PairedPositives(labels),
        static_cast<float>(config.temperature));
    report.cohesion_loss = pc.value()[0];
    total = nn::Add(total, nn::Scale(pc, static_cast<float>(config.lambda_pc)));
  }
  report.loss = total.value()[0];
  if (!std::isfinite(report.loss)) throw NumericError("finetuning loss became non-finite");

  nn::ZeroGrad(all);
  g.Backward(total);
  g.AccumulateGrads();
  report.frozen_grad_norm = nn::GradNorm(frozen);
  if (report.frozen_grad_norm != 0.0) {
    for (auto* p : frozen) {
      if (p->grad.MaxAbs() != 0.0f) {
        throw IntegrityError("frozen parameter '" + p->name + "' received a gradient");
      }
    }
  }
  optimizer.Step(trainable);
  return report;
}

std::vector<EpochLog> Finetune(const FinetuneModels<float>& models,
                               const data::Corpus& corpus,
                               const DiffusionSchedule& schedule,
                               const TrainConfig& config) {
  config.Validate();
  PrepareFinetune(models, config.text_persona);
  const auto prompts = CachePromptFeatures(models.clip, corpus.spec.contents);
  nn::OptimizerConfig opt;
  opt.learning_rate = config.learning_rate;
  opt.weight_decay = config.weight_decay;
  nn::AdamW<float> optimizer(opt);
  nn::Rng rng(config.seed);
  const auto pool = corpus.Indices(data::Split::kFinetune);
  if (pool.empty()) throw DataError("finetune split is empty");

  std::vector<EpochLog> logs;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto order = nn::Permutation(pool.size(), rng);
    EpochLog log;
    log.epoch = epoch;
    std::size_t steps = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch) {
      const std::size_t end = std::min(order.size(), begin + config.batch);
      std::vector<std::size_t> batch;
      for (std::size_t k = begin; k < end; ++k) batch.push_back(pool[order[k]]);
      const auto report =
          FinetuneStep(models, corpus, batch, schedule, config, prompts, optimizer, rng);
      CheckFinite(report.loss, "finetuning loss", epoch);
      log.loss += report.loss;
      log.diffusion_loss += report.diffusion_loss;
      log.cohesion_loss += report.cohesion_loss;
      log.frozen_grad_norm = std::max(log.frozen_grad_norm, report.frozen_grad_norm);
      ++steps;
    }
    const double n = static_cast<double>(steps);
    log.loss /= n;
    log.diffusion_loss /= n;
    log.cohesion_loss /= n;
    logs.push_back(log);
  }
  return logs;
}

template LossTerms<float> DiffusionLoss(const Var<float>&, const nn::Tensor<float>&, float);
template LossTerms<double> DiffusionLoss(const Var<double>&, const nn::Tensor<double>&, double);

}  // namespace pbooth::diffusion
