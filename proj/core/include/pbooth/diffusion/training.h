#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <vector>

#include "pbooth/clip/clip_model.h"
#include "pbooth/data/corpus.h"
#include "pbooth/diffusion/denoiser.h"
#include "pbooth/diffusion/schedule.h"
#include "pbooth/nn/optim.h"
#include "pbooth/persona/extractor.h"

namespace pbooth::diffusion {

template <typename T>
struct LossTerms {
  nn::Var<T> total;     // mse + lambda_geo * (velocity + contact)
  nn::Var<T> mse;
  nn::Var<T> velocity;  // MSE of first differences along time
  nn::Var<T> contact;   // BCE on the contact channels
};

// Reconstruction loss of an x0 prediction against the clean target, both in
// normalized feature space (contact channels are left as {0, 1}).
template <typename T>
LossTerms<T> DiffusionLoss(const nn::Var<T>& prediction, const nn::Tensor<T>& target,
                           T lambda_geo);

struct TrainConfig {
  std::size_t epochs = 60;
  std::size_t batch = 16;
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  double text_drop = 0.1;
  double visual_drop = 0.1;
  double lambda_geo = 1.0;
  double lambda_pc = 1e-2;
  double temperature = 0.1;
  std::size_t crop_frames = 48;
  double s_t = 1.0;  // gate scales during training
  double s_v = 1.0;
  bool text_persona = true;  // false freezes the textual gate at zero
  std::uint64_t seed = 1;

  void Validate() const;
};

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;
  double diffusion_loss = 0.0;
  double cohesion_loss = 0.0;
  double frozen_grad_norm = 0.0;  // largest over the epoch's steps
};

struct DropDecision {
  bool text = false;
  bool visual = false;
};

DropDecision DrawDrop(nn::Rng& rng, double text_drop, double visual_drop);

// Index of the conditioning case: 0 (V*, T*), 1 (V*, none), 2 (none, T*),
// 3 (none, none).
inline std::size_t CaseIndex(const DropDecision& d) {
  return (d.visual ? 2u : 0u) + (d.text ? 1u : 0u);
}

// Plain text features of every (content, variant) prompt from the frozen
// encoder, keyed by content * kVariantsPerContent + variant.
std::vector<nn::Tensor<float>> CachePromptFeatures(clip::ClipModel<float>& clip,
                                                   std::size_t contents);

// Pretraining on the neutral split with text-condition dropout. Only base
// denoiser parameters are updated.
std::vector<EpochLog> Pretrain(Denoiser<float>& denoiser, clip::ClipModel<float>& clip,
                               const data::Corpus& corpus,
                               const DiffusionSchedule& schedule,
                               const TrainConfig& config);

template <typename T>
struct FinetuneModels {
  clip::ClipModel<T>& clip;
  persona::PersonaExtractor<T>& extractor;
  adapt::Gate<T>& text_gate;
  Denoiser<T>& denoiser;
};

struct StepReport {
  double loss = 0.0;
  double diffusion_loss = 0.0;
  double cohesion_loss = 0.0;
  double frozen_grad_norm = 0.0;
  std::array<std::size_t, 4> cases{};
};

// Marks the finetune-trainable set: adapters and gates, the persona
// extractor, the textual gate (when text_persona) and the null text feature.
// Everything else is frozen. Returns {trainable, frozen}.
std::pair<nn::ParameterList<float>, nn::ParameterList<float>> PrepareFinetune(
    const FinetuneModels<float>& models, bool text_persona);

// One optimizer step on the anchors `batch` (finetune split indices).
// Throws IntegrityError if a frozen parameter receives a nonzero gradient.
StepReport FinetuneStep(const FinetuneModels<float>& models, const data::Corpus& corpus,
                        const std::vector<std::size_t>& batch,
                        const DiffusionSchedule& schedule, const TrainConfig& config,
                        const std::vector<nn::Tensor<float>>& prompt_cache,
                        nn::AdamW<float>& optimizer, nn::Rng& rng);

std::vector<EpochLog> Finetune(const FinetuneModels<float>& models,
                               const data::Corpus& corpus,
                               const DiffusionSchedule& schedule,
                               const TrainConfig& config);

}  // namespace pbooth::diffusion
