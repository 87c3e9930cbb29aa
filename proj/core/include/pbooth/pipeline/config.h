#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pbooth/adapt/adaptation.h"
#include "pbooth/clip/clip_model.h"
#include "pbooth/clip/clip_training.h"
#include "pbooth/data/corpus.h"
#include "pbooth/diffusion/denoiser.h"
#include "pbooth/diffusion/sampler.h"
#include "pbooth/diffusion/schedule.h"
#include "pbooth/diffusion/training.h"
#include "pbooth/eval/pra.h"
#include "pbooth/eval/protocol.h"
#include "pbooth/fusion/caf.h"
#include "pbooth/persona/extractor.h"

namespace pbooth::pipeline {

enum class FusionMode { kCaf, kMean };
enum class EvalMode { kPersona, kBaseline };

// Every knob of every stage. Values are read and written through string keys
// so config files, command-line overrides and the resolved dump share one
// code path.
struct RunConfig {
  std::uint64_t seed = 1;

  data::CorpusSpec corpus;

  std::size_t d_model = 64;
  std::size_t d_clip = 32;
  std::size_t heads = 4;
  std::size_t ff_width = 128;
  std::size_t denoiser_blocks = 4;
  adapt::AdaptKind adapt_kind = adapt::AdaptKind::kSelfAttention;

  clip::ClipTrainConfig clip_train;

  std::size_t diffusion_steps = 50;
  diffusion::ScheduleKind schedule = diffusion::ScheduleKind::kCosine;
  diffusion::TrainConfig pretrain;
  diffusion::TrainConfig finetune;

  diffusion::GuidanceConfig guidance;
  double b_multi = 0.5;  // guidance balance for multi-input sampling
  fusion::CafConfig caf;
  FusionMode fusion = FusionMode::kCaf;

  eval::EvalProtocol protocol;
  EvalMode eval_mode = EvalMode::kPersona;
  eval::PraConfig pra;
  bool record_wall_time = false;

  RunConfig();

  // Throws ConfigError for unknown keys or unparsable values.
  void Set(const std::string& key, const std::string& value);
  std::string Get(const std::string& key) const;
  std::vector<std::string> Keys() const;

  // Applies a named preset ("desk" or "full").
  void ApplyPreset(const std::string& name);

  // key=value lines; '#' starts a comment.
  void LoadFile(const std::filesystem::path& path);
  std::string Serialize() const;
  // FNV-1a of Serialize(), as 16 hex digits.
  std::string Hash() const;

  void Validate() const;

  clip::ClipConfig ClipModelConfig() const;
  persona::PersonaConfig PersonaModelConfig() const;
  diffusion::DenoiserConfig DenoiserModelConfig() const;
  diffusion::DiffusionSchedule Schedule() const;
};

}  // namespace pbooth::pipeline
