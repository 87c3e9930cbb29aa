#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "pbooth/eval/metrics.h"
#include "pbooth/pipeline/config.h"

namespace pbooth::pipeline {

// Every network of the pipeline, initialized deterministically from the run
// seed, with per-stage checkpoint save/load.
class ModelBundle {
 public:
  explicit ModelBundle(const RunConfig& config);

  diffusion::FinetuneModels<float> Refs() {
    return {clip, extractor, text_gate, denoiser};
  }

  void SaveClip(const std::filesystem::path& dir, const std::string& config_hash);
  void LoadClip(const std::filesystem::path& dir);
  void SavePretrained(const std::filesystem::path& dir, const std::string& config_hash);
  void LoadPretrained(const std::filesystem::path& dir);
  void SaveFinetuned(const std::filesystem::path& dir, const std::string& config_hash);
  void LoadFinetuned(const std::filesystem::path& dir);

  clip::ClipModel<float> clip;
  persona::PersonaExtractor<float> extractor;
  adapt::Gate<float> text_gate;
  diffusion::Denoiser<float> denoiser;

 private:
  nn::ParameterList<float> FinetunedParameters();
};

// Persona features of one clip with no gradient recording.
struct ClipPersona {
  nn::Tensor<float> v_star;
  nn::Tensor<float> p_star;
  eval::Embedding pooled;
};
ClipPersona DescribePersona(ModelBundle& models, const nn::Tensor<float>& features);

nn::Tensor<float> PlainTextFeature(ModelBundle& models, const data::PromptText& prompt);
nn::Tensor<float> PersonalizedFeature(ModelBundle& models, const data::PromptText& prompt,
                                      const nn::Tensor<float>& p_star, double s_t);

struct InputConditioning {
  diffusion::SamplingConditions conditions;
  std::vector<double> similarities;  // empty for mean fusion
  std::vector<double> weights;
  std::vector<std::size_t> selected;
};

// Builds (T*, V*) from one or more input clips: mean P* gives the scoring
// prompt feature, CAF (or plain averaging) weights fuse V* and P*, and the
// fused P* personalizes the prompt.
InputConditioning ConditionOnInputs(ModelBundle& models,
                                    const std::vector<nn::Tensor<float>>& inputs,
                                    const data::PromptText& prompt, FusionMode mode,
                                    const fusion::CafConfig& caf, double s_t);

}  // namespace pbooth::pipeline
