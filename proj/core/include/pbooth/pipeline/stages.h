#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "pbooth/pipeline/model_bundle.h"

namespace pbooth::pipeline {

// Default stage output directories inside a workspace.
inline constexpr const char* kDataDir = "data";
inline constexpr const char* kClipDir = "clip";
inline constexpr const char* kPretrainedDir = "pretrained";
inline constexpr const char* kFinetunedDir = "finetuned";
inline constexpr const char* kSamplesDir = "samples";
inline constexpr const char* kEvalDir = "eval";

struct StageOptions {
  bool force = false;
  // Output directory name inside the workspace; empty uses the default.
  std::string output;
  // Finetuned checkpoint consumed by sample/eval.
  std::string finetuned = kFinetunedDir;
  // Progress messages; may be empty.
  std::function<void(const std::string&)> log;
};

// Each stage checks its inputs (StageOrderError names the missing stage),
// refuses to reuse an existing output directory unless forced, and writes
// config.txt with the resolved configuration next to its outputs.

void GenerateData(const RunConfig& config, const std::filesystem::path& workspace,
                  const StageOptions& options);

clip::ClipTrainResult PretrainClip(const RunConfig& config,
                                   const std::filesystem::path& workspace,
                                   const StageOptions& options);

std::vector<diffusion::EpochLog> PretrainDiffusion(const RunConfig& config,
                                                   const std::filesystem::path& workspace,
                                                   const StageOptions& options);

std::vector<diffusion::EpochLog> FinetuneStage(const RunConfig& config,
                                               const std::filesystem::path& workspace,
                                               const StageOptions& options);

struct SampleRequest {
  std::string prompt;
  // Corpus clip indices or paths to raw clip files (little-endian float32,
  // frames x 32).
  std::vector<std::string> inputs;
  std::size_t frames = 48;
};

struct SampleOutcome {
  data::MotionClip clip;
  InputConditioning conditioning;
  std::filesystem::path directory;
};

SampleOutcome SampleStage(const RunConfig& config, const std::filesystem::path& workspace,
                          const SampleRequest& request, const StageOptions& options);

// Runs the configured protocol and writes metrics.csv.
eval::MetricsRow EvaluateStage(const RunConfig& config,
                               const std::filesystem::path& workspace,
                               const StageOptions& options);

// One evaluation per value of `axis`, all sharing the seed, collected into
// <output>/ablation.csv. Axes lambda and adapt_kind retrain the adapters.
std::vector<eval::MetricsRow> AblateStage(const RunConfig& config,
                                          const std::filesystem::path& workspace,
                                          const std::string& axis,
                                          const std::vector<std::string>& values,
                                          const StageOptions& options);

std::vector<std::string> AblationAxes();

// Raw clip file helpers used by the sample stage.
void WriteClipFile(const std::filesystem::path& path, const nn::Tensor<float>& features);
nn::Tensor<float> ReadClipFile(const std::filesystem::path& path);

}  // namespace pbooth::pipeline
