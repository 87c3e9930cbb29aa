#include "pbooth/pipeline/stages.h"

#include <chrono>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "pbooth/errors.h"
#include "pbooth/nn/blob_store.h"
#include "pbooth/nn/parallel.h"

namespace pbooth::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void Log(const StageOptions& options, const std::string& message) {
  if (options.log) options.log(message);
}

fs::path PrepareOutput(const fs::path& workspace, const std::string& fallback,
                       const StageOptions& options) {
  const fs::path dir = workspace / (options.output.empty() ? fallback : options.output);
  if (fs::exists(dir)) {
    if (!options.force) {
      throw UsageError(dir.string() + " already exists; pass --force to overwrite it");
    }
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
  return dir;
}

fs::path Require(const fs::path& workspace, const std::string& dir_name,
                 const std::string& producer, const std::string& consumer) {
  const fs::path dir = workspace / dir_name;
  if (!fs::exists(dir / "manifest.json")) {
    throw StageOrderError("stage '" + consumer + "' needs the output of stage '" + producer +
                          "' at " + dir.string() + "; run '" + producer + "' first");
  }
  return dir;
}

void WriteConfig(const fs::path& dir, const RunConfig& config) {
  io::WriteText(dir / "config.txt", config.Serialize());
}

std::uint64_t StageSeed(const RunConfig& config, std::uint64_t stage) {
  return nn::Rng::Mix(config.seed ^ nn::Rng::Mix(stage));
}

std::string Fixed(double v) {
  std::ostringstream out;
  out.precision(6);
  out << std::fixed << v;
  return out.str();
}

void WriteEpochCurve(const fs::path& path, const std::vector<diffusion::EpochLog>& logs) {
  std::ostringstream out;
  out << "epoch,loss,diffusion_loss,cohesion_loss,frozen_grad_norm\n";
  for (const auto& l : logs) {
    out << l.epoch << "," << Fixed(l.loss) << "," << Fixed(l.diffusion_loss) << ","
        << Fixed(l.cohesion_loss) << "," << Fixed(l.frozen_grad_norm) << "\n";
  }
  io::WriteText(path, out.str());
}

data::Corpus LoadData(const fs::path& workspace, const std::string& consumer) {
  return data::LoadCorpus(Require(workspace, kDataDir, "gen-data", consumer));
}

void LoadBase(ModelBundle& models, const fs::path& workspace, const std::string& consumer) {
  models.LoadClip(Require(workspace, kClipDir, "pretrain-clip", consumer));
  models.LoadPretrained(Require(workspace, kPretrainedDir, "pretrain-diffusion", consumer));
}

nn::Tensor<float> CenterCrop(const data::MotionClip& clip, std::size_t frames) {
  const std::size_t len = std::min(frames, clip.frames());
  return data::Crop(clip, (clip.frames() - len) / 2, len).features;
}

}  // namespace

void WriteClipFile(const fs::path& path, const nn::Tensor<float>& features) {
  io::WriteBytes(path, io::EncodeFloats(features.values()));
}

nn::Tensor<float> ReadClipFile(const fs::path& path) {
  const auto values = io::DecodeFloats(io::ReadBytes(path));
  if (values.empty() || values.size() % data::kChannels != 0) {
    throw IntegrityError(path.string() + " does not hold whole frames of " +
                         std::to_string(data::kChannels) + " channels");
  }
  return nn::Tensor<float>({values.size() / data::kChannels, data::kChannels}, values);
}

void GenerateData(const RunConfig& config, const fs::path& workspace,
                  const StageOptions& options) {
  config.Validate();
  const fs::path dir = PrepareOutput(workspace, kDataDir, options);
  const auto corpus = data::GenerateCorpus(config.corpus);
  data::SaveCorpus(corpus, dir);
  WriteConfig(dir, config);
  Log(options, "wrote " + std::to_string(corpus.clips.size()) + " clips to " + dir.string());
}

clip::ClipTrainResult PretrainClip(const RunConfig& config, const fs::path& workspace,
                                   const StageOptions& options) {
  config.Validate();
  const auto corpus = LoadData(workspace, "pretrain-clip");
  const fs::path dir = PrepareOutput(workspace, kClipDir, options);
  ModelBundle models(config);
  std::vector<const data::MotionClip*> pretrain;
  for (std::size_t i : corpus.Indices(data::Split::kPretrain)) pretrain.push_back(&corpus.clips[i]);
  models.clip.motion.set_normalizer(data::FeatureNormalizer::Fit(pretrain));

  clip::ClipTrainConfig train = config.clip_train;
  train.seed = StageSeed(config, 1);
  clip::ClipTrainResult result;
  try {
    result = clip::TrainClip(models.clip, corpus, train);
  } catch (const NumericError&) {
    models.SaveClip(dir / "last_good", config.Hash());
    throw;
  }
  models.SaveClip(dir, config.Hash());
  WriteConfig(dir, config);
  std::ostringstream curve;
  curve << "step,loss\n";
  for (const auto& p : result.curve) curve << p.step << "," << Fixed(p.loss) << "\n";
  io::WriteText(dir / "curve.csv", curve.str());
  io::WriteText(dir / "retrieval.txt",
                "heldout_recall_at_1=" + Fixed(result.recall_at_1) + "\n");
  Log(options, "clip encoders trained; held-out recall@1 " + Fixed(result.recall_at_1));
  return result;
}

std::vector<diffusion::EpochLog> PretrainDiffusion(const RunConfig& config,
                                                   const fs::path& workspace,
                                                   const StageOptions& options) {
  config.Validate();
  const auto corpus = LoadData(workspace, "pretrain-diffusion");
  ModelBundle models(config);
  models.LoadClip(Require(workspace, kClipDir, "pretrain-clip", "pretrain-diffusion"));
  const fs::path dir = PrepareOutput(workspace, kPretrainedDir, options);
  diffusion::TrainConfig train = config.pretrain;
  train.seed = StageSeed(config, 2);
  const auto logs =
      diffusion::Pretrain(models.denoiser, models.clip, corpus, config.Schedule(), train);
  models.SavePretrained(dir, config.Hash());
  WriteConfig(dir, config);
  WriteEpochCurve(dir / "curve.csv", logs);
  Log(options, "denoiser pretrained; loss " + Fixed(logs.front().loss) + " -> " +
                   Fixed(logs.back().loss));
  return logs;
}

std::vector<diffusion::EpochLog> FinetuneStage(const RunConfig& config,
                                               const fs::path& workspace,
                                               const StageOptions& options) {
  config.Validate();
  const auto corpus = LoadData(workspace, "finetune");
  ModelBundle models(config);
  LoadBase(models, workspace, "finetune");
  const fs::path dir = PrepareOutput(workspace, kFinetunedDir, options);
  diffusion::TrainConfig train = config.finetune;
  train.seed = StageSeed(config, 3);
  const auto logs =
      diffusion::Finetune(models.Refs(), corpus, config.Schedule(), train);
  models.SaveFinetuned(dir, config.Hash());
  WriteConfig(dir, config);
  WriteEpochCurve(dir / "curve.csv", logs);
  Log(options, "finetuned; loss " + Fixed(logs.front().loss) + " -> " + Fixed(logs.back().loss));
  return logs;
}

SampleOutcome SampleStage(const RunConfig& config, const fs::path& workspace,
                          const SampleRequest& request, const StageOptions& options) {
  config.Validate();
  const auto corpus = LoadData(workspace, "sample");
  ModelBundle models(config);
  LoadBase(models, workspace, "sample");
  if (!request.inputs.empty()) {
    models.LoadFinetuned(Require(workspace, options.finetuned, "finetune", "sample"));
  }
  const auto prompt = data::Vocabulary::Default().Tokenize(request.prompt);

  std::vector<nn::Tensor<float>> inputs;
  for (const auto& spec : request.inputs) {
    const bool numeric = !spec.empty() && spec.find_first_not_of("0123456789") == std::string::npos;
    if (numeric) {
      const std::size_t index = std::stoull(spec);
      if (index >= corpus.clips.size()) {
        throw DataError("clip index " + spec + " is outside the corpus (" +
                        std::to_string(corpus.clips.size()) + " clips)");
      }
      inputs.push_back(CenterCrop(corpus.clips[index], config.finetune.crop_frames));
    } else {
      inputs.push_back(ReadClipFile(spec));
    }
  }

  diffusion::GuidanceConfig guidance = config.guidance;
  if (inputs.size() > 1) guidance.b = config.b_multi;
  SampleOutcome out;
  if (inputs.empty()) {
    out.conditioning.conditions.text = PlainTextFeature(models, prompt);
  } else {
    out.conditioning = ConditionOnInputs(models, inputs, prompt, config.fusion, config.caf,
                                         guidance.s_t);
  }
  const fs::path dir = PrepareOutput(workspace, kSamplesDir, options);
  nn::Rng rng(StageSeed(config, 4));
  out.clip = diffusion::Sample(models.denoiser, models.clip.motion.normalizer(),
                               out.conditioning.conditions, config.Schedule(), guidance,
                               request.frames, rng);
  out.directory = dir;
  WriteClipFile(dir / "motion.bin", out.clip.features);
  json meta = {{"prompt", request.prompt},
               {"frames", out.clip.frames()},
               {"channels", data::kChannels},
               {"inputs", request.inputs},
               {"similarities", out.conditioning.similarities},
               {"weights", out.conditioning.weights},
               {"selected", out.conditioning.selected}};
  io::WriteText(dir / "motion.json", meta.dump(2) + "\n");
  WriteConfig(dir, config);
  return out;
}

eval::MetricsRow EvaluateStage(const RunConfig& config, const fs::path& workspace,
                               const StageOptions& options) {
  config.Validate();
  const auto corpus = LoadData(workspace, "eval");
  ModelBundle models(config);
  LoadBase(models, workspace, "eval");
  const bool persona = config.eval_mode == EvalMode::kPersona;
  if (persona) models.LoadFinetuned(Require(workspace, options.finetuned, "finetune", "eval"));
  const fs::path dir = PrepareOutput(workspace, kEvalDir, options);
  const auto started = std::chrono::steady_clock::now();

  eval::PraConfig pra_config = config.pra;
  pra_config.seed = StageSeed(config, 5);
  nn::Rng pra_rng(pra_config.seed);
  eval::PraClassifier classifier(pra_config, corpus.personas.size(),
                                 models.clip.motion.normalizer(), pra_rng);
  const auto pra = eval::TrainPra(classifier, corpus, pra_config);
  Log(options, "persona classifier validation accuracy " + Fixed(pra.validation_accuracy));

  eval::EvalProtocol protocol = config.protocol;
  protocol.seed = config.seed;
  diffusion::GuidanceConfig guidance = config.guidance;
  if (protocol.setting == eval::Setting::kMultiInput) guidance.b = config.b_multi;
  const auto schedule = config.Schedule();
  const auto requests = eval::DrawRequests(protocol, corpus);

  const eval::Generator generate = [&](const eval::GenerationRequest& r) {
    const auto prompt = data::Describe(r.content_id, r.variant);
    diffusion::SamplingConditions conditions;
    if (persona) {
      std::vector<nn::Tensor<float>> inputs;
      for (std::size_t i : r.inputs) {
        inputs.push_back(CenterCrop(corpus.clips[i], config.finetune.crop_frames));
      }
      conditions = ConditionOnInputs(models, inputs, prompt, config.fusion, config.caf,
                                     guidance.s_t)
                       .conditions;
    } else {
      conditions.text = PlainTextFeature(models, prompt);
    }
    nn::Rng rng(r.seed);
    return diffusion::Sample(models.denoiser, models.clip.motion.normalizer(), conditions,
                             schedule, guidance, protocol.frames, rng);
  };
  const eval::MotionEmbedder embed_motion = [&](const nn::Tensor<float>& features) {
    return clip::EmbedMotion(models.clip, features);
  };
  const eval::TextEmbedder embed_text = [&](const data::PromptText& prompt) {
    return clip::EmbedText(models.clip, prompt);
  };
  protocol.threads = nn::DefaultThreadCount();
  eval::MetricsRow row = eval::RunProtocol(protocol, corpus, requests, generate, embed_motion,
                                           embed_text, classifier);
  row.config_hash = config.Hash();
  if (config.record_wall_time) {
    row.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  }
  io::WriteText(dir / "metrics.csv", eval::MetricsCsvHeader() + "\n" + eval::MetricsCsvLine(row) + "\n");
  WriteConfig(dir, config);
  return row;
}

std::vector<std::string> AblationAxes() {
  return {"s_t", "s_v", "g_t", "g_v", "b", "k", "lambda", "adapt_kind"};
}

std::vector<eval::MetricsRow> AblateStage(const RunConfig& config, const fs::path& workspace,
                                          const std::string& axis,
                                          const std::vector<std::string>& values,
                                          const StageOptions& options) {
  const auto axes = AblationAxes();
  if (std::find(axes.begin(), axes.end(), axis) == axes.end()) {
    throw ConfigError("unknown ablation axis '" + axis + "'");
  }
  if (values.empty()) throw ConfigError("ablation needs at least one value");
  const bool retrain = axis == "lambda" || axis == "adapt_kind";
  const std::string name = options.output.empty() ? "ablate-" + axis : options.output;
  StageOptions top = options;
  top.output = name;
  const fs::path dir = PrepareOutput(workspace, name, top);

  std::ostringstream csv;
  csv << "axis,value," << eval::MetricsCsvHeader() << "\n";
  std::vector<eval::MetricsRow> rows;
  for (std::size_t i = 0; i < values.size(); ++i) {
    RunConfig variant = config;
    variant.Set(axis, values[i]);
    StageOptions stage = options;
    stage.force = true;
    if (retrain) {
      stage.output = name + "/finetuned-" + std::to_string(i);
      FinetuneStage(variant, workspace, stage);
      stage.finetuned = stage.output;
    }
    stage.output = name + "/eval-" + std::to_string(i);
    const auto row = EvaluateStage(variant, workspace, stage);
    Log(options, axis + "=" + values[i] + ": " + eval::MetricsCsvLine(row));
    csv << axis << "," << values[i] << "," << eval::MetricsCsvLine(row) << "\n";
    rows.push_back(row);
  }
  io::WriteText(dir / "ablation.csv", csv.str());
  WriteConfig(dir, config);
  return rows;
}

}  // namespace pbooth::pipeline
