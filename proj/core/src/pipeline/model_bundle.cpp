#include "pbooth/pipeline/model_bundle.h"

#include "pbooth/errors.h"
#include "pbooth/nn/blob_store.h"

namespace pbooth::pipeline {

namespace {

nn::Rng StreamFor(const RunConfig& config, std::uint64_t stream) {
  return nn::Rng(config.seed).Fork(stream);
}

clip::ClipModel<float> MakeClip(const RunConfig& config) {
  nn::Rng rng = StreamFor(config, 1);
  return clip::ClipModel<float>(config.ClipModelConfig(), rng);
}

persona::PersonaExtractor<float> MakeExtractor(const RunConfig& config) {
  nn::Rng rng = StreamFor(config, 2);
  return persona::PersonaExtractor<float>(config.PersonaModelConfig(), rng);
}

diffusion::Denoiser<float> MakeDenoiser(const RunConfig& config) {
  nn::Rng rng = StreamFor(config, 3);
  return diffusion::Denoiser<float>(config.DenoiserModelConfig(), rng);
}

io::TensorArchive Open(const std::filesystem::path& dir, const std::string& stage) {
  auto archive = io::TensorArchive::Load(dir);
  if (archive.stage != stage) {
    throw IntegrityError(dir.string() + " holds a '" + archive.stage +
                         "' checkpoint, expected '" + stage + "'");
  }
  return archive;
}

}  // namespace

ModelBundle::ModelBundle(const RunConfig& config)
    : clip(MakeClip(config)),
      extractor(MakeExtractor(config)),
      text_gate("text.gamma"),
      denoiser(MakeDenoiser(config)) {}

void ModelBundle::SaveClip(const std::filesystem::path& dir, const std::string& hash) {
  io::TensorArchive archive;
  archive.stage = "clip";
  archive.metadata["config_hash"] = hash;
  io::StoreParameters(clip.Parameters(), archive);
  archive.tensors["normalizer.mean"] = clip.motion.normalizer().mean;
  archive.tensors["normalizer.std"] = clip.motion.normalizer().std;
  archive.Save(dir);
}

void ModelBundle::LoadClip(const std::filesystem::path& dir) {
  const auto archive = Open(dir, "clip");
  io::RestoreParameters(clip.Parameters(), archive);
  data::FeatureNormalizer n;
  n.mean = archive.tensors.at("normalizer.mean");
  n.std = archive.tensors.at("normalizer.std");
  clip.motion.set_normalizer(std::move(n));
}

void ModelBundle::SavePretrained(const std::filesystem::path& dir, const std::string& hash) {
  io::TensorArchive archive;
  archive.stage = "pretrained";
  archive.metadata["config_hash"] = hash;
  nn::ParameterList<float> params;
  denoiser.CollectBaseParameters(params);
  io::StoreParameters(params, archive);
  archive.Save(dir);
}

void ModelBundle::LoadPretrained(const std::filesystem::path& dir) {
  const auto archive = Open(dir, "pretrained");
  nn::ParameterList<float> params;
  denoiser.CollectBaseParameters(params);
  io::RestoreParameters(params, archive);
}

nn::ParameterList<float> ModelBundle::FinetunedParameters() {
  nn::ParameterList<float> params;
  denoiser.CollectAdapterParameters(params);
  extractor.CollectParameters(params);
  params.push_back(&text_gate.gamma());
  params.push_back(&denoiser.null_text());
  return params;
}

void ModelBundle::SaveFinetuned(const std::filesystem::path& dir, const std::string& hash) {
  io::TensorArchive archive;
  archive.stage = "finetuned";
  archive.metadata["config_hash"] = hash;
  archive.metadata["adapt_kind"] =
      std::string(adapt::AdaptKindName(denoiser.config().adapt_kind));
  io::StoreParameters(FinetunedParameters(), archive);
  archive.Save(dir);
}

void ModelBundle::LoadFinetuned(const std::filesystem::path& dir) {
  const auto archive = Open(dir, "finetuned");
  const auto kind = archive.metadata.find("adapt_kind");
  const std::string expected(adapt::AdaptKindName(denoiser.config().adapt_kind));
  if (kind != archive.metadata.end() && kind->second != expected) {
    throw ConfigError("checkpoint in " + dir.string() + " uses adapt_kind=" + kind->second +
                      " but the configuration asks for " + expected);
  }
  io::RestoreParameters(FinetunedParameters(), archive);
}

ClipPersona DescribePersona(ModelBundle& models, const nn::Tensor<float>& features) {
  nn::Graph<float> g(false);
  const auto encoding = models.clip.motion.Encode(g, features);
  const auto persona = models.extractor.Extract(g, encoding.frames);
  ClipPersona out;
  out.v_star = persona.v_star.value();
  out.p_star = persona.p_star.value();
  const auto& pooled = encoding.pooled.value();
  out.pooled.assign(pooled.data(), pooled.data() + pooled.size());
  return out;
}

nn::Tensor<float> PlainTextFeature(ModelBundle& models, const data::PromptText& prompt) {
  nn::Graph<float> g(false);
  return models.clip.text.Encode(g, prompt).value();
}

nn::Tensor<float> PersonalizedFeature(ModelBundle& models, const data::PromptText& prompt,
                                      const nn::Tensor<float>& p_star, double s_t) {
  nn::Graph<float> g(false);
  return adapt::PersonalizedTextFeature(g, models.clip.text, models.text_gate, prompt,
                                        nn::Var<float>::Constant(p_star),
                                        static_cast<float>(s_t))
      .value();
}

InputConditioning ConditionOnInputs(ModelBundle& models,
                                    const std::vector<nn::Tensor<float>>& inputs,
                                    const data::PromptText& prompt, FusionMode mode,
                                    const fusion::CafConfig& caf, double s_t) {
  if (inputs.empty()) throw DataError("personalized sampling needs at least one input clip");
  std::vector<nn::Tensor<float>> v_stars, p_stars;
  std::vector<eval::Embedding> pooled;
  for (const auto& features : inputs) {
    auto persona = DescribePersona(models, features);
    v_stars.push_back(std::move(persona.v_star));
    p_stars.push_back(std::move(persona.p_star));
    pooled.push_back(std::move(persona.pooled));
  }
  InputConditioning out;
  if (mode == FusionMode::kCaf) {
    const auto t_bar =
        PersonalizedFeature(models, prompt, fusion::MeanPersonaToken(p_stars), s_t);
    const eval::Embedding t_bar_vec(t_bar.data(), t_bar.data() + t_bar.size());
    for (const auto& e : pooled) out.similarities.push_back(eval::CosineSimilarity(e, t_bar_vec));
    const auto weights = fusion::ComputeWeights(out.similarities, caf);
    out.weights = weights.weights;
    out.selected = weights.selected;
  } else {
    out.weights.assign(inputs.size(), 1.0 / static_cast<double>(inputs.size()));
    for (std::size_t i = 0; i < inputs.size(); ++i) out.selected.push_back(i);
  }
  const auto fused = fusion::Fuse(v_stars, p_stars, out.weights, caf.normalize_over_all);
  out.conditions.v_star = fused.v_star;
  out.conditions.text = PersonalizedFeature(models, prompt, fused.p_star, s_t);
  return out;
}

}  // namespace pbooth::pipeline
