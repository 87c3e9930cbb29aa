#include "pbooth/data/corpus.h"

#include <cstdio>

#include "json.hpp"
#include "pbooth/data/text.h"
#include "pbooth/errors.h"
#include "pbooth/nn/blob_store.h"
#include "pbooth/nn/random.h"

namespace pbooth::data {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view SplitName(Split split) {
  switch (split) {
    case Split::kPretrain:
      return "pretrain";
    case Split::kFinetune:
      return "finetune";
    case Split::kTest:
      return "test";
  }
  return "?";
}

Split SplitFromName(std::string_view name) {
  for (Split s : {Split::kPretrain, Split::kFinetune, Split::kTest}) {
    if (SplitName(s) == name) return s;
  }
  throw IntegrityError("unknown split '" + std::string(name) + "'");
}

void CorpusSpec::Validate() const {
  if (personas < 1 || contents < 1 || contents > kContentCount) {
    throw ConfigError("corpus needs >= 1 persona and 1..6 contents");
  }
  if (takes < 1 || heldout_takes < 1 || pretrain_takes < 1) {
    throw ConfigError("corpus take counts must be >= 1");
  }
  if (frames < kMinFrames || frames > kMaxFrames) {
    throw ConfigError("corpus frames must lie in [32, 64]");
  }
}

std::uint64_t TakeSeed(std::uint64_t corpus_seed, int persona_id,
                       int content_id, std::size_t take) {
  std::uint64_t h = nn::Rng::Mix(corpus_seed);
  h = nn::Rng::Mix(h ^ static_cast<std::uint64_t>(persona_id + 1));
  h = nn::Rng::Mix(h ^ (static_cast<std::uint64_t>(content_id + 1) << 20));
  return nn::Rng::Mix(h ^ (static_cast<std::uint64_t>(take + 1) << 40));
}

std::vector<std::size_t> Corpus::Indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    if (splits[i] == split) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> Corpus::PersonaGroup(Split split, int persona_id) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    if (splits[i] == split && clips[i].persona_id == persona_id) out.push_back(i);
  }
  return out;
}

std::vector<int> Corpus::PersonaIds() const {
  std::vector<int> ids;
  for (const auto& p : personas) ids.push_back(p.persona_id);
  return ids;
}

namespace {

void AddTake(Corpus& corpus, const PersonaParams& persona, int content,
             std::size_t take, Split split) {
  MotionClip clip = SynthesizeClip(
      persona, content, corpus.spec.frames,
      TakeSeed(corpus.spec.corpus_seed, persona.persona_id, content, take));
  clip.description_variant = static_cast<int>(take % kVariantsPerContent);
  if (corpus.spec.flip_augment) {
    MotionClip mirrored = FlipLR(clip);
    corpus.clips.push_back(std::move(clip));
    corpus.splits.push_back(split);
    corpus.clips.push_back(std::move(mirrored));
    corpus.splits.push_back(split);
  } else {
    corpus.clips.push_back(std::move(clip));
    corpus.splits.push_back(split);
  }
}

json SpecToJson(const CorpusSpec& s) {
  return {{"corpus_seed", std::to_string(s.corpus_seed)},
          {"personas", s.personas},
          {"contents", s.contents},
          {"takes", s.takes},
          {"heldout_takes", s.heldout_takes},
          {"pretrain_takes", s.pretrain_takes},
          {"flip_augment", s.flip_augment},
          {"frames", s.frames},
          {"separation_margin", s.separation_margin}};
}

CorpusSpec SpecFromJson(const json& j) {
  CorpusSpec s;
  s.corpus_seed = std::stoull(j.at("corpus_seed").get<std::string>());
  s.personas = j.at("personas").get<std::size_t>();
  s.contents = j.at("contents").get<std::size_t>();
  s.takes = j.at("takes").get<std::size_t>();
  s.heldout_takes = j.at("heldout_takes").get<std::size_t>();
  s.pretrain_takes = j.at("pretrain_takes").get<std::size_t>();
  s.flip_augment = j.at("flip_augment").get<bool>();
  s.frames = j.at("frames").get<std::size_t>();
  s.separation_margin = j.at("separation_margin").get<double>();
  return s;
}

std::string ClipFileName(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "clips/%06zu.bin", index);
  return buf;
}

}  // namespace

Corpus GenerateCorpus(const CorpusSpec& spec) {
  spec.Validate();
  Corpus corpus;
  corpus.spec = spec;
  const PersonaParams neutral = PersonaParams::Neutral();
  for (std::size_t c = 0; c < spec.contents; ++c) {
    for (std::size_t t = 0; t < spec.pretrain_takes; ++t) {
      AddTake(corpus, neutral, static_cast<int>(c), t, Split::kPretrain);
    }
  }
  for (std::size_t p = 1; p <= spec.personas; ++p) {
    corpus.personas.push_back(MakePersona(spec.corpus_seed, static_cast<int>(p),
                                          spec.separation_margin));
  }
  for (const auto& persona : corpus.personas) {
    for (std::size_t c = 0; c < spec.contents; ++c) {
      for (std::size_t t = 0; t < spec.takes + spec.heldout_takes; ++t) {
        AddTake(corpus, persona, static_cast<int>(c), t,
                t < spec.takes ? Split::kFinetune : Split::kTest);
      }
    }
  }
  return corpus;
}

void SaveCorpus(const Corpus& corpus, const fs::path& dir) {
  fs::create_directories(dir / "clips");
  json manifest;
  manifest["format"] = "pbooth-motion-corpus";
  manifest["version"] = 1;
  manifest["spec"] = SpecToJson(corpus.spec);
  manifest["channels"] = kChannels;
  manifest["frame_rate"] = kFrameRate;
  manifest["channel_layout"] = {
      {"root_position", {0, 1, 2}},
      {"root_velocity", {3, 4, 5}},
      {"torso", {6, 7, 8, 9}},
      {"limb_pairs_first", channel::kShoulderPitchL},
      {"contacts", {channel::kContactL, channel::kContactR}},
      {"mirror", ChannelLayout::Default().Describe()}};
  json personas = json::array();
  for (const auto& p : corpus.personas) {
    personas.push_back({{"persona_id", p.persona_id},
                        {"amplitude_scale", p.amplitude_scale},
                        {"frequency_scale", p.frequency_scale},
                        {"lean", p.lean},
                        {"arm_bias", p.arm_bias},
                        {"tempo_jitter", p.tempo_jitter}});
  }
  manifest["personas"] = personas;
  json clips = json::array();
  std::vector<std::string> files;
  for (std::size_t i = 0; i < corpus.clips.size(); ++i) {
    const auto& c = corpus.clips[i];
    const std::string file = ClipFileName(i);
    io::WriteBytes(dir / file, io::EncodeFloats(c.features.values()));
    files.push_back(file);
    clips.push_back({{"file", file},
                     {"frames", c.frames()},
                     {"persona_id", c.persona_id},
                     {"content_id", c.content_id},
                     {"take_seed", std::to_string(c.take_seed)},
                     {"description_variant", c.description_variant},
                     {"flipped", c.flipped},
                     {"split", SplitName(corpus.splits[i])}});
  }
  manifest["clips"] = clips;
  io::WriteText(dir / "manifest.json", manifest.dump(1) + "\n");
  files.insert(files.begin(), "manifest.json");
  io::WriteChecksums(dir, files);
}

Corpus LoadCorpus(const fs::path& dir) {
  io::VerifyChecksums(dir);
  json manifest;
  try {
    manifest = json::parse(io::ReadText(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw IntegrityError("unreadable corpus manifest: " + std::string(e.what()));
  }
  if (manifest.value("format", "") != "pbooth-motion-corpus") {
    throw IntegrityError(dir.string() + " is not a motion corpus");
  }
  if (manifest.at("channels").get<std::size_t>() != kChannels) {
    throw IntegrityError("corpus channel count disagrees with this build");
  }
  Corpus corpus;
  try {
    corpus.spec = SpecFromJson(manifest.at("spec"));
    for (const auto& p : manifest.at("personas")) {
      PersonaParams params;
      params.persona_id = p.at("persona_id").get<int>();
      params.amplitude_scale = p.at("amplitude_scale").get<double>();
      params.frequency_scale = p.at("frequency_scale").get<double>();
      params.lean = p.at("lean").get<double>();
      params.arm_bias = p.at("arm_bias").get<double>();
      params.tempo_jitter = p.at("tempo_jitter").get<double>();
      corpus.personas.push_back(params);
    }
    for (const auto& c : manifest.at("clips")) {
      MotionClip clip;
      const auto frames = c.at("frames").get<std::size_t>();
      const auto values = io::DecodeFloats(
          io::ReadBytes(dir / c.at("file").get<std::string>()));
      if (values.size() != frames * kChannels) {
        throw IntegrityError("clip " + c.at("file").get<std::string>() + " holds " +
                             std::to_string(values.size()) + " floats, manifest says " +
                             std::to_string(frames * kChannels));
      }
      clip.features = nn::Tensor<float>({frames, kChannels}, values);
      clip.persona_id = c.at("persona_id").get<int>();
      clip.content_id = c.at("content_id").get<int>();
      clip.take_seed = std::stoull(c.at("take_seed").get<std::string>());
      clip.description_variant = c.at("description_variant").get<int>();
      clip.flipped = c.at("flipped").get<bool>();
      corpus.clips.push_back(std::move(clip));
      corpus.splits.push_back(SplitFromName(c.at("split").get<std::string>()));
    }
  } catch (const json::exception& e) {
    throw IntegrityError("corpus manifest is inconsistent: " + std::string(e.what()));
  }
  if (corpus.personas.size() != corpus.spec.personas) {
    throw IntegrityError("manifest persona list disagrees with its spec");
  }
  return corpus;
}

}  // namespace pbooth::data
