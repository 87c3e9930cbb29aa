#include "pbooth/eval/protocol.h"

#include <cstdio>

#include "pbooth/errors.h"
#include "pbooth/nn/parallel.h"

namespace pbooth::eval {

std::string_view SettingName(Setting setting) {
  return setting == Setting::kSingleInput ? "SI" : "MI";
}

Setting SettingFromName(std::string_view name) {
  if (name == "SI" || name == "si") return Setting::kSingleInput;
  if (name == "MI" || name == "mi") return Setting::kMultiInput;
  throw ConfigError("unknown evaluation setting '" + std::string(name) + "' (expected SI or MI)");
}

std::vector<GenerationRequest> DrawRequests(const EvalProtocol& protocol,
                                            const data::Corpus& corpus) {
  nn::Rng rng(protocol.seed);
  const auto test = corpus.Indices(data::Split::kTest);
  if (test.empty()) throw ProtocolError("evaluation needs a non-empty test split");
  const auto personas = corpus.PersonaIds();
  std::vector<GenerationRequest> out;
  for (std::size_t s = 0; s < protocol.samples; ++s) {
    GenerationRequest r;
    if (protocol.setting == Setting::kSingleInput) {
      r.inputs.push_back(test[rng.Index(test.size())]);
      r.persona_id = corpus.clips[r.inputs[0]].persona_id;
    } else {
      r.persona_id = personas[rng.Index(personas.size())];
      auto group = corpus.PersonaGroup(data::Split::kTest, r.persona_id);
      const std::size_t want =
          protocol.inputs == 0 ? group.size() : std::min(protocol.inputs, group.size());
      for (std::size_t k = 0; k < want; ++k) {
        std::swap(group[k], group[k + rng.Index(group.size() - k)]);
      }
      group.resize(want);
      r.inputs = std::move(group);
    }
    r.content_id = static_cast<int>(rng.Index(corpus.spec.contents));
    r.variant = static_cast<int>(rng.Index(data::kVariantsPerContent));
    r.seed = rng.NextU64();
    out.push_back(std::move(r));
  }
  return out;
}

std::string MetricsCsvHeader() {
  return "protocol,seed,config_hash,fid,rprec1,rprec2,rprec3,pra,diversity,wall_time_s";
}

std::string MetricsCsvLine(const MetricsRow& row) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.3f", row.fid,
                row.rprec[0], row.rprec[1], row.rprec[2], row.pra, row.diversity,
                row.wall_time_s);
  return row.protocol + "," + std::to_string(row.seed) + "," + row.config_hash + "," + buf;
}

MetricsRow RunProtocol(const EvalProtocol& protocol, const data::Corpus& corpus,
                       const std::vector<GenerationRequest>& requests,
                       const Generator& generate, const MotionEmbedder& embed_motion,
                       const TextEmbedder& embed_text, PraClassifier& classifier) {
  if (requests.size() < 2) throw ProtocolError("evaluation needs at least 2 samples");
  const std::size_t n = requests.size();
  std::vector<Embedding> generated(n), true_prompts(n);
  std::vector<int> true_groups, intended;
  std::vector<data::MotionClip> clips(n);
  // Each request owns its output slot and random stream.
  nn::ParallelFor(n, protocol.threads, [&](std::size_t i) {
    clips[i] = generate(requests[i]);
    generated[i] = embed_motion(clips[i].features);
    true_prompts[i] = embed_text(data::Describe(requests[i].content_id, requests[i].variant));
  });
  for (const auto& r : requests) {
    true_groups.push_back(r.content_id);
    intended.push_back(r.persona_id);
  }

  std::vector<Embedding> reference;
  for (std::size_t i : corpus.Indices(data::Split::kTest)) {
    const auto& clip = corpus.clips[i];
    const std::size_t len = std::min(protocol.frames, clip.frames());
    reference.push_back(embed_motion(data::Crop(clip, (clip.frames() - len) / 2, len).features));
  }

  std::vector<Embedding> bank;
  std::vector<int> bank_groups;
  for (std::size_t c = 0; c < corpus.spec.contents; ++c) {
    for (std::size_t v = 0; v < data::kVariantsPerContent; ++v) {
      bank.push_back(embed_text(data::Describe(static_cast<int>(c), static_cast<int>(v))));
      bank_groups.push_back(static_cast<int>(c));
    }
  }

  nn::Rng rng(nn::Rng::Mix(protocol.seed ^ 0x5eedULL));
  MetricsRow row;
  row.protocol = std::string(SettingName(protocol.setting));
  row.seed = protocol.seed;
  row.fid = Fid(FeatureStats::Compute(generated), FeatureStats::Compute(reference));
  const auto ranks = RetrievalRanks(generated, true_prompts, true_groups, bank, bank_groups,
                                    protocol.pool_size, rng);
  for (std::size_t n = 0; n < 3; ++n) row.rprec[n] = RPrecision(ranks, n + 1);
  row.diversity = Diversity(generated, protocol.diversity_pairs, rng);
  row.pra = PraScore(classifier, clips, intended);
  return row;
}

}  // namespace pbooth::eval
