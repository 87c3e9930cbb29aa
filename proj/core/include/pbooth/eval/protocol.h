#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "pbooth/data/corpus.h"
#include "pbooth/data/text.h"
#include "pbooth/eval/metrics.h"
#include "pbooth/eval/pra.h"

namespace pbooth::eval {

enum class Setting { kSingleInput, kMultiInput };

std::string_view SettingName(Setting setting);  // "SI" / "MI"
Setting SettingFromName(std::string_view name);

struct EvalProtocol {
  Setting setting = Setting::kSingleInput;
  std::size_t inputs = 0;  // MI clips per request; 0 takes the whole persona group
  std::size_t samples = 48;
  std::size_t pool_size = 32;
  std::size_t diversity_pairs = 300;
  std::size_t frames = 48;
  std::uint64_t seed = 1;
  // Worker threads for generation; results do not depend on it.
  std::size_t threads = 1;
};

struct GenerationRequest {
  std::vector<std::size_t> inputs;  // corpus clip indices
  int persona_id = 0;
  int content_id = 0;
  int variant = 0;
  std::uint64_t seed = 0;
};

// SI draws one test clip uniformly; MI draws a persona first, then clips from
// its test group without replacement. Prompt content and variant are uniform.
std::vector<GenerationRequest> DrawRequests(const EvalProtocol& protocol,
                                            const data::Corpus& corpus);

using Generator = std::function<data::MotionClip(const GenerationRequest&)>;
using MotionEmbedder = std::function<Embedding(const nn::Tensor<float>&)>;
using TextEmbedder = std::function<Embedding(const data::PromptText&)>;

struct MetricsRow {
  std::string protocol;
  std::uint64_t seed = 0;
  std::string config_hash;
  double fid = 0.0;
  double rprec[3] = {0.0, 0.0, 0.0};
  double pra = 0.0;
  double diversity = 0.0;
  double wall_time_s = 0.0;
};

std::string MetricsCsvHeader();
std::string MetricsCsvLine(const MetricsRow& row);

// Generates one clip per request and scores the batch: FID against center
// crops of all test-split clips, R-precision of each clip against its plain
// prompt with distractors from other contents, diversity, and PRA.
MetricsRow RunProtocol(const EvalProtocol& protocol, const data::Corpus& corpus,
                       const std::vector<GenerationRequest>& requests,
                       const Generator& generate, const MotionEmbedder& embed_motion,
                       const TextEmbedder& embed_text, PraClassifier& classifier);

}  // namespace pbooth::eval
