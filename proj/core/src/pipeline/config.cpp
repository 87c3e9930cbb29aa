#include "pbooth/pipeline/config.h"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "pbooth/errors.h"

namespace pbooth::pipeline {
namespace {

std::string FormatDouble(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

template <typename T>
T ParseNumber(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, value);
  if (res.ec != std::errc() || res.ptr != end) {
    throw ConfigError("cannot parse '" + text + "' for key '" + key + "'");
  }
  return value;
}

bool ParseBool(const std::string& key, const std::string& text) {
  if (text == "1" || text == "true" || text == "yes" || text == "on") return true;
  if (text == "0" || text == "false" || text == "no" || text == "off") return false;
  throw ConfigError("cannot parse '" + text + "' as a boolean for key '" + key + "'");
}

struct Entry {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <typename Access>
Entry Size(std::string key, Access access) {
  return {key,
          [access](const RunConfig& c) {
            return std::to_string(access(const_cast<RunConfig&>(c)));
          },
          [access, key](RunConfig& c, const std::string& v) {
            access(c) = ParseNumber<std::size_t>(key, v);
          }};
}

template <typename Access>
Entry U64(std::string key, Access access) {
  return {key,
          [access](const RunConfig& c) {
            return std::to_string(access(const_cast<RunConfig&>(c)));
          },
          [access, key](RunConfig& c, const std::string& v) {
            access(c) = ParseNumber<std::uint64_t>(key, v);
          }};
}

template <typename Access>
Entry Real(std::string key, Access access) {
  return {key,
          [access](const RunConfig& c) { return FormatDouble(access(const_cast<RunConfig&>(c))); },
          [access, key](RunConfig& c, const std::string& v) {
            access(c) = ParseNumber<double>(key, v);
          }};
}

template <typename Access>
Entry Flag(std::string key, Access access) {
  return {key,
          [access](const RunConfig& c) {
            return std::string(access(const_cast<RunConfig&>(c)) ? "true" : "false");
          },
          [access, key](RunConfig& c, const std::string& v) { access(c) = ParseBool(key, v); }};
}

#define PB_FIELD(expr) [](RunConfig& c) -> auto& { return c.expr; }

const std::vector<Entry>& Entries() {
  static const std::vector<Entry> entries = [] {
    std::vector<Entry> e;
    e.push_back(U64("seed", PB_FIELD(seed)));
    e.push_back(U64("corpus_seed", PB_FIELD(corpus.corpus_seed)));
    e.push_back(Size("personas", PB_FIELD(corpus.personas)));
    e.push_back(Size("contents", PB_FIELD(corpus.contents)));
    e.push_back(Size("takes", PB_FIELD(corpus.takes)));
    e.push_back(Size("heldout_takes", PB_FIELD(corpus.heldout_takes)));
    e.push_back(Size("pretrain_takes", PB_FIELD(corpus.pretrain_takes)));
    e.push_back(Flag("flip_augment", PB_FIELD(corpus.flip_augment)));
    e.push_back(Size("frames", PB_FIELD(corpus.frames)));
    e.push_back(Real("separation_margin", PB_FIELD(corpus.separation_margin)));

    e.push_back(Size("d_model", PB_FIELD(d_model)));
    e.push_back(Size("d_clip", PB_FIELD(d_clip)));
    e.push_back(Size("heads", PB_FIELD(heads)));
    e.push_back(Size("ff_width", PB_FIELD(ff_width)));
    e.push_back(Size("denoiser_blocks", PB_FIELD(denoiser_blocks)));
    e.push_back({"adapt_kind",
                 [](const RunConfig& c) { return std::string(adapt::AdaptKindName(c.adapt_kind)); },
                 [](RunConfig& c, const std::string& v) { c.adapt_kind = adapt::AdaptKindFromName(v); }});

    e.push_back(Size("clip_steps", PB_FIELD(clip_train.steps)));
    e.push_back(Real("clip_lr", PB_FIELD(clip_train.learning_rate)));
    e.push_back(Real("clip_temperature", PB_FIELD(clip_train.temperature)));
    e.push_back(Size("clip_eval_takes", PB_FIELD(clip_train.eval_takes)));

    e.push_back(Size("diffusion_steps", PB_FIELD(diffusion_steps)));
    e.push_back({"schedule",
                 [](const RunConfig& c) { return std::string(diffusion::ScheduleKindName(c.schedule)); },
                 [](RunConfig& c, const std::string& v) { c.schedule = diffusion::ScheduleKindFromName(v); }});

    e.push_back(Size("pretrain_epochs", PB_FIELD(pretrain.epochs)));
    e.push_back(Size("pretrain_batch", PB_FIELD(pretrain.batch)));
    e.push_back(Real("pretrain_lr", PB_FIELD(pretrain.learning_rate)));
    e.push_back(Real("pretrain_text_drop", PB_FIELD(pretrain.text_drop)));
    e.push_back(Size("finetune_epochs", PB_FIELD(finetune.epochs)));
    e.push_back(Size("finetune_batch", PB_FIELD(finetune.batch)));
    e.push_back(Real("finetune_lr", PB_FIELD(finetune.learning_rate)));
    e.push_back(Real("lambda", PB_FIELD(finetune.lambda_pc)));
    e.push_back(Real("temperature", PB_FIELD(finetune.temperature)));
    e.push_back(Real("text_drop", PB_FIELD(finetune.text_drop)));
    e.push_back(Real("visual_drop", PB_FIELD(finetune.visual_drop)));
    e.push_back(Flag("text_persona", PB_FIELD(finetune.text_persona)));
    e.push_back(Real("train_s_t", PB_FIELD(finetune.s_t)));
    e.push_back(Real("train_s_v", PB_FIELD(finetune.s_v)));
    // Shared by both diffusion training stages.
    e.push_back({"lambda_geo", [](const RunConfig& c) { return FormatDouble(c.pretrain.lambda_geo); },
                 [](RunConfig& c, const std::string& v) {
                   c.pretrain.lambda_geo = c.finetune.lambda_geo = ParseNumber<double>("lambda_geo", v);
                 }});
    e.push_back({"weight_decay", [](const RunConfig& c) { return FormatDouble(c.pretrain.weight_decay); },
                 [](RunConfig& c, const std::string& v) {
                   c.pretrain.weight_decay = c.finetune.weight_decay =
                       ParseNumber<double>("weight_decay", v);
                 }});
    e.push_back({"crop_frames", [](const RunConfig& c) { return std::to_string(c.pretrain.crop_frames); },
                 [](RunConfig& c, const std::string& v) {
                   c.pretrain.crop_frames = c.finetune.crop_frames = c.protocol.frames =
                       ParseNumber<std::size_t>("crop_frames", v);
                 }});

    e.push_back(Real("g_t", PB_FIELD(guidance.g_t)));
    e.push_back(Real("g_v", PB_FIELD(guidance.g_v)));
    e.push_back(Real("b", PB_FIELD(guidance.b)));
    e.push_back(Real("b_multi", PB_FIELD(b_multi)));
    e.push_back(Real("s_t", PB_FIELD(guidance.s_t)));
    e.push_back(Real("s_v", PB_FIELD(guidance.s_v)));
    e.push_back(Size("k", PB_FIELD(caf.k)));
    e.push_back(Flag("caf_normalize_over_all", PB_FIELD(caf.normalize_over_all)));
    e.push_back({"fusion",
                 [](const RunConfig& c) { return std::string(c.fusion == FusionMode::kCaf ? "caf" : "mean"); },
                 [](RunConfig& c, const std::string& v) {
                   if (v == "caf") c.fusion = FusionMode::kCaf;
                   else if (v == "mean") c.fusion = FusionMode::kMean;
                   else throw ConfigError("fusion must be caf or mean, got '" + v + "'");
                 }});

    e.push_back({"setting",
                 [](const RunConfig& c) { return std::string(eval::SettingName(c.protocol.setting)); },
                 [](RunConfig& c, const std::string& v) { c.protocol.setting = eval::SettingFromName(v); }});
    e.push_back(Size("mi_inputs", PB_FIELD(protocol.inputs)));
    e.push_back(Size("eval_samples", PB_FIELD(protocol.samples)));
    e.push_back(Size("pool_size", PB_FIELD(protocol.pool_size)));
    e.push_back(Size("diversity_pairs", PB_FIELD(protocol.diversity_pairs)));
    e.push_back({"eval_mode",
                 [](const RunConfig& c) {
                   return std::string(c.eval_mode == EvalMode::kPersona ? "persona" : "baseline");
                 },
                 [](RunConfig& c, const std::string& v) {
                   if (v == "persona") c.eval_mode = EvalMode::kPersona;
                   else if (v == "baseline") c.eval_mode = EvalMode::kBaseline;
                   else throw ConfigError("eval_mode must be persona or baseline, got '" + v + "'");
                 }});
    e.push_back(Size("pra_epochs", PB_FIELD(pra.epochs)));
    e.push_back(Real("pra_min_accuracy", PB_FIELD(pra.min_validation_accuracy)));
    e.push_back(Flag("record_wall_time", PB_FIELD(record_wall_time)));
    return e;
  }();
  return entries;
}

#undef PB_FIELD

const Entry& Find(const std::string& key) {
  for (const auto& e : Entries()) {
    if (e.key == key) return e;
  }
  throw ConfigError("unknown configuration key '" + key + "'");
}

std::string Trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

RunConfig::RunConfig() { ApplyPreset("desk"); }

void RunConfig::Set(const std::string& key, const std::string& value) {
  if (key == "preset") {
    ApplyPreset(value);
    return;
  }
  Find(key).set(*this, value);
}

std::string RunConfig::Get(const std::string& key) const { return Find(key).get(*this); }

std::vector<std::string> RunConfig::Keys() const {
  std::vector<std::string> keys;
  for (const auto& e : Entries()) keys.push_back(e.key);
  return keys;
}

void RunConfig::ApplyPreset(const std::string& name) {
  if (name == "desk") {
    pretrain.epochs = 60;
    finetune.epochs = 40;
    pretrain.batch = finetune.batch = 16;
    pretrain.learning_rate = finetune.learning_rate = 1e-3;
  } else if (name == "full") {
    pretrain.epochs = finetune.epochs = 500;
    pretrain.batch = finetune.batch = 64;
    pretrain.learning_rate = finetune.learning_rate = 1e-4;
  } else {
    throw ConfigError("unknown preset '" + name + "' (expected desk or full)");
  }
}

void RunConfig::LoadFile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = Trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(number) + ": expected key=value");
    }
    Set(Trim(line.substr(0, eq)), Trim(line.substr(eq + 1)));
  }
}

std::string RunConfig::Serialize() const {
  std::ostringstream out;
  for (const auto& e : Entries()) out << e.key << "=" << e.get(*this) << "\n";
  return out.str();
}

std::string RunConfig::Hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : Serialize()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void RunConfig::Validate() const {
  corpus.Validate();
  if (d_model % heads != 0) throw ConfigError("d_model must be divisible by heads");
  if (diffusion_steps < 2) throw ConfigError("diffusion_steps must be >= 2");
  pretrain.Validate();
  finetune.Validate();
  guidance.Validate();
  if (b_multi < 0.0 || b_multi > 1.0) throw ConfigError("b_multi must lie in [0, 1]");
  caf.Validate();
  if (protocol.samples < 2) throw ConfigError("eval_samples must be >= 2");
  if (clip_train.steps == 0) throw ConfigError("clip_steps must be >= 1");
}

clip::ClipConfig RunConfig::ClipModelConfig() const {
  clip::ClipConfig c;
  c.d_model = d_model;
  c.d_text = d_model;
  c.d_clip = d_clip;
  c.heads = heads;
  c.ff_width = ff_width;
  return c;
}

persona::PersonaConfig RunConfig::PersonaModelConfig() const {
  persona::PersonaConfig c;
  c.d_model = d_model;
  c.d_text = d_model;
  c.heads = heads;
  c.ff_width = ff_width;
  c.temperature = finetune.temperature;
  return c;
}

diffusion::DenoiserConfig RunConfig::DenoiserModelConfig() const {
  diffusion::DenoiserConfig c;
  c.d_model = d_model;
  c.d_clip = d_clip;
  c.heads = heads;
  c.blocks = denoiser_blocks;
  c.ff_width = ff_width;
  c.adapt_kind = adapt_kind;
  return c;
}

diffusion::DiffusionSchedule RunConfig::Schedule() const {
  return diffusion::DiffusionSchedule::Make(diffusion_steps, schedule);
}

}  // namespace pbooth::pipeline
