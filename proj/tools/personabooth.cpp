// Command-line driver for the PersonaBooth pipeline stages.

#include <cstdio>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pbooth/data/corpus.h"
#include "pbooth/errors.h"
#include "pbooth/pipeline/stages.h"

namespace {

using pbooth::pipeline::RunConfig;
using pbooth::pipeline::StageOptions;

struct CommonFlags {
  std::string workspace = "run";
  std::string preset;
  std::string config_file;
  std::vector<std::string> overrides;
  std::string output;
  std::string finetuned;
  bool force = false;
  bool quiet = false;
};

// Convenience flags that are plain aliases of config keys. Their values are
// applied after the config file and before --set.
using Aliases = std::map<std::string, std::string>;

void AddCommon(CLI::App* cmd, CommonFlags& flags, bool produces_output = true) {
  cmd->add_option("-w,--workspace", flags.workspace, "Run directory holding all stage outputs")
      ->capture_default_str();
  cmd->add_option("--preset", flags.preset, "Hyperparameter preset: desk or full");
  cmd->add_option("-c,--config", flags.config_file, "key=value config file");
  cmd->add_option("--set", flags.overrides, "Override one config key (key=value); repeatable");
  if (produces_output) {
    cmd->add_flag("-f,--force", flags.force, "Replace an existing output directory");
    cmd->add_option("-o,--output", flags.output, "Output directory name inside the workspace");
  }
  cmd->add_flag("-q,--quiet", flags.quiet, "Suppress progress messages");
}

void AddAlias(CLI::App* cmd, Aliases& aliases, const std::string& flag, const std::string& key,
              const std::string& help) {
  cmd->add_option_function<std::string>(
      "--" + flag, [&aliases, key](const std::string& v) { aliases[key] = v; }, help);
}

RunConfig Resolve(const CommonFlags& flags, const Aliases& aliases) {
  RunConfig config;
  if (!flags.preset.empty()) config.ApplyPreset(flags.preset);
  if (!flags.config_file.empty()) config.LoadFile(flags.config_file);
  for (const auto& [key, value] : aliases) config.Set(key, value);
  for (const auto& item : flags.overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw pbooth::UsageError("--set expects key=value, got '" + item + "'");
    }
    config.Set(item.substr(0, eq), item.substr(eq + 1));
  }
  config.Validate();
  return config;
}

StageOptions Options(const CommonFlags& flags) {
  StageOptions options;
  options.force = flags.force;
  options.output = flags.output;
  if (!flags.finetuned.empty()) options.finetuned = flags.finetuned;
  if (!flags.quiet) {
    options.log = [](const std::string& message) { std::cerr << message << "\n"; };
  }
  return options;
}

void PrintMetrics(const pbooth::eval::MetricsRow& row) {
  std::cout << pbooth::eval::MetricsCsvHeader() << "\n"
            << pbooth::eval::MetricsCsvLine(row) << "\n";
}

// Reloads the corpus, checks every checksum and compares it with a fresh
// regeneration from its own manifest.
int LoadCommand(const CommonFlags& flags) {
  namespace data = pbooth::data;
  const auto dir = std::filesystem::path(flags.workspace) / pbooth::pipeline::kDataDir;
  if (!std::filesystem::exists(dir / "manifest.json")) {
    throw pbooth::StageOrderError("no corpus at " + dir.string() + "; run 'gen-data' first");
  }
  const data::Corpus corpus = data::LoadCorpus(dir);
  const data::Corpus regenerated = data::GenerateCorpus(corpus.spec);
  const bool same = regenerated.clips == corpus.clips && regenerated.splits == corpus.splits;
  std::cout << "corpus " << dir.string() << "\n"
            << "  personas " << corpus.personas.size() << ", contents " << corpus.spec.contents
            << ", clips " << corpus.clips.size() << "\n";
  for (auto split : {data::Split::kPretrain, data::Split::kFinetune, data::Split::kTest}) {
    std::cout << "  " << data::SplitName(split) << ": " << corpus.Indices(split).size()
              << " clips\n";
  }
  std::cout << "  regeneration " << (same ? "matches" : "DIFFERS") << "\n";
  return same ? 0 : 4;
}

int ExitCode(const std::exception& e) {
  if (dynamic_cast<const pbooth::StageOrderError*>(&e)) return 3;
  if (dynamic_cast<const pbooth::UsageError*>(&e) || dynamic_cast<const pbooth::ConfigError*>(&e) ||
      dynamic_cast<const pbooth::VocabularyError*>(&e)) {
    return 2;
  }
  if (dynamic_cast<const pbooth::IntegrityError*>(&e) || dynamic_cast<const pbooth::DataError*>(&e)) {
    return 4;
  }
  if (dynamic_cast<const pbooth::NumericError*>(&e) ||
      dynamic_cast<const pbooth::ProtocolError*>(&e)) {
    return 5;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale persona-conditioned motion generation"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  CommonFlags flags;
  Aliases aliases;

  auto* gen = app.add_subcommand("gen-data", "Synthesize the motion corpus");
  AddCommon(gen, flags);
  AddAlias(gen, aliases, "personas", "personas", "Number of personas");
  AddAlias(gen, aliases, "contents", "contents", "Number of contents (1-6)");
  AddAlias(gen, aliases, "takes", "takes", "Finetune takes per persona and content");
  AddAlias(gen, aliases, "seed", "corpus_seed", "Corpus seed");

  auto* load = app.add_subcommand("load", "Verify and summarize a generated corpus");
  AddCommon(load, flags, false);

  auto* clip = app.add_subcommand("pretrain-clip", "Train the text/motion contrastive encoders");
  AddCommon(clip, flags);
  AddAlias(clip, aliases, "seed", "seed", "Master seed");
  AddAlias(clip, aliases, "steps", "clip_steps", "Optimizer steps");

  auto* pre = app.add_subcommand("pretrain-diffusion", "Pretrain the text-conditioned denoiser");
  AddCommon(pre, flags);
  AddAlias(pre, aliases, "seed", "seed", "Master seed");
  AddAlias(pre, aliases, "epochs", "pretrain_epochs", "Training epochs");

  auto* fine = app.add_subcommand("finetune", "Train persona extractor, persona token and adapters");
  AddCommon(fine, flags);
  AddAlias(fine, aliases, "seed", "seed", "Master seed");
  AddAlias(fine, aliases, "epochs", "finetune_epochs", "Training epochs");
  AddAlias(fine, aliases, "lambda", "lambda", "Persona cohesion loss weight");
  AddAlias(fine, aliases, "adapt-kind", "adapt_kind",
           "Adapter: self-attention, cross-attention or adain");

  pbooth::pipeline::SampleRequest request;
  auto* sample = app.add_subcommand("sample", "Generate one motion");
  AddCommon(sample, flags);
  sample->add_option("--prompt", request.prompt, "Text prompt")->required();
  sample->add_option("--inputs", request.inputs,
                     "Persona inputs: corpus clip indices or raw clip files")
      ->delimiter(',');
  sample->add_option("--frames", request.frames, "Frames to generate")->capture_default_str();
  sample->add_option("--finetuned", flags.finetuned, "Finetuned checkpoint directory");
  AddAlias(sample, aliases, "seed", "seed", "Master seed");
  AddAlias(sample, aliases, "k", "k", "Fusion top-k");
  AddAlias(sample, aliases, "fusion", "fusion", "Fusion mode: caf or mean");

  auto* eval = app.add_subcommand("eval", "Run an evaluation protocol and write metrics.csv");
  AddCommon(eval, flags);
  eval->add_option("--finetuned", flags.finetuned, "Finetuned checkpoint directory");
  AddAlias(eval, aliases, "seed", "seed", "Master seed");
  AddAlias(eval, aliases, "setting", "setting", "SI or MI");
  AddAlias(eval, aliases, "mode", "eval_mode", "persona or baseline");

  std::string axis;
  std::vector<std::string> values;
  auto* ablate = app.add_subcommand("ablate", "Sweep one hyperparameter and collect metrics");
  AddCommon(ablate, flags);
  ablate->add_option("--axis", axis, "s_t, s_v, g_t, g_v, b, k, lambda or adapt_kind")->required();
  ablate->add_option("--values", values, "Comma-separated values")->required()->delimiter(',');
  AddAlias(ablate, aliases, "seed", "seed", "Master seed");
  AddAlias(ablate, aliases, "setting", "setting", "SI or MI");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Help output keeps CLI11's success code; every parse failure is a usage error.
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  namespace pl = pbooth::pipeline;
  try {
    if (load->parsed()) return LoadCommand(flags);
    const RunConfig config = Resolve(flags, aliases);
    const StageOptions options = Options(flags);
    const std::filesystem::path ws = flags.workspace;
    if (gen->parsed()) {
      pl::GenerateData(config, ws, options);
    } else if (clip->parsed()) {
      const auto result = pl::PretrainClip(config, ws, options);
      std::cout << "heldout_recall_at_1," << result.recall_at_1 << "\n";
    } else if (pre->parsed()) {
      pl::PretrainDiffusion(config, ws, options);
    } else if (fine->parsed()) {
      pl::FinetuneStage(config, ws, options);
    } else if (sample->parsed()) {
      const auto outcome = pl::SampleStage(config, ws, request, options);
      const auto& w = outcome.conditioning.weights;
      if (!w.empty()) {
        std::cout << "fusion weights:";
        for (double v : w) std::printf(" %.4f", v);
        std::printf("  (sum %.6f)\n", std::accumulate(w.begin(), w.end(), 0.0));
      }
      std::cout << "wrote " << (outcome.directory / "motion.bin").string() << " ("
                << outcome.clip.frames() << " frames)\n";
    } else if (eval->parsed()) {
      PrintMetrics(pl::EvaluateStage(config, ws, options));
    } else if (ablate->parsed()) {
      for (const auto& row : pl::AblateStage(config, ws, axis, values, options)) {
        std::cout << pbooth::eval::MetricsCsvLine(row) << "\n";
      }
    }
  } catch (const pbooth::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return ExitCode(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
