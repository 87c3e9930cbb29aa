#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "pbooth/errors.h"
#include "pbooth/nn/blob_store.h"
#include "pbooth/pipeline/stages.h"
#include "test_support.h"

using namespace pbooth;
using pipeline::RunConfig;
using pipeline::StageOptions;
namespace fs = std::filesystem;
namespace pt = pbooth::testing;

namespace {

RunConfig Tiny() {
  RunConfig c;
  for (const auto& [k, v] : std::vector<std::pair<std::string, std::string>>{
           {"personas", "2"},       {"contents", "2"},         {"takes", "2"},
           {"d_model", "16"},       {"d_clip", "8"},           {"heads", "2"},
           {"ff_width", "24"},      {"denoiser_blocks", "1"},  {"clip_steps", "20"},
           {"diffusion_steps", "5"}, {"pretrain_epochs", "2"}, {"finetune_epochs", "2"},
           {"finetune_batch", "4"}, {"eval_samples", "4"},     {"pool_size", "3"},
           {"diversity_pairs", "10"}, {"pra_epochs", "1"},     {"pra_min_accuracy", "0"},
           {"crop_frames", "32"}}) {
    c.Set(k, v);
  }
  c.pra.d_model = 16;
  c.pra.heads = 2;
  c.pra.blocks = 1;
  c.pra.ff_width = 24;
  return c;
}

void RunAll(const RunConfig& c, const fs::path& ws) {
  const StageOptions o;
  pipeline::GenerateData(c, ws, o);
  pipeline::PretrainClip(c, ws, o);
  pipeline::PretrainDiffusion(c, ws, o);
  pipeline::FinetuneStage(c, ws, o);
  pipeline::EvaluateStage(c, ws, o);
}

}  // namespace

TEST_SUITE("run configuration") {
  TEST_CASE("serialized configs load back to the same hash") {
    RunConfig c = Tiny();
    c.Set("adapt_kind", "adain");
    c.Set("fusion", "mean");
    c.Set("text_persona", "false");
    const fs::path dir = pt::ScratchDir("config");
    io::WriteText(dir / "run.txt", "# comment\n" + c.Serialize());
    RunConfig back;
    back.LoadFile(dir / "run.txt");
    CHECK(back.Serialize() == c.Serialize());
    CHECK(back.Hash() == c.Hash());
    CHECK(back.Hash().size() == 16);
    back.Set("g_t", "9");
    CHECK(back.Hash() != c.Hash());
    for (const auto& key : c.Keys()) CHECK(back.Get(key).size() > 0);
  }

  TEST_CASE("bad keys, values and presets are configuration errors") {
    RunConfig c;
    CHECK_THROWS_AS(c.Set("no_such_key", "1"), ConfigError);
    CHECK_THROWS_AS(c.Set("personas", "many"), ConfigError);
    CHECK_THROWS_AS(c.Set("fusion", "max"), ConfigError);
    CHECK_THROWS_AS(c.ApplyPreset("huge"), ConfigError);
    c.Set("b", "1.5");
    CHECK_THROWS_AS(c.Validate(), ConfigError);
    const fs::path dir = pt::ScratchDir("config-bad");
    io::WriteText(dir / "bad.txt", "personas 3\n");
    CHECK_THROWS_AS(c.LoadFile(dir / "bad.txt"), ConfigError);
  }

  TEST_CASE("presets set the training budget") {
    RunConfig c;
    c.ApplyPreset("full");
    CHECK(c.Get("pretrain_epochs") == "500");
    c.ApplyPreset("desk");
    CHECK(c.Get("pretrain_epochs") == "60");
  }
}

TEST_SUITE("stages") {
  TEST_CASE("stages refuse to run out of order") {
    const auto c = Tiny();
    const fs::path ws = pt::ScratchDir("order");
    const StageOptions o;
    CHECK_THROWS_AS(pipeline::PretrainClip(c, ws, o), StageOrderError);
    pipeline::GenerateData(c, ws, o);
    CHECK_THROWS_AS(pipeline::PretrainDiffusion(c, ws, o), StageOrderError);
    CHECK_THROWS_AS(pipeline::FinetuneStage(c, ws, o), StageOrderError);
    CHECK_THROWS_AS(pipeline::EvaluateStage(c, ws, o), StageOrderError);
  }

  TEST_CASE("existing outputs need an explicit force") {
    const auto c = Tiny();
    const fs::path ws = pt::ScratchDir("force");
    StageOptions o;
    pipeline::GenerateData(c, ws, o);
    CHECK_THROWS_AS(pipeline::GenerateData(c, ws, o), UsageError);
    o.force = true;
    CHECK_NOTHROW(pipeline::GenerateData(c, ws, o));
    CHECK(fs::exists(ws / "data" / "config.txt"));
  }

  TEST_CASE("raw clip files round trip and reject partial frames") {
    nn::Rng rng(1);
    const auto f = pt::RandomMatrix<float>(33, 32, rng);
    const fs::path dir = pt::ScratchDir("clipfile");
    pipeline::WriteClipFile(dir / "a.bin", f);
    CHECK(pipeline::ReadClipFile(dir / "a.bin") == f);
    auto bytes = io::ReadBytes(dir / "a.bin");
    bytes.resize(bytes.size() - 4);
    io::WriteBytes(dir / "b.bin", bytes);
    CHECK_THROWS_AS(pipeline::ReadClipFile(dir / "b.bin"), IntegrityError);
  }

  TEST_CASE("two identical runs write byte-identical results") {
    const auto c = Tiny();
    const fs::path a = pt::ScratchDir("det-a"), b = pt::ScratchDir("det-b");
    RunAll(c, a);
    RunAll(c, b);
    const auto metrics_a = io::ReadText(a / "eval" / "metrics.csv");
    CHECK(metrics_a == io::ReadText(b / "eval" / "metrics.csv"));
    CHECK(metrics_a.find("wall_time_s") != std::string::npos);
    CHECK(io::ReadBytes(a / "finetuned" / "tensors.bin") == io::ReadBytes(b / "finetuned" / "tensors.bin"));

    pipeline::SampleRequest request;
    request.prompt = "a person hops";
    request.inputs = {"0"};
    StageOptions o;
    o.output = "s1";
    const auto s1 = pipeline::SampleStage(c, a, request, o);
    const auto s2 = pipeline::SampleStage(c, b, request, o);
    CHECK(s1.clip == s2.clip);
    CHECK(io::ReadBytes(a / "s1" / "motion.bin") == io::ReadBytes(b / "s1" / "motion.bin"));

    // Multiple inputs fuse with weights on the simplex; a file input works too.
    const auto corpus = data::LoadCorpus(a / "data");
    const auto test = corpus.Indices(data::Split::kTest);
    pipeline::WriteClipFile(a / "input.bin", corpus.clips[test[0]].features);
    request.inputs = {(a / "input.bin").string(), std::to_string(test[1]), std::to_string(test[2])};
    o.output = "s3";
    const auto multi = pipeline::SampleStage(c, a, request, o);
    double sum = 0;
    for (double w : multi.conditioning.weights) sum += w;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(multi.clip.features.rows() == 48);

    // Words outside the vocabulary are rejected.
    request.prompt = "a person juggles";
    o.output = "s4";
    CHECK_THROWS_AS(pipeline::SampleStage(c, a, request, o), VocabularyError);

    // Ablation over a sampling-time axis collects one row per value.
    StageOptions ao;
    const auto rows = pipeline::AblateStage(c, a, "s_t", {"0", "0.3"}, ao);
    CHECK(rows.size() == 2);
    const auto csv = io::ReadText(a / "ablate-s_t" / "ablation.csv");
    CHECK(csv.rfind("axis,value,protocol", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
    CHECK_THROWS_AS(pipeline::AblateStage(c, a, "depth", {"1"}, ao), ConfigError);
  }

  TEST_CASE("diffusion pretraining reduces its loss") {
    auto c = Tiny();
    c.Set("pretrain_epochs", "30");
    const fs::path ws = pt::ScratchDir("learn");
    const StageOptions o;
    pipeline::GenerateData(c, ws, o);
    pipeline::PretrainClip(c, ws, o);
    const auto curve = pipeline::PretrainDiffusion(c, ws, o);
    REQUIRE(curve.size() == 30);
    CHECK(curve.back().loss < 0.5 * curve.front().loss);
  }
}
