#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "doctest.h"
#include "pbooth/nn/blob_store.h"
#include "test_support.h"

namespace fs = std::filesystem;
namespace pt = pbooth::testing;

namespace {

// Small networks and budgets so the whole chain runs in seconds.
const char* kTiny =
    " --set d_model=16 --set d_clip=8 --set heads=2 --set ff_width=24"
    " --set denoiser_blocks=1 --set clip_steps=20 --set diffusion_steps=5"
    " --set pretrain_epochs=1 --set finetune_epochs=1 --set finetune_batch=4"
    " --set eval_samples=4 --set pool_size=3 --set diversity_pairs=10"
    " --set pra_epochs=1 --set pra_min_accuracy=0 --set crop_frames=32";

int Run(const fs::path& ws, const std::string& args, bool tiny = true) {
  const std::string cmd = std::string(PBOOTH_CLI) + " " + args + " -q -w " + ws.string() +
                          (tiny ? kTiny : "") + " > " + (ws.parent_path() / "cli.log").string() +
                          " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string Log(const fs::path& ws) { return pbooth::io::ReadText(ws.parent_path() / "cli.log"); }

}  // namespace

TEST_CASE("usage mistakes exit with 2") {
  const fs::path ws = pt::ScratchDir("cli-usage") / "run";
  CHECK(Run(ws, "", false) == 2);
  CHECK(Run(ws, "gen-data --set nope=1") == 2);
  CHECK(Run(ws, "sample") == 2);
}

TEST_CASE("stage order violations exit with 3 and name the missing stage") {
  const fs::path ws = pt::ScratchDir("cli-order") / "run";
  CHECK(Run(ws, "load") == 3);
  CHECK(Run(ws, "pretrain-clip") == 3);
  CHECK(Log(ws).find("gen-data") != std::string::npos);
}

TEST_CASE("gen-data then load round-trips; tampering exits with 4") {
  const fs::path ws = pt::ScratchDir("cli-data") / "run";
  CHECK(Run(ws, "gen-data --personas 4 --contents 6 --takes 4 --seed 7") == 0);
  CHECK(Run(ws, "load") == 0);
  CHECK(Run(ws, "gen-data --personas 4") == 2);
  CHECK(Run(ws, "gen-data --personas 4 --contents 6 --takes 4 --seed 7 --force") == 0);
  auto bytes = pbooth::io::ReadBytes(ws / "data" / "clips" / "000003.bin");
  bytes[10] ^= 0x40;
  pbooth::io::WriteBytes(ws / "data" / "clips" / "000003.bin", bytes);
  CHECK(Run(ws, "load") == 4);
}

TEST_CASE("the full chain runs and sampling reports normalized weights") {
  const fs::path ws = pt::ScratchDir("cli-chain") / "run";
  REQUIRE(Run(ws, "gen-data --personas 2 --contents 4 --takes 2") == 0);
  REQUIRE(Run(ws, "pretrain-clip") == 0);
  REQUIRE(Run(ws, "pretrain-diffusion") == 0);
  REQUIRE(Run(ws, "finetune") == 0);
  CHECK(Run(ws, "sample --prompt \"a person hops forward\" --inputs 40,41 --k 1") == 0);
  CHECK(Run(ws, "sample --prompt \"a person hops forward\" --inputs 40,41 --k 1 -o two") == 0);
  CHECK(Log(ws).find("(sum 1") != std::string::npos);
  CHECK(fs::exists(ws / "two" / "motion.bin"));
  CHECK(Run(ws, "sample --prompt \"a person juggles\"") == 2);
  CHECK(Run(ws, "eval") == 0);
  CHECK(Log(ws).find("protocol,seed,config_hash") != std::string::npos);
  CHECK(Run(ws, "ablate --axis g_v --values 0,5") == 0);
  const auto csv = pbooth::io::ReadText(ws / "ablate-g_v" / "ablation.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}
