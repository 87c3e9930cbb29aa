#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include "pbooth/data/motion.h"

namespace pbooth::data {

enum class Split { kPretrain, kFinetune, kTest };

std::string_view SplitName(Split split);
Split SplitFromName(std::string_view name);

// Everything needed to regenerate a corpus bit-for-bit.
struct CorpusSpec {
  std::uint64_t corpus_seed = 7;
  std::size_t personas = 4;
  std::size_t contents = kContentCount;
  std::size_t takes = 4;           // finetune takes per (persona, content)
  std::size_t heldout_takes = 3;   // test takes per (persona, content)
  std::size_t pretrain_takes = 16; // neutral takes per content
  bool flip_augment = true;
  std::size_t frames = kMaxFrames;
  double separation_margin = 0.3;

  void Validate() const;
};

std::uint64_t TakeSeed(std::uint64_t corpus_seed, int persona_id,
                       int content_id, std::size_t take);

struct Corpus {
  CorpusSpec spec;
  std::vector<PersonaParams> personas;  // ids 1..P
  std::vector<MotionClip> clips;
  std::vector<Split> splits;

  std::vector<std::size_t> Indices(Split split) const;
  std::vector<std::size_t> PersonaGroup(Split split, int persona_id) const;
  std::vector<int> PersonaIds() const;
};

// Pretrain split: the neutral persona only. Finetune/test splits: personas
// 1..P on disjoint take indices. Flip augmentation doubles every split.
Corpus GenerateCorpus(const CorpusSpec& spec);

// Directory layout: manifest.json, clips/<index>.bin (little-endian float32,
// row-major frames x channels) and checksums.txt.
void SaveCorpus(const Corpus& corpus, const std::filesystem::path& dir);
// Throws IntegrityError on checksum or manifest/payload disagreement.
Corpus LoadCorpus(const std::filesystem::path& dir);

}  // namespace pbooth::data
