#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "pbooth/clip/clip_model.h"
#include "pbooth/data/corpus.h"

namespace pbooth::clip {

struct ClipTrainConfig {
  std::size_t steps = 600;
  double learning_rate = 1e-3;
  double temperature = 0.1;
  std::size_t log_every = 25;
  std::uint64_t seed = 1;
  // Held-out neutral takes per content used for the retrieval check.
  std::size_t eval_takes = 4;
};

struct CurvePoint {
  std::size_t step = 0;
  double loss = 0.0;
};

struct ClipTrainResult {
  std::vector<CurvePoint> curve;
  double recall_at_1 = 0.0;
};

// Contrastive training on the pretrain split: each batch holds one random
// crop per content paired with a random description variant. On a
// non-finite loss the parameters are rolled back to the last logged step and
// NumericError is thrown.
ClipTrainResult TrainClip(ClipModel<float>& model, const data::Corpus& corpus,
                          const ClipTrainConfig& config);

// Motion-to-text recall@1 over the canonical (variant 0) prompt of every
// content, on neutral takes the pretrain split never contained.
double HeldOutRecallAt1(ClipModel<float>& model, const data::CorpusSpec& spec,
                        std::size_t takes_per_content);

double Cosine(const std::vector<float>& a, const std::vector<float>& b);

}  // namespace pbooth::clip
