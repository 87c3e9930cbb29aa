#pragma once

#include <cstddef>
#include <vector>

#include "pbooth/nn/tensor.h"

namespace pbooth::fusion {

struct CafConfig {
  std::size_t k = 5;
  // Softmax denominator over every input instead of only the selected top-k.
  // The resulting weights no longer sum to 1.
  bool normalize_over_all = false;

  void Validate() const;  // ConfigError when k == 0
};

struct CafWeights {
  std::vector<double> similarities;
  std::vector<double> weights;
  std::vector<std::size_t> selected;  // ascending rank order
};

// Arithmetic mean of the persona tokens. Throws DataError on empty input.
nn::Tensor<float> MeanPersonaToken(const std::vector<nn::Tensor<float>>& p_stars);

// Top-k softmax weights from similarity scores; ties at the k-th rank go to
// the lower input index.
CafWeights ComputeWeights(const std::vector<double>& similarities, const CafConfig& config);

struct FusedPersona {
  nn::Tensor<float> v_star;
  nn::Tensor<float> p_star;
};

// Pads every V* (row 0 is the class slot) to the longest frame count by
// centering the frame rows between zero rows. Sequences are never cropped
// because padding to the maximum leaves nothing to cut.
std::vector<nn::Tensor<float>> AlignLengths(const std::vector<nn::Tensor<float>>& v_stars);

// Weighted sums of V* and P*. Throws ProtocolError when the weights do not
// sum to 1 within 1e-6, unless `allow_unnormalized` is set.
FusedPersona Fuse(const std::vector<nn::Tensor<float>>& v_stars,
                  const std::vector<nn::Tensor<float>>& p_stars,
                  const std::vector<double>& weights, bool allow_unnormalized = false);

}  // namespace pbooth::fusion
