#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "pbooth/nn/random.h"

namespace pbooth::eval {

using Embedding = std::vector<float>;

// Gaussian fit of a set of embeddings. The covariance uses the unbiased
// (n - 1) normalizer and is symmetrized.
struct FeatureStats {
  std::size_t dim = 0;
  std::vector<double> mean;
  std::vector<double> covariance;  // dim x dim, row-major

  static FeatureStats Compute(const std::vector<Embedding>& embeddings);
};

// Squared mean distance plus Tr(Sa + Sb - 2 (Sa^1/2 Sb Sa^1/2)^1/2). The
// square roots use symmetric eigendecompositions; eigenvalues in
// [-1e-8, 0) are clipped to zero and anything lower raises NumericError.
double Fid(const FeatureStats& a, const FeatureStats& b);

inline constexpr double kEigenTolerance = 1e-8;

// Symmetric PSD square root, row-major. Exposed for tests.
std::vector<double> SqrtPsd(const std::vector<double>& matrix, std::size_t dim);

// Rank (1-based) of each generated clip's true prompt among itself plus
// pool_size - 1 distractors. Distractors for item i are drawn without
// replacement from bank entries whose group differs from group_of_true[i].
// Ties are resolved in favor of the true prompt. Throws ProtocolError when a
// pool cannot be filled.
std::vector<std::size_t> RetrievalRanks(const std::vector<Embedding>& generated,
                                        const std::vector<Embedding>& true_prompts,
                                        const std::vector<int>& group_of_true,
                                        const std::vector<Embedding>& bank,
                                        const std::vector<int>& bank_groups,
                                        std::size_t pool_size, nn::Rng& rng);

// Fraction of ranks <= top_n.
double RPrecision(const std::vector<std::size_t>& ranks, std::size_t top_n);

// Mean Euclidean distance over `pairs` random pairs of distinct indices.
double Diversity(const std::vector<Embedding>& embeddings, std::size_t pairs, nn::Rng& rng);

double CosineSimilarity(const Embedding& a, const Embedding& b);

}  // namespace pbooth::eval
