#include "pbooth/eval/metrics.h"

#include <Eigen/Dense>
#include <cmath>

#include "pbooth/errors.h"

namespace pbooth::eval {
namespace {

using MatrixD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

MatrixD ToMatrix(const std::vector<double>& m, std::size_t dim) {
  if (m.size() != dim * dim) throw DimensionError("matrix storage does not match dim^2");
  return Eigen::Map<const MatrixD>(m.data(), static_cast<Eigen::Index>(dim),
                                   static_cast<Eigen::Index>(dim));
}

Eigen::VectorXd ClippedEigenvalues(const Eigen::VectorXd& values, const char* what) {
  Eigen::VectorXd out = values;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    if (out[i] < -kEigenTolerance) {
      throw NumericError(std::string(what) + " has eigenvalue " + std::to_string(out[i]) +
                         " below the clipping tolerance");
    }
    if (out[i] < 0.0) out[i] = 0.0;
  }
  return out;
}

MatrixD SqrtPsdMatrix(const MatrixD& m, const char* what) {
  const MatrixD sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixD> solver(sym);
  if (solver.info() != Eigen::Success) {
    throw NumericError(std::string("eigendecomposition of ") + what + " failed");
  }
  const Eigen::VectorXd roots = ClippedEigenvalues(solver.eigenvalues(), what).cwiseSqrt();
  return solver.eigenvectors() * roots.asDiagonal() * solver.eigenvectors().transpose();
}

}  // namespace

FeatureStats FeatureStats::Compute(const std::vector<Embedding>& embeddings) {
  if (embeddings.size() < 2) throw DataError("feature statistics need >= 2 embeddings");
  FeatureStats s;
  s.dim = embeddings[0].size();
  s.mean.assign(s.dim, 0.0);
  for (const auto& e : embeddings) {
    if (e.size() != s.dim) throw DimensionError("embeddings of mixed dimension");
    for (std::size_t i = 0; i < s.dim; ++i) s.mean[i] += e[i];
  }
  const double n = static_cast<double>(embeddings.size());
  for (double& m : s.mean) m /= n;
  s.covariance.assign(s.dim * s.dim, 0.0);
  for (const auto& e : embeddings) {
    for (std::size_t i = 0; i < s.dim; ++i) {
      const double di = e[i] - s.mean[i];
      for (std::size_t j = 0; j < s.dim; ++j) {
        s.covariance[i * s.dim + j] += di * (e[j] - s.mean[j]);
      }
    }
  }
  for (std::size_t i = 0; i < s.dim; ++i) {
    for (std::size_t j = i; j < s.dim; ++j) {
      const double v = 0.5 * (s.covariance[i * s.dim + j] + s.covariance[j * s.dim + i]) / (n - 1.0);
      s.covariance[i * s.dim + j] = v;
      s.covariance[j * s.dim + i] = v;
    }
  }
  return s;
}

std::vector<double> SqrtPsd(const std::vector<double>& matrix, std::size_t dim) {
  const MatrixD root = SqrtPsdMatrix(ToMatrix(matrix, dim), "matrix");
  return {root.data(), root.data() + root.size()};
}

double Fid(const FeatureStats& a, const FeatureStats& b) {
  if (a.dim != b.dim) {
    throw DimensionError("FID of " + std::to_string(a.dim) + "-d and " +
                         std::to_string(b.dim) + "-d statistics");
  }
  double shift = 0.0;
  for (std::size_t i = 0; i < a.dim; ++i) {
    const double d = a.mean[i] - b.mean[i];
    shift += d * d;
  }
  const MatrixD sa = ToMatrix(a.covariance, a.dim);
  const MatrixD sb = ToMatrix(b.covariance, b.dim);
  const MatrixD root_a = SqrtPsdMatrix(sa, "first covariance");
  const MatrixD inner = root_a * sb * root_a;
  Eigen::SelfAdjointEigenSolver<MatrixD> solver(0.5 * (inner + inner.transpose()),
                                                Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericError("FID eigendecomposition failed");
  const double cross = ClippedEigenvalues(solver.eigenvalues(), "covariance product")
                           .cwiseSqrt()
                           .sum();
  return shift + sa.trace() + sb.trace() - 2.0 * cross;
}

double CosineSimilarity(const Embedding& a, const Embedding& b) {
  if (a.size() != b.size()) throw DimensionError("cosine of mismatched embeddings");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  const double denom = std::sqrt(na * nb);
  return denom > 0.0 ? dot / denom : 0.0;
}

std::vector<std::size_t> RetrievalRanks(const std::vector<Embedding>& generated,
                                        const std::vector<Embedding>& true_prompts,
                                        const std::vector<int>& group_of_true,
                                        const std::vector<Embedding>& bank,
                                        const std::vector<int>& bank_groups,
                                        std::size_t pool_size, nn::Rng& rng) {
  if (generated.size() != true_prompts.size() || generated.size() != group_of_true.size() ||
      bank.size() != bank_groups.size()) {
    throw DimensionError("retrieval inputs have inconsistent lengths");
  }
  if (pool_size == 0) throw ProtocolError("retrieval pool size must be >= 1");
  std::vector<std::size_t> ranks;
  for (std::size_t i = 0; i < generated.size(); ++i) {
    std::vector<std::size_t> candidates;
    for (std::size_t j = 0; j < bank.size(); ++j) {
      if (bank_groups[j] != group_of_true[i]) candidates.push_back(j);
    }
    if (candidates.size() < pool_size - 1) {
      throw ProtocolError("retrieval pool of " + std::to_string(pool_size) + " needs " +
                          std::to_string(pool_size - 1) + " distractors, only " +
                          std::to_string(candidates.size()) + " available");
    }
    // Partial Fisher-Yates: the first pool_size - 1 entries are the draw.
    for (std::size_t d = 0; d + 1 < pool_size; ++d) {
      std::swap(candidates[d], candidates[d + rng.Index(candidates.size() - d)]);
    }
    const double truth = CosineSimilarity(generated[i], true_prompts[i]);
    std::size_t rank = 1;
    for (std::size_t d = 0; d + 1 < pool_size; ++d) {
      if (CosineSimilarity(generated[i], bank[candidates[d]]) > truth) ++rank;
    }
    ranks.push_back(rank);
  }
  return ranks;
}

double RPrecision(const std::vector<std::size_t>& ranks, std::size_t top_n) {
  if (ranks.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t r : ranks) hits += r <= top_n ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

double Diversity(const std::vector<Embedding>& embeddings, std::size_t pairs, nn::Rng& rng) {
  const std::size_t n = embeddings.size();
  if (n < 2) throw DataError("diversity needs at least 2 embeddings");
  if (pairs == 0) return 0.0;
  double total = 0.0;
  for (std::size_t p = 0; p < pairs; ++p) {
    const std::size_t i = rng.Index(n);
    std::size_t j = rng.Index(n - 1);
    if (j >= i) ++j;
    double d2 = 0.0;
    for (std::size_t c = 0; c < embeddings[i].size(); ++c) {
      const double d = static_cast<double>(embeddings[i][c]) - embeddings[j][c];
      d2 += d * d;
    }
    total += std::sqrt(d2);
  }
  return total / static_cast<double>(pairs);
}

}  // namespace pbooth::eval
