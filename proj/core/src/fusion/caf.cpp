#include "pbooth/fusion/caf.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pbooth/errors.h"

namespace pbooth::fusion {

void CafConfig::Validate() const {
  if (k == 0) throw ConfigError("CAF top-k must be >= 1");
}

nn::Tensor<float> MeanPersonaToken(const std::vector<nn::Tensor<float>>& p_stars) {
  if (p_stars.empty()) throw DataError("mean persona token of zero inputs");
  std::vector<double> acc(p_stars[0].size(), 0.0);
  for (const auto& p : p_stars) {
    nn::CheckSameShape(p.shape(), p_stars[0].shape(), "mean persona token");
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += p[i];
  }
  nn::Tensor<float> out(p_stars[0].shape());
  const double n = static_cast<double>(p_stars.size());
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<float>(acc[i] / n);
  return out;
}

CafWeights ComputeWeights(const std::vector<double>& similarities, const CafConfig& config) {
  config.Validate();
  const std::size_t n = similarities.size();
  if (n == 0) throw DataError("CAF needs at least one input");
  CafWeights out;
  out.similarities = similarities;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return similarities[a] > similarities[b];
  });
  const std::size_t k = std::min(config.k, n);
  out.selected.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));

  const double top = similarities[out.selected[0]];
  const double all_max = *std::max_element(similarities.begin(), similarities.end());
  const double shift = config.normalize_over_all ? all_max : top;
  double denom = 0.0;
  if (config.normalize_over_all) {
    for (double s : similarities) denom += std::exp(s - shift);
  } else {
    for (std::size_t i : out.selected) denom += std::exp(similarities[i] - shift);
  }
  out.weights.assign(n, 0.0);
  for (std::size_t i : out.selected) out.weights[i] = std::exp(similarities[i] - shift) / denom;
  return out;
}

std::vector<nn::Tensor<float>> AlignLengths(const std::vector<nn::Tensor<float>>& v_stars) {
  std::size_t rows = 0;
  for (const auto& v : v_stars) rows = std::max(rows, v.rows());
  std::vector<nn::Tensor<float>> out;
  for (const auto& v : v_stars) {
    if (v.rows() == rows) {
      out.push_back(v);
      continue;
    }
    if (v.rows() == 0) throw DimensionError("V* without a class slot");
    nn::Tensor<float> padded = nn::Tensor<float>::Matrix(rows, v.cols());
    std::copy(v.row(0).begin(), v.row(0).end(), padded.row(0).begin());
    const std::size_t frames = v.rows() - 1;
    const std::size_t offset = 1 + (rows - 1 - frames) / 2;
    for (std::size_t r = 0; r < frames; ++r) {
      std::copy(v.row(r + 1).begin(), v.row(r + 1).end(), padded.row(offset + r).begin());
    }
    out.push_back(std::move(padded));
  }
  return out;
}

FusedPersona Fuse(const std::vector<nn::Tensor<float>>& v_stars,
                  const std::vector<nn::Tensor<float>>& p_stars,
                  const std::vector<double>& weights, bool allow_unnormalized) {
  const std::size_t n = weights.size();
  if (n == 0 || v_stars.size() != n || p_stars.size() != n) {
    throw DimensionError("fuse: " + std::to_string(v_stars.size()) + " V*, " +
                         std::to_string(p_stars.size()) + " P*, " + std::to_string(n) +
                         " weights");
  }
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!allow_unnormalized && std::abs(total - 1.0) > 1e-6) {
    throw ProtocolError("fusion weights sum to " + std::to_string(total) + ", not 1");
  }
  const auto aligned = AlignLengths(v_stars);
  std::vector<double> v(aligned[0].size(), 0.0), p(p_stars[0].size(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    nn::CheckSameShape(aligned[i].shape(), aligned[0].shape(), "fuse V*");
    nn::CheckSameShape(p_stars[i].shape(), p_stars[0].shape(), "fuse P*");
    for (std::size_t j = 0; j < v.size(); ++j) v[j] += weights[i] * aligned[i][j];
    for (std::size_t j = 0; j < p.size(); ++j) p[j] += weights[i] * p_stars[i][j];
  }
  FusedPersona out{nn::Tensor<float>(aligned[0].shape()), nn::Tensor<float>(p_stars[0].shape())};
  for (std::size_t j = 0; j < v.size(); ++j) out.v_star[j] = static_cast<float>(v[j]);
  for (std::size_t j = 0; j < p.size(); ++j) out.p_star[j] = static_cast<float>(p[j]);
  return out;
}

}  // namespace pbooth::fusion
