#include "pbooth/persona/extractor.h"

#include "pbooth/errors.h"

namespace pbooth::persona {

using nn::Var;

template <typename T>
PersonaExtractor<T>::PersonaExtractor(const PersonaConfig& config, nn::Rng& rng)
    : config_(config),
      final_norm_("persona.final_norm", config.d_model),
      token_head_("persona.token_head", config.d_model, config.d_model,
                  config.d_text, rng),
      projection_head_("persona.projection_head", config.d_model,
                       config.d_model, config.d_proj, rng) {
  nn::Tensor<T> cls = nn::Tensor<T>::Matrix(1, config.d_model);
  for (auto& v : cls.values()) v = static_cast<T>(0.02 * rng.Normal());
  class_token_ = nn::Parameter<T>("persona.class_token", std::move(cls));
  for (std::size_t b = 0; b < config.blocks; ++b) {
    blocks_.emplace_back("persona.block" + std::to_string(b), config.d_model,
                         config.heads, config.ff_width, rng);
  }
}

template <typename T>
PersonaFeatures<T> PersonaExtractor<T>::Extract(nn::Graph<T>& g,
                                                const Var<T>& frame_features) {
  if (frame_features.cols() != config_.d_model) {
    throw DimensionError("persona extractor expects width " +
                         std::to_string(config_.d_model) + ", got " +
                         nn::ShapeToString(frame_features.value().shape()));
  }
  Var<T> x = nn::ConcatRows<T>({g.Bind(class_token_), frame_features});
  for (auto& block : blocks_) x = block(g, x);
  PersonaFeatures<T> out;
  out.v_star = final_norm_(g, x);
  out.y = nn::SliceRows(out.v_star, 0, 1);
  out.p_star = token_head_(g, out.y);
  return out;
}

template <typename T>
Var<T> PersonaExtractor<T>::Project(nn::Graph<T>& g, const Var<T>& y) {
  return projection_head_(g, y);
}

template <typename T>
void PersonaExtractor<T>::CollectParameters(nn::ParameterList<T>& out) {
  out.push_back(&class_token_);
  for (auto& block : blocks_) block.CollectParameters(out);
  final_norm_.CollectParameters(out);
  token_head_.CollectParameters(out);
  projection_head_.CollectParameters(out);
}

template <typename T>
Var<T> PersonaCohesionLoss(const Var<T>& projected, const std::vector<int>& labels,
                           const std::vector<std::size_t>& positives,
                           T temperature) {
  const std::size_t n = projected.rows();
  if (labels.size() != n || positives.size() != n) {
    throw DimensionError("cohesion loss: " + std::to_string(n) + " rows, " +
                         std::to_string(labels.size()) + " labels, " +
                         std::to_string(positives.size()) + " positives");
  }
  if (n < 2) throw DataError("cohesion loss needs at least one anchor/positive pair");
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = positives[i];
    if (j >= n || j == i || labels[j] != labels[i]) {
      throw DataError("batch construction: anchor " + std::to_string(i) +
                      " has no positive of persona " + std::to_string(labels[i]));
    }
  }
  const Var<T> z = nn::NormalizeRows(projected);
  const Var<T> logits = nn::Scale(nn::MatMulNT(z, z), T{1} / temperature);
  return nn::SoftmaxCrossEntropy(logits, positives, /*exclude_diagonal=*/true);
}

std::vector<std::size_t> PairedPositives(const std::vector<int>& labels) {
  if (labels.size() % 2 != 0) {
    throw DataError("batch construction: " + std::to_string(labels.size()) +
                    " rows cannot form anchor/positive pairs");
  }
  std::vector<std::size_t> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = i ^ std::size_t{1};
  return out;
}

std::size_t SamplePositive(const data::Corpus& corpus, data::Split split,
                           std::size_t anchor, nn::Rng& rng) {
  const int persona = corpus.clips.at(anchor).persona_id;
  std::vector<std::size_t> group = corpus.PersonaGroup(split, persona);
  std::erase(group, anchor);
  if (group.empty()) {
    throw DataError("persona " + std::to_string(persona) + " has no clip other than " +
                    std::to_string(anchor) + " in the " +
                    std::string(data::SplitName(split)) + " split");
  }
  return group[rng.Index(group.size())];
}

template class PersonaExtractor<float>;
template class PersonaExtractor<double>;
template Var<float> PersonaCohesionLoss(const Var<float>&, const std::vector<int>&,
                                        const std::vector<std::size_t>&, float);
template Var<double> PersonaCohesionLoss(const Var<double>&, const std::vector<int>&,
                                         const std::vector<std::size_t>&, double);

}  // namespace pbooth::persona
