#include "pbooth/nn/layers.h"

#include <cmath>

#include "pbooth/errors.h"

namespace pbooth::nn {

template <typename T>
Tensor<T> XavierUniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor<T> w = Tensor<T>::Matrix(fan_in, fan_out);
  for (auto& v : w.values()) v = static_cast<T>(rng.Uniform(-limit, limit));
  return w;
}

template <typename T>
Tensor<T> SinusoidalEmbedding(double position, std::size_t d) {
  Tensor<T> e = Tensor<T>::Matrix(1, d);
  for (std::size_t i = 0; i < d / 2; ++i) {
    const double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) /
                                               static_cast<double>(d));
    e[2 * i] = static_cast<T>(std::sin(position * freq));
    e[2 * i + 1] = static_cast<T>(std::cos(position * freq));
  }
  return e;
}

template <typename T>
Tensor<T> SinusoidalTable(std::size_t n, std::size_t d) {
  Tensor<T> table = Tensor<T>::Matrix(n, d);
  for (std::size_t p = 0; p < n; ++p) {
    const Tensor<T> row = SinusoidalEmbedding<T>(static_cast<double>(p), d);
    std::copy(row.data(), row.data() + d, table.data() + p * d);
  }
  return table;
}

template <typename T>
Linear<T>::Linear(const std::string& name, std::size_t in, std::size_t out,
                  Rng& rng, bool bias)
    : weight_(name + ".weight", XavierUniform<T>(in, out, rng)),
      bias_(name + ".bias", Tensor<T>::Matrix(1, out)),
      has_bias_(bias) {}

template <typename T>
Var<T> Linear<T>::operator()(Graph<T>& g, const Var<T>& x) {
  Var<T> y = MatMul(x, g.Bind(weight_));
  return has_bias_ ? AddBias(y, g.Bind(bias_)) : y;
}

template <typename T>
void Linear<T>::CollectParameters(ParameterList<T>& out) {
  out.push_back(&weight_);
  if (has_bias_) out.push_back(&bias_);
}

template <typename T>
LayerNormLayer<T>::LayerNormLayer(const std::string& name, std::size_t width)
    : gain_(name + ".gain", Tensor<T>::Matrix(1, width, T{1})),
      bias_(name + ".bias", Tensor<T>::Matrix(1, width)) {}

template <typename T>
Var<T> LayerNormLayer<T>::operator()(Graph<T>& g, const Var<T>& x) {
  return LayerNorm(x, g.Bind(gain_), g.Bind(bias_));
}

template <typename T>
void LayerNormLayer<T>::CollectParameters(ParameterList<T>& out) {
  out.push_back(&gain_);
  out.push_back(&bias_);
}

template <typename T>
MultiHeadAttention<T>::MultiHeadAttention(const std::string& name,
                                          std::size_t width, std::size_t heads,
                                          Rng& rng)
    : width_(width), heads_(heads) {
  if (heads == 0 || width % heads != 0) {
    throw ConfigError("attention width " + std::to_string(width) +
                      " is not divisible by " + std::to_string(heads) +
                      " heads");
  }
  query_ = Linear<T>(name + ".query", width, width, rng);
  key_ = Linear<T>(name + ".key", width, width, rng);
  value_ = Linear<T>(name + ".value", width, width, rng);
  output_ = Linear<T>(name + ".output", width, width, rng);
}

template <typename T>
Var<T> MultiHeadAttention<T>::operator()(Graph<T>& g, const Var<T>& queries,
                                         const Var<T>& context) {
  if (queries.cols() != width_ || context.cols() != width_) {
    throw DimensionError("attention: inputs " +
                         ShapeToString(queries.value().shape()) + " and " +
                         ShapeToString(context.value().shape()) +
                         " do not have width " + std::to_string(width_));
  }
  if (context.rows() == 0) {
    throw DimensionError("attention: empty key/value sequence");
  }
  const Var<T> q = query_(g, queries);
  const Var<T> k = key_(g, context);
  const Var<T> v = value_(g, context);
  const std::size_t head_width = width_ / heads_;
  const T scale = T{1} / std::sqrt(static_cast<T>(head_width));
  std::vector<Var<T>> outputs;
  outputs.reserve(heads_);
  for (std::size_t h = 0; h < heads_; ++h) {
    const bool whole = heads_ == 1;
    const Var<T> qh = whole ? q : SliceCols(q, h * head_width, head_width);
    const Var<T> kh = whole ? k : SliceCols(k, h * head_width, head_width);
    const Var<T> vh = whole ? v : SliceCols(v, h * head_width, head_width);
    const Var<T> weights = SoftmaxRows(Scale(MatMulNT(qh, kh), scale));
    outputs.push_back(MatMul(weights, vh));
  }
  const Var<T> merged = heads_ == 1 ? outputs[0] : ConcatCols(outputs);
  return output_(g, merged);
}

template <typename T>
void MultiHeadAttention<T>::CollectParameters(ParameterList<T>& out) {
  query_.CollectParameters(out);
  key_.CollectParameters(out);
  value_.CollectParameters(out);
  output_.CollectParameters(out);
}

template <typename T>
Mlp<T>::Mlp(const std::string& name, std::size_t in, std::size_t hidden,
            std::size_t out, Rng& rng)
    : first_(name + ".0", in, hidden, rng), second_(name + ".1", hidden, out, rng) {}

template <typename T>
Var<T> Mlp<T>::operator()(Graph<T>& g, const Var<T>& x) {
  return second_(g, Gelu(first_(g, x)));
}

template <typename T>
void Mlp<T>::CollectParameters(ParameterList<T>& out) {
  first_.CollectParameters(out);
  second_.CollectParameters(out);
}

template <typename T>
TransformerBlock<T>::TransformerBlock(const std::string& name, std::size_t width,
                                      std::size_t heads, std::size_t ff_width,
                                      Rng& rng)
    : attn_norm_(name + ".attn_norm", width),
      attn_(name + ".attn", width, heads, rng),
      ff_norm_(name + ".ff_norm", width),
      ff_(name + ".ff", width, ff_width, width, rng) {}

template <typename T>
Var<T> TransformerBlock<T>::AttentionResidual(Graph<T>& g, const Var<T>& x) {
  return Add(x, attn_.SelfAttention(g, attn_norm_(g, x)));
}

template <typename T>
Var<T> TransformerBlock<T>::FeedForwardResidual(Graph<T>& g, const Var<T>& x) {
  return Add(x, ff_(g, ff_norm_(g, x)));
}

template <typename T>
void TransformerBlock<T>::CollectParameters(ParameterList<T>& out) {
  attn_norm_.CollectParameters(out);
  attn_.CollectParameters(out);
  ff_norm_.CollectParameters(out);
  ff_.CollectParameters(out);
}

#define PBOOTH_INSTANTIATE(T)                                              \
  template Tensor<T> XavierUniform<T>(std::size_t, std::size_t, Rng&);     \
  template Tensor<T> SinusoidalTable<T>(std::size_t, std::size_t);         \
  template Tensor<T> SinusoidalEmbedding<T>(double, std::size_t);          \
  template class Linear<T>;                                                \
  template class LayerNormLayer<T>;                                        \
  template class MultiHeadAttention<T>;                                    \
  template class Mlp<T>;                                                   \
  template class TransformerBlock<T>;

PBOOTH_INSTANTIATE(float)
PBOOTH_INSTANTIATE(double)

#undef PBOOTH_INSTANTIATE

}  // namespace pbooth::nn
