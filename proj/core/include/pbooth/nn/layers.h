#pragma once

#include <cstddef>
#include <string>

#include "pbooth/nn/autograd.h"
#include "pbooth/nn/random.h"

namespace pbooth::nn {

// Xavier/Glorot uniform initialization for a fan_in x fan_out matrix.
template <typename T>
Tensor<T> XavierUniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

// Fixed sinusoidal table of n positions by width d.
template <typename T>
Tensor<T> SinusoidalTable(std::size_t n, std::size_t d);

// Sinusoidal embedding of a single (possibly fractional) position, 1 x d.
template <typename T>
Tensor<T> SinusoidalEmbedding(double position, std::size_t d);

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng,
         bool bias = true);

  Var<T> operator()(Graph<T>& g, const Var<T>& x);
  void CollectParameters(ParameterList<T>& out);

  std::size_t in_features() const { return weight_.value.rows(); }
  std::size_t out_features() const { return weight_.value.cols(); }
  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

 private:
  Parameter<T> weight_;
  Parameter<T> bias_;
  bool has_bias_ = true;
};

template <typename T>
class LayerNormLayer {
 public:
  LayerNormLayer() = default;
  LayerNormLayer(const std::string& name, std::size_t width);

  Var<T> operator()(Graph<T>& g, const Var<T>& x);
  void CollectParameters(ParameterList<T>& out);

 private:
  Parameter<T> gain_;
  Parameter<T> bias_;
};

// Scaled dot-product attention with `heads` heads. Queries come from one
// sequence and keys/values from another; self-attention passes the same one.
template <typename T>
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(const std::string& name, std::size_t width,
                     std::size_t heads, Rng& rng);

  Var<T> operator()(Graph<T>& g, const Var<T>& queries, const Var<T>& context);
  Var<T> SelfAttention(Graph<T>& g, const Var<T>& x) { return (*this)(g, x, x); }
  void CollectParameters(ParameterList<T>& out);

  std::size_t width() const { return width_; }
  std::size_t heads() const { return heads_; }
  Linear<T>& query() { return query_; }
  Linear<T>& key() { return key_; }
  Linear<T>& value() { return value_; }
  Linear<T>& output() { return output_; }

 private:
  std::size_t width_ = 0;
  std::size_t heads_ = 1;
  Linear<T> query_;
  Linear<T> key_;
  Linear<T> value_;
  Linear<T> output_;
};

// Linear -> GELU -> Linear.
template <typename T>
class Mlp {
 public:
  Mlp() = default;
  Mlp(const std::string& name, std::size_t in, std::size_t hidden,
      std::size_t out, Rng& rng);

  Var<T> operator()(Graph<T>& g, const Var<T>& x);
  void CollectParameters(ParameterList<T>& out);

 private:
  Linear<T> first_;
  Linear<T> second_;
};

// Pre-norm transformer encoder block. The two residual halves are exposed
// separately so callers can insert layers between attention and feed-forward.
template <typename T>
class TransformerBlock {
 public:
  TransformerBlock() = default;
  TransformerBlock(const std::string& name, std::size_t width, std::size_t heads,
                   std::size_t ff_width, Rng& rng);

  Var<T> AttentionResidual(Graph<T>& g, const Var<T>& x);
  Var<T> FeedForwardResidual(Graph<T>& g, const Var<T>& x);
  Var<T> operator()(Graph<T>& g, const Var<T>& x) {
    return FeedForwardResidual(g, AttentionResidual(g, x));
  }
  void CollectParameters(ParameterList<T>& out);

 private:
  LayerNormLayer<T> attn_norm_;
  MultiHeadAttention<T> attn_;
  LayerNormLayer<T> ff_norm_;
  Mlp<T> ff_;
};

template <typename T>
void SetTrainable(const ParameterList<T>& params, bool trainable) {
  for (auto* p : params) p->trainable = trainable;
}

template <typename T>
std::size_t CountElements(const ParameterList<T>& params) {
  std::size_t n = 0;
  for (auto* p : params) n += p->value.size();
  return n;
}

}  // namespace pbooth::nn
