#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "pbooth/nn/tensor.h"

namespace pbooth::nn {

// A learnable tensor together with its gradient and AdamW moments.
template <typename T>
struct Parameter {
  Parameter() = default;
  Parameter(std::string name_in, Tensor<T> value_in)
      : name(std::move(name_in)),
        value(std::move(value_in)),
        grad(value.shape()),
        first_moment(value.shape()),
        second_moment(value.shape()) {}

  void ZeroGrad() { grad.Fill(T{0}); }

  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  Tensor<T> first_moment;
  Tensor<T> second_moment;
  bool trainable = true;
};

template <typename T>
using ParameterList = std::vector<Parameter<T>*>;

template <typename T>
struct Node {
  const Tensor<T>& value() const { return view ? *view : owned; }
  void EnsureGrad() {
    if (grad.size() != value().size()) grad = Tensor<T>(value().shape());
  }

  Tensor<T> owned;
  const Tensor<T>* view = nullptr;  // borrowed value, e.g. a parameter
  Tensor<T> grad;
  bool requires_grad = false;
  Parameter<T>* param = nullptr;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;
};

// Handle to a node of the recorded operation graph. Cheap to copy.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Var Constant(Tensor<T> value);
  // A leaf that collects gradient (used for gradient checks and probes).
  static Var Leaf(Tensor<T> value);
  static Var View(const Tensor<T>& value, bool requires_grad,
                  Parameter<T>* param = nullptr);

  const Tensor<T>& value() const { return node_->value(); }
  const Tensor<T>& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool defined() const { return node_ != nullptr; }
  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& shared() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Runs reverse-mode accumulation from a 1x1 loss. Throws UsageError when the
// loss does not depend on anything that requires a gradient.
template <typename T>
void Backward(const Var<T>& loss);

// Binds parameters into one forward pass. Frozen parameters, or every
// parameter when recording is off, enter as constants.
template <typename T>
class Graph {
 public:
  explicit Graph(bool record = true) : record_(record) {}

  Var<T> Bind(Parameter<T>& p);
  bool recording() const { return record_; }

  void Backward(const Var<T>& loss) { nn::Backward(loss); }
  // Adds gradients gathered at bound leaves into Parameter::grad.
  void AccumulateGrads() const;

 private:
  bool record_;
  std::unordered_map<Parameter<T>*, Var<T>> bound_;
};

// ---- operations -----------------------------------------------------------
// All operations view their operands as matrices (see Tensor::rows/cols).

template <typename T> Var<T> MatMul(const Var<T>& a, const Var<T>& b);
// a * b^T
template <typename T> Var<T> MatMulNT(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> Add(const Var<T>& a, const Var<T>& b);
// Adds a 1 x c row to every row of a.
template <typename T> Var<T> AddBias(const Var<T>& a, const Var<T>& bias);
template <typename T> Var<T> Sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> Mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> Scale(const Var<T>& a, T factor);
template <typename T> Var<T> AddScalar(const Var<T>& a, T offset);
// Multiplies every element of a by the 1x1 value s.
template <typename T> Var<T> ScaleBy(const Var<T>& a, const Var<T>& s);
template <typename T> Var<T> Tanh(const Var<T>& a);
template <typename T> Var<T> Gelu(const Var<T>& a);
template <typename T> Var<T> Sqrt(const Var<T>& a);
template <typename T> Var<T> Transpose(const Var<T>& a);
// Row-wise normalization followed by per-column gain and bias (1 x c each).
template <typename T>
Var<T> LayerNorm(const Var<T>& x, const Var<T>& gain, const Var<T>& bias,
                 T eps = T(1e-5));
template <typename T> Var<T> SoftmaxRows(const Var<T>& a);
template <typename T> Var<T> NormalizeRows(const Var<T>& a, T eps = T(1e-12));
template <typename T> Var<T> ConcatRows(const std::vector<Var<T>>& parts);
template <typename T> Var<T> ConcatCols(const std::vector<Var<T>>& parts);
template <typename T>
Var<T> SliceRows(const Var<T>& a, std::size_t start, std::size_t count);
template <typename T>
Var<T> SliceCols(const Var<T>& a, std::size_t start, std::size_t count);
// 1 x c mean over rows.
template <typename T> Var<T> MeanRows(const Var<T>& a);
// Repeats a 1 x c row n times.
template <typename T> Var<T> BroadcastRows(const Var<T>& row, std::size_t n);
template <typename T>
Var<T> GatherRows(const Var<T>& table, const std::vector<std::size_t>& indices);
template <typename T> Var<T> Sum(const Var<T>& a);
template <typename T> Var<T> Mean(const Var<T>& a);
// mean((a - b)^2) over all elements.
template <typename T> Var<T> MeanSquaredError(const Var<T>& a, const Var<T>& b);
// Mean binary cross-entropy against targets in [0, 1]. The arguments of both
// log terms are clamped to [eps, 1]; the clamp passes zero gradient outside
// its interval and an exact match scores zero.
template <typename T>
Var<T> BinaryCrossEntropy(const Var<T>& prob, const Tensor<T>& target,
                          T eps = T(1e-4));
// Mean over rows of -log softmax(logits[i])[targets[i]]. When
// exclude_diagonal is set, column i is left out of row i's normalizer.
template <typename T>
Var<T> SoftmaxCrossEntropy(const Var<T>& logits,
                           const std::vector<std::size_t>& targets,
                           bool exclude_diagonal = false);

}  // namespace pbooth::nn
