#include "pbooth/nn/autograd.h"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "pbooth/errors.h"

namespace pbooth::nn {
namespace {

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

// Wraps a computed value into a node. Inputs and the backward closure are
// only retained when some input needs a gradient.
template <typename T>
Var<T> Make(Tensor<T> value, std::vector<NodePtr<T>> inputs,
            std::function<void(Node<T>&)> backward) {
  auto node = std::make_shared<Node<T>>();
  node->owned = std::move(value);
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [](const NodePtr<T>& n) {
                                   return n->requires_grad;
                                 });
  if (needs) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
  }
  return Var<T>(std::move(node));
}

template <typename T>
Tensor<T>& GradOf(Node<T>& n) {
  n.EnsureGrad();
  return n.grad;
}

void CheckCols(std::size_t a, std::size_t b, const char* op,
               const Shape& sa, const Shape& sb) {
  if (a != b) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         ShapeToString(sa) + " vs " + ShapeToString(sb));
  }
}

template <typename T>
T GeluValue(T x) {
  return T(0.5) * x * (T(1) + std::erf(x / std::sqrt(T(2))));
}

template <typename T>
T GeluGrad(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x / std::sqrt(T(2))));
  const T pdf = std::exp(T(-0.5) * x * x) / std::sqrt(T(2) * T(M_PI));
  return cdf + x * pdf;
}

}  // namespace

template <typename T>
Var<T> Var<T>::Constant(Tensor<T> value) {
  auto node = std::make_shared<Node<T>>();
  node->owned = std::move(value);
  return Var(std::move(node));
}

template <typename T>
Var<T> Var<T>::Leaf(Tensor<T> value) {
  auto node = std::make_shared<Node<T>>();
  node->owned = std::move(value);
  node->requires_grad = true;
  return Var(std::move(node));
}

template <typename T>
Var<T> Var<T>::View(const Tensor<T>& value, bool requires_grad,
                    Parameter<T>* param) {
  auto node = std::make_shared<Node<T>>();
  node->view = &value;
  node->requires_grad = requires_grad;
  node->param = param;
  return Var(std::move(node));
}

template <typename T>
void Backward(const Var<T>& loss) {
  if (!loss.defined() || !loss.requires_grad()) {
    throw UsageError(
        "backward called on a value that is detached from every parameter");
  }
  if (loss.value().size() != 1) {
    throw UsageError("backward expects a scalar loss, got shape " +
                     ShapeToString(loss.value().shape()));
  }
  // Iterative post-order DFS gives a topological order.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(loss.node(), 0);
  visited.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  loss.node()->EnsureGrad();
  loss.node()->grad[0] += T{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward && n->grad.size() == n->value().size()) {
      n->backward(*n);
    }
  }
}

template <typename T>
Var<T> Graph<T>::Bind(Parameter<T>& p) {
  auto it = bound_.find(&p);
  if (it != bound_.end()) return it->second;
  const bool grad = record_ && p.trainable;
  Var<T> v = Var<T>::View(p.value, grad, grad ? &p : nullptr);
  bound_.emplace(&p, v);
  return v;
}

template <typename T>
void Graph<T>::AccumulateGrads() const {
  for (const auto& [param, var] : bound_) {
    Node<T>* n = var.node();
    if (n->param == nullptr || n->grad.size() != param->value.size()) continue;
    AddInPlace(param->grad, n->grad);
  }
}

template <typename T>
Var<T> MatMul(const Var<T>& a, const Var<T>& b) {
  Tensor<T> out;
  Gemm(a.value(), false, b.value(), false, out, false);
  return Make<T>(std::move(out), {a.shared(), b.shared()}, [](Node<T>& self) {
    Node<T>& na = *self.inputs[0];
    Node<T>& nb = *self.inputs[1];
    if (na.requires_grad) Gemm(self.grad, false, nb.value(), true, GradOf(na), true);
    if (nb.requires_grad) Gemm(na.value(), true, self.grad, false, GradOf(nb), true);
  });
}

template <typename T>
Var<T> MatMulNT(const Var<T>& a, const Var<T>& b) {
  Tensor<T> out;
  Gemm(a.value(), false, b.value(), true, out, false);
  return Make<T>(std::move(out), {a.shared(), b.shared()}, [](Node<T>& self) {
    Node<T>& na = *self.inputs[0];
    Node<T>& nb = *self.inputs[1];
    if (na.requires_grad) Gemm(self.grad, false, nb.value(), false, GradOf(na), true);
    if (nb.requires_grad) Gemm(self.grad, true, na.value(), false, GradOf(nb), true);
  });
}

template <typename T>
Var<T> Add(const Var<T>& a, const Var<T>& b) {
  CheckSameShape(a.value().shape(), b.value().shape(), "add");
  Tensor<T> out = a.value();
  AddInPlace(out, b.value());
  return Make<T>(std::move(out), {a.shared(), b.shared()}, [](Node<T>& self) {
    for (auto& in : self.inputs) {
      if (in->requires_grad) AddInPlace(GradOf(*in), self.grad);
    }
  });
}

template <typename T>
Var<T> AddBias(const Var<T>& a, const Var<T>& bias) {
  const auto& x = a.value();
  const auto& b = bias.value();
  if (b.size() != x.cols()) {
    throw DimensionError("add_bias: shape mismatch " + ShapeToString(x.shape()) +
                         " vs " + ShapeToString(b.shape()));
  }
  Tensor<T> out = x;
  const std::size_t c = x.cols();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    T* row = out.data() + r * c;
    for (std::size_t j = 0; j < c; ++j) row[j] += b[j];
  }
  return Make<T>(std::move(out), {a.shared(), bias.shared()}, [](Node<T>& self) {
    Node<T>& na = *self.inputs[0];
    Node<T>& nb = *self.inputs[1];
    if (na.requires_grad) AddInPlace(GradOf(na), self.grad);
    if (nb.requires_grad) {
      Tensor<T>& g = GradOf(nb);
      const std::size_t c = self.grad.cols();
      for (std::size_t r = 0; r < self.grad.rows(); ++r) {
        const T* row = self.grad.data() + r * c;
        for (std::size_t j = 0; j < c; ++j) g[j] += row[j];
      }
    }
  });
}

template <typename T>
Var<T> Sub(const Var<T>& a, const Var<T>& b) {
  CheckSameShape(a.value().shape(), b.value().shape(), "sub");
  Tensor<T> out = a.value();
  AddInPlace(out, b.value(), T{-1});
  return Make<T>(std::move(out), {a.shared(), b.shared()}, [](Node<T>& self) {
    if (self.inputs[0]->requires_grad) AddInPlace(GradOf(*self.inputs[0]), self.grad);
    if (self.inputs[1]->requires_grad) {
      AddInPlace(GradOf(*self.inputs[1]), self.grad, T{-1});
    }
  });
}

template <typename T>
Var<T> Mul(const Var<T>& a, const Var<T>& b) {
  CheckSameShape(a.value().shape(), b.value().shape(), "mul");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return Make<T>(std::move(out), {a.shared(), b.shared()}, [](Node<T>& self) {
    Node<T>& na = *self.inputs[0];
    Node<T>& nb = *self.inputs[1];
    if (na.requires_grad) {
      Tensor<T>& g = GradOf(na);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * nb.value()[i];
    }
    if (nb.requires_grad) {
      Tensor<T>& g = GradOf(nb);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * na.value()[i];
    }
  });
}

template <typename T>
Var<T> Scale(const Var<T>& a, T factor) {
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v *= factor;
  return Make<T>(std::move(out), {a.shared()}, [factor](Node<T>& self) {
    AddInPlace(GradOf(*self.inputs[0]), self.grad, factor);
  });
}

template <typename T>
Var<T> AddScalar(const Var<T>& a, T offset) {
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v += offset;
  return Make<T>(std::move(out), {a.shared()}, [](Node<T>& self) {
    AddInPlace(GradOf(*self.inputs[0]), self.grad);
  });
}

template <typename T>
Var<T> ScaleBy(const Var<T>& a, const Var<T>& s) {
  if (s.value().size() != 1) {
    throw DimensionError("scale_by: factor must be 1x1, got " +
                         ShapeToString(s.value().shape()));
  }
  const T factor = s.value()[0];
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v *= factor;
  return Make<T>(std::move(out), {a.shared(), s.shared()}, [](Node<T>& self) {
    Node<T>& na = *self.inputs[0];
    Node<T>& ns = *self.inputs[1];
    if (na.requires_grad) AddInPlace(GradOf(na), self.grad, ns.value()[0]);
    if (ns.requires_grad) {
      T acc{0};
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        acc += self.grad[i] * na.value()[i];
      }
      GradOf(ns)[0] += acc;
    }
  });
}

template <typename T>
Var<T> Tanh(const Var<T>& a) {
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v = std::tanh(v);
  return Make<T>(std::move(out), {a.shared()}, [](Node<T>& self) {
    Tensor<T>& g = GradOf(*self.inputs[0]);
    const Tensor<T>& y = self.value();
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += self.grad[i] * (T{1} - y[i] * y[i]);
    }
  });
}

template <typename T>
Var<T> Gelu(const Var<T>& a) {
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v = GeluValue(v);
  return Make<T>(std::move(out), {a.shared()}, [](Node<T>& self) {
    Node<T>& na = *self.inputs[0];
    Tensor<T>& g = GradOf(na);
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += self.grad[i] * GeluGrad(na.value()[i]);
    }
  });
}

template <typename T>
Var<T> Sqrt(const Var<T>& a) {
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v = std::sqrt(v);
  return Make<T>(std::move(out), {a.shared()}, [](Node<T>& self) {
    Tensor<T>& g = GradOf(*self.inputs[0]);
    const Tensor<T>& y = self.value();
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += self.grad[i] / (T{2} * y[i]);
    }
  });
}

template <typename T>
Var<T> Transpose(const Var<T>& a) {
  const auto& x = a.value();
  Tensor<T> out = Tensor<T>::Matrix(x.cols(), x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) out(c, r) = x(r, c);
  }
  return Make<T>(std::move(out), {a.shared()}, [](Node<T>& self) {
    Tensor<T>& g = GradOf(*self.inputs[0]);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      for (std::size_t c = 0; c < g.cols(); ++c) g(r, c) += self.grad(c, r);
    }
  });
}

template <typename T>
Var<T> LayerNorm(const Var<T>& x, const Var<T>& gain, const Var<T>& bias,
                 T eps) {
  const auto& in = x.value();
  const std::size_t n = in.rows();
  const std::size_t c = in.cols();
  if (gain.value().size() != c || bias.value().size() != c) {
    throw DimensionError("layer_norm: affine parameters " +
                         ShapeToString(gain.value().shape()) +
                         " do not match input " + ShapeToString(in.shape()));
  }
  Tensor<T> normalized(in.shape());
  std::vector<T> inv_std(n);
  Tensor<T> out(in.shape());
  const auto& g = gain.value();
  const auto& b = bias.value();
  for (std::size_t r = 0; r < n; ++r) {
    const T* row = in.data() + r * c;
    T mean{0};
    for (std::size_t j = 0; j < c; ++j) mean += row[j];
    mean /= static_cast<T>(c);
    T var{0};
    for (std::size_t j = 0; j < c; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<T>(c);
    const T rstd = T{1} / std::sqrt(var + eps);
    inv_std[r] = rstd;
    for (std::size_t j = 0; j < c; ++j) {
      const T xh = (row[j] - mean) * rstd;
      normalized(r, j) = xh;
      out(r, j) = xh * g[j] + b[j];
    }
  }
  return Make<T>(
      std::move(out), {x.shared(), gain.shared(), bias.shared()},
      [normalized = std::move(normalized),
       inv_std = std::move(inv_std)](Node<T>& self) {
        Node<T>& nx = *self.inputs[0];
        Node<T>& ng = *self.inputs[1];
        Node<T>& nb = *self.inputs[2];
        const std::size_t n = normalized.rows();
        const std::size_t c = normalized.cols();
        const auto& gv = ng.value();
        if (ng.requires_grad || nb.requires_grad) {
          Tensor<T>& dg = GradOf(ng);
          Tensor<T>& db = GradOf(nb);
          for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t j = 0; j < c; ++j) {
              if (ng.requires_grad) dg[j] += self.grad(r, j) * normalized(r, j);
              if (nb.requires_grad) db[j] += self.grad(r, j);
            }
          }
        }
        if (!nx.requires_grad) return;
        Tensor<T>& dx = GradOf(nx);
        std::vector<T> dxh(c);
        for (std::size_t r = 0; r < n; ++r) {
          T mean_d{0};
          T mean_dx{0};
          for (std::size_t j = 0; j < c; ++j) {
            dxh[j] = self.grad(r, j) * gv[j];
            mean_d += dxh[j];
            mean_dx += dxh[j] * normalized(r, j);
          }
          mean_d /= static_cast<T>(c);
          mean_dx /= static_cast<T>(c);
          for (std::size_t j = 0; j < c; ++j) {
            dx(r, j) += inv_std[r] * (dxh[j] - mean_d - normalized(r, j) * mean_dx);
          }
        }
      });
}

template <typename T>
Var<T> SoftmaxRows(const Var<T>& a) {
  const auto& x = a.value();
  Tensor<T> out(x.shape());
  const std::size_t c = x.cols();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const T* row = x.data() + r * c;
    T* o = out.data() + r * c;
    T mx = row[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    T sum{0};
    for (std::size_t j = 0; j < c; ++j) {
      o[j] = std::exp(row[j] - mx);
      sum += o[j];
    }
    for (std::size_t j = 0; j < c; ++j) o[j] /= sum;
  }
  return Make<T>(std::move(out), {a.shared()}, [](Node<T>& self) {
    Tensor<T>& g = GradOf(*self.inputs[0]);
    const Tensor<T>& y = self.value();
    const std::size_t c = y.cols();
    for (std::size_t r = 0; r < y.rows(); ++r) {
      T dot{0};
      for (std::size_t j = 0; j < c; ++j) dot += self.grad(r, j) * y(r, j);
      for (std::size_t j = 0; j < c; ++j) {
        g(r, j) += y(r, j) * (self.grad(r, j) - dot);
      }
    }
  });
}

template <typename T>
Var<T> NormalizeRows(const Var<T>& a, T eps) {
  const auto& x = a.value();
  Tensor<T> out(x.shape());
  std::vector<T> norms(x.rows());
  const std::size_t c = x.cols();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    T ss{0};
    for (std::size_t j = 0; j < c; ++j) ss += x(r, j) * x(r, j);
    norms[r] = std::sqrt(ss + eps);
    for (std::size_t j = 0; j < c; ++j) out(r, j) = x(r, j) / norms[r];
  }
  return Make<T>(std::move(out), {a.shared()},
                 [norms = std::move(norms)](Node<T>& self) {
                   Tensor<T>& g = GradOf(*self.inputs[0]);
                   const Tensor<T>& y = self.value();
                   const std::size_t c = y.cols();
                   for (std::size_t r = 0; r < y.rows(); ++r) {
                     T dot{0};
                     for (std::size_t j = 0; j < c; ++j) dot += self.grad(r, j) * y(r, j);
                     for (std::size_t j = 0; j < c; ++j) {
                       g(r, j) += (self.grad(r, j) - y(r, j) * dot) / norms[r];
                     }
                   }
                 });
}

template <typename T>
Var<T> ConcatRows(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t c = parts[0].cols();
  std::size_t total = 0;
  std::vector<NodePtr<T>> inputs;
  for (const auto& p : parts) {
    CheckCols(p.cols(), c, "concat_rows", parts[0].value().shape(),
              p.value().shape());
    total += p.rows();
    inputs.push_back(p.shared());
  }
  Tensor<T> out = Tensor<T>::Matrix(total, c);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    std::copy(p.value().data(), p.value().data() + p.value().size(),
              out.data() + offset * c);
    offset += p.rows();
  }
  return Make<T>(std::move(out), std::move(inputs), [](Node<T>& self) {
    std::size_t offset = 0;
    const std::size_t c = self.grad.cols();
    for (auto& in : self.inputs) {
      const std::size_t n = in->value().rows();
      if (in->requires_grad) {
        Tensor<T>& g = GradOf(*in);
        const T* src = self.grad.data() + offset * c;
        for (std::size_t i = 0; i < n * c; ++i) g[i] += src[i];
      }
      offset += n;
    }
  });
}

template <typename T>
Var<T> ConcatCols(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t n = parts[0].rows();
  std::size_t total = 0;
  std::vector<NodePtr<T>> inputs;
  for (const auto& p : parts) {
    CheckCols(p.rows(), n, "concat_cols", parts[0].value().shape(),
              p.value().shape());
    total += p.cols();
    inputs.push_back(p.shared());
  }
  Tensor<T> out = Tensor<T>::Matrix(n, total);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t c = p.cols();
    for (std::size_t r = 0; r < n; ++r) {
      std::copy(p.value().data() + r * c, p.value().data() + (r + 1) * c,
                out.data() + r * total + offset);
    }
    offset += c;
  }
  return Make<T>(std::move(out), std::move(inputs), [](Node<T>& self) {
    std::size_t offset = 0;
    const std::size_t total = self.grad.cols();
    for (auto& in : self.inputs) {
      const std::size_t c = in->value().cols();
      if (in->requires_grad) {
        Tensor<T>& g = GradOf(*in);
        for (std::size_t r = 0; r < g.rows(); ++r) {
          for (std::size_t j = 0; j < c; ++j) {
            g(r, j) += self.grad.data()[r * total + offset + j];
          }
        }
      }
      offset += c;
    }
  });
}

template <typename T>
Var<T> SliceRows(const Var<T>& a, std::size_t start, std::size_t count) {
  Tensor<T> out = a.value().RowSlice(start, count);
  return Make<T>(std::move(out), {a.shared()}, [start](Node<T>& self) {
    Tensor<T>& g = GradOf(*self.inputs[0]);
    const std::size_t c = g.cols();
    T* dst = g.data() + start * c;
    for (std::size_t i = 0; i < self.grad.size(); ++i) dst[i] += self.grad[i];
  });
}

template <typename T>
Var<T> SliceCols(const Var<T>& a, std::size_t start, std::size_t count) {
  const auto& x = a.value();
  if (start + count > x.cols()) {
    throw DimensionError("slice_cols: [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") out of range for " +
                         ShapeToString(x.shape()));
  }
  Tensor<T> out = Tensor<T>::Matrix(x.rows(), count);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    std::copy(x.data() + r * x.cols() + start,
              x.data() + r * x.cols() + start + count, out.data() + r * count);
  }
  return Make<T>(std::move(out), {a.shared()}, [start](Node<T>& self) {
    Tensor<T>& g = GradOf(*self.inputs[0]);
    const std::size_t count = self.grad.cols();
    for (std::size_t r = 0; r < g.rows(); ++r) {
      for (std::size_t j = 0; j < count; ++j) g(r, start + j) += self.grad(r, j);
    }
  });
}

template <typename T>
Var<T> MeanRows(const Var<T>& a) {
  const auto& x = a.value();
  const std::size_t c = x.cols();
  Tensor<T> out = Tensor<T>::Matrix(1, c);
  if (x.rows() == 0) throw DimensionError("mean_rows: empty input");
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t j = 0; j < c; ++j) out[j] += x(r, j);
  }
  const T inv = T{1} / static_cast<T>(x.rows());
  for (auto& v : out.values()) v *= inv;
  return Make<T>(std::move(out), {a.shared()}, [inv](Node<T>& self) {
    Tensor<T>& g = GradOf(*self.inputs[0]);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      for (std::size_t j = 0; j < g.cols(); ++j) g(r, j) += self.grad[j] * inv;
    }
  });
}

template <typename T>
Var<T> BroadcastRows(const Var<T>& row, std::size_t n) {
  const auto& x = row.value();
  if (x.rows() != 1) {
    throw DimensionError("broadcast_rows: expected a single row, got " +
                         ShapeToString(x.shape()));
  }
  const std::size_t c = x.cols();
  Tensor<T> out = Tensor<T>::Matrix(n, c);
  for (std::size_t r = 0; r < n; ++r) std::copy(x.data(), x.data() + c, out.data() + r * c);
  return Make<T>(std::move(out), {row.shared()}, [](Node<T>& self) {
    Tensor<T>& g = GradOf(*self.inputs[0]);
    for (std::size_t r = 0; r < self.grad.rows(); ++r) {
      for (std::size_t j = 0; j < self.grad.cols(); ++j) g[j] += self.grad(r, j);
    }
  });
}

template <typename T>
Var<T> GatherRows(const Var<T>& table, const std::vector<std::size_t>& indices) {
  const auto& t = table.value();
  const std::size_t c = t.cols();
  Tensor<T> out = Tensor<T>::Matrix(indices.size(), c);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= t.rows()) {
      throw DimensionError("gather_rows: index " + std::to_string(indices[i]) +
                           " out of range for " + ShapeToString(t.shape()));
    }
    std::copy(t.data() + indices[i] * c, t.data() + (indices[i] + 1) * c,
              out.data() + i * c);
  }
  return Make<T>(std::move(out), {table.shared()}, [indices](Node<T>& self) {
    Tensor<T>& g = GradOf(*self.inputs[0]);
    const std::size_t c = g.cols();
    for (std::size_t i = 0; i < indices.size(); ++i) {
      for (std::size_t j = 0; j < c; ++j) g(indices[i], j) += self.grad(i, j);
    }
  });
}

template <typename T>
Var<T> Sum(const Var<T>& a) {
  return Make<T>(Tensor<T>::Scalar(a.value().Sum()), {a.shared()},
                 [](Node<T>& self) {
                   Tensor<T>& g = GradOf(*self.inputs[0]);
                   for (auto& v : g.values()) v += self.grad[0];
                 });
}

template <typename T>
Var<T> Mean(const Var<T>& a) {
  const T inv = T{1} / static_cast<T>(a.value().size());
  return Make<T>(Tensor<T>::Scalar(a.value().Sum() * inv), {a.shared()},
                 [inv](Node<T>& self) {
                   Tensor<T>& g = GradOf(*self.inputs[0]);
                   for (auto& v : g.values()) v += self.grad[0] * inv;
                 });
}

template <typename T>
Var<T> MeanSquaredError(const Var<T>& a, const Var<T>& b) {
  CheckSameShape(a.value().shape(), b.value().shape(), "mse");
  const std::size_t n = a.value().size();
  T acc{0};
  for (std::size_t i = 0; i < n; ++i) {
    const T d = a.value()[i] - b.value()[i];
    acc += d * d;
  }
  const T inv = n ? T{1} / static_cast<T>(n) : T{0};
  return Make<T>(Tensor<T>::Scalar(acc * inv), {a.shared(), b.shared()},
                 [inv](Node<T>& self) {
                   Node<T>& na = *self.inputs[0];
                   Node<T>& nb = *self.inputs[1];
                   const T s = T{2} * inv * self.grad[0];
                   const std::size_t n = na.value().size();
                   if (na.requires_grad) {
                     Tensor<T>& g = GradOf(na);
                     for (std::size_t i = 0; i < n; ++i) {
                       g[i] += s * (na.value()[i] - nb.value()[i]);
                     }
                   }
                   if (nb.requires_grad) {
                     Tensor<T>& g = GradOf(nb);
                     for (std::size_t i = 0; i < n; ++i) {
                       g[i] -= s * (na.value()[i] - nb.value()[i]);
                     }
                   }
                 });
}

template <typename T>
Var<T> BinaryCrossEntropy(const Var<T>& prob, const Tensor<T>& target, T eps) {
  CheckSameShape(prob.value().shape(), target.shape(), "bce");
  const std::size_t n = target.size();
  // Each log term clamps its own argument to [eps, 1], so an exact match
  // costs nothing and predictions outside [0, 1] never produce negative terms.
  T acc{0};
  for (std::size_t i = 0; i < n; ++i) {
    const T p = prob.value()[i];
    const T t = target[i];
    if (t != T{0}) acc -= t * std::log(std::clamp(p, eps, T{1}));
    if (t != T{1}) acc -= (T{1} - t) * std::log(std::clamp(T{1} - p, eps, T{1}));
  }
  const T inv = n ? T{1} / static_cast<T>(n) : T{0};
  return Make<T>(Tensor<T>::Scalar(acc * inv), {prob.shared()},
                 [target, eps, inv](Node<T>& self) {
                   Node<T>& np = *self.inputs[0];
                   Tensor<T>& g = GradOf(np);
                   for (std::size_t i = 0; i < g.size(); ++i) {
                     const T p = np.value()[i];
                     const T t = target[i];
                     T d{0};
                     if (t != T{0} && p > eps && p < T{1}) d -= t / p;
                     if (t != T{1} && p > T{0} && p < T{1} - eps) d += (T{1} - t) / (T{1} - p);
                     g[i] += self.grad[0] * inv * d;
                   }
                 });
}

template <typename T>
Var<T> SoftmaxCrossEntropy(const Var<T>& logits,
                           const std::vector<std::size_t>& targets,
                           bool exclude_diagonal) {
  const auto& x = logits.value();
  const std::size_t n = x.rows();
  const std::size_t c = x.cols();
  if (targets.size() != n) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(n) + " rows");
  }
  Tensor<T> probs(x.shape());
  T total{0};
  for (std::size_t r = 0; r < n; ++r) {
    if (targets[r] >= c || (exclude_diagonal && targets[r] == r)) {
      throw DimensionError("softmax_cross_entropy: invalid target for row " +
                           std::to_string(r));
    }
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < c; ++j) {
      if (exclude_diagonal && j == r) continue;
      mx = std::max(mx, x(r, j));
    }
    T sum{0};
    for (std::size_t j = 0; j < c; ++j) {
      if (exclude_diagonal && j == r) continue;
      probs(r, j) = std::exp(x(r, j) - mx);
      sum += probs(r, j);
    }
    for (std::size_t j = 0; j < c; ++j) probs(r, j) /= sum;
    total += (mx + std::log(sum)) - x(r, targets[r]);
  }
  const T inv = n ? T{1} / static_cast<T>(n) : T{0};
  return Make<T>(Tensor<T>::Scalar(total * inv), {logits.shared()},
                 [probs = std::move(probs), targets, inv](Node<T>& self) {
                   Tensor<T>& g = GradOf(*self.inputs[0]);
                   const T s = self.grad[0] * inv;
                   for (std::size_t r = 0; r < probs.rows(); ++r) {
                     for (std::size_t j = 0; j < probs.cols(); ++j) {
                       g(r, j) += s * probs(r, j);
                     }
                     g(r, targets[r]) -= s;
                   }
                 });
}

#define PBOOTH_INSTANTIATE(T)                                                  \
  template class Var<T>;                                                       \
  template class Graph<T>;                                                     \
  template void Backward<T>(const Var<T>&);                                    \
  template Var<T> MatMul<T>(const Var<T>&, const Var<T>&);                     \
  template Var<T> MatMulNT<T>(const Var<T>&, const Var<T>&);                   \
  template Var<T> Add<T>(const Var<T>&, const Var<T>&);                        \
  template Var<T> AddBias<T>(const Var<T>&, const Var<T>&);                    \
  template Var<T> Sub<T>(const Var<T>&, const Var<T>&);                        \
  template Var<T> Mul<T>(const Var<T>&, const Var<T>&);                        \
  template Var<T> Scale<T>(const Var<T>&, T);                                  \
  template Var<T> AddScalar<T>(const Var<T>&, T);                              \
  template Var<T> ScaleBy<T>(const Var<T>&, const Var<T>&);                    \
  template Var<T> Tanh<T>(const Var<T>&);                                      \
  template Var<T> Gelu<T>(const Var<T>&);                                      \
  template Var<T> Sqrt<T>(const Var<T>&);                                      \
  template Var<T> Transpose<T>(const Var<T>&);                                 \
  template Var<T> LayerNorm<T>(const Var<T>&, const Var<T>&, const Var<T>&, T); \
  template Var<T> SoftmaxRows<T>(const Var<T>&);                               \
  template Var<T> NormalizeRows<T>(const Var<T>&, T);                          \
  template Var<T> ConcatRows<T>(const std::vector<Var<T>>&);                   \
  template Var<T> ConcatCols<T>(const std::vector<Var<T>>&);                   \
  template Var<T> SliceRows<T>(const Var<T>&, std::size_t, std::size_t);       \
  template Var<T> SliceCols<T>(const Var<T>&, std::size_t, std::size_t);       \
  template Var<T> MeanRows<T>(const Var<T>&);                                  \
  template Var<T> BroadcastRows<T>(const Var<T>&, std::size_t);                \
  template Var<T> GatherRows<T>(const Var<T>&, const std::vector<std::size_t>&); \
  template Var<T> Sum<T>(const Var<T>&);                                       \
  template Var<T> Mean<T>(const Var<T>&);                                      \
  template Var<T> MeanSquaredError<T>(const Var<T>&, const Var<T>&);           \
  template Var<T> BinaryCrossEntropy<T>(const Var<T>&, const Tensor<T>&, T);   \
  template Var<T> SoftmaxCrossEntropy<T>(const Var<T>&,                        \
                                         const std::vector<std::size_t>&, bool);

PBOOTH_INSTANTIATE(float)
PBOOTH_INSTANTIATE(double)

#undef PBOOTH_INSTANTIATE

}  // namespace pbooth::nn
