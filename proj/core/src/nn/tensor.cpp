#include "pbooth/nn/tensor.h"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pbooth/errors.h"

namespace pbooth::nn {

std::string ShapeToString(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

std::size_t ShapeSize(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

void CheckSameShape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         ShapeToString(a) + " vs " + ShapeToString(b));
  }
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill)
    : shape_(std::move(shape)), data_(ShapeSize(shape_), fill) {
  UpdateExtents();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != ShapeSize(shape_)) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + ShapeToString(shape_));
  }
  UpdateExtents();
}

template <typename T>
void Tensor<T>::UpdateExtents() {
  if (shape_.empty()) {
    rows_ = 1;
    cols_ = 1;
    return;
  }
  cols_ = shape_.back();
  rows_ = 1;
  for (std::size_t i = 0; i + 1 < shape_.size(); ++i) rows_ *= shape_[i];
}

template <typename T>
Tensor<T> Tensor<T>::Reshaped(Shape shape) const {
  return Tensor(std::move(shape), data_);
}

template <typename T>
Tensor<T> Tensor<T>::RowSlice(std::size_t start, std::size_t count) const {
  if (start + count > rows_) {
    throw DimensionError("row slice [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") out of range for " +
                         ShapeToString(shape_));
  }
  std::vector<T> out(data_.begin() + static_cast<std::ptrdiff_t>(start * cols_),
                     data_.begin() +
                         static_cast<std::ptrdiff_t>((start + count) * cols_));
  return Tensor({count, cols_}, std::move(out));
}

template <typename T>
void Tensor<T>::Fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
bool Tensor<T>::AllFinite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](T v) { return std::isfinite(v); });
}

template <typename T>
T Tensor<T>::Sum() const {
  T s{0};
  for (T v : data_) s += v;
  return s;
}

template <typename T>
T Tensor<T>::MaxAbs() const {
  T m{0};
  for (T v : data_) m = std::max(m, std::abs(v));
  return m;
}

template <typename T>
void Gemm(const Tensor<T>& a, bool transpose_a, const Tensor<T>& b,
          bool transpose_b, Tensor<T>& out, bool accumulate) {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using ConstMap = Eigen::Map<const Mat>;
  const std::size_t m = transpose_a ? a.cols() : a.rows();
  const std::size_t k = transpose_a ? a.rows() : a.cols();
  const std::size_t kb = transpose_b ? b.cols() : b.rows();
  const std::size_t n = transpose_b ? b.rows() : b.cols();
  if (k != kb) {
    throw DimensionError("matmul: inner dimensions disagree " +
                         ShapeToString(a.shape()) + " vs " +
                         ShapeToString(b.shape()));
  }
  if (out.rows() != m || out.cols() != n) {
    if (accumulate) {
      throw DimensionError("matmul: accumulator shape " +
                           ShapeToString(out.shape()) + " is not " +
                           std::to_string(m) + "x" + std::to_string(n));
    }
    out = Tensor<T>::Matrix(m, n);
  }
  if (m == 0 || n == 0) return;
  Eigen::Map<Mat> o(out.data(), static_cast<Eigen::Index>(m),
                    static_cast<Eigen::Index>(n));
  if (k == 0) {
    if (!accumulate) o.setZero();
    return;
  }
  ConstMap am(a.data(), static_cast<Eigen::Index>(a.rows()),
              static_cast<Eigen::Index>(a.cols()));
  ConstMap bm(b.data(), static_cast<Eigen::Index>(b.rows()),
              static_cast<Eigen::Index>(b.cols()));
  auto run = [&](const auto& lhs, const auto& rhs) {
    if (accumulate) {
      o.noalias() += lhs * rhs;
    } else {
      o.noalias() = lhs * rhs;
    }
  };
  if (transpose_a && transpose_b) {
    run(am.transpose(), bm.transpose());
  } else if (transpose_a) {
    run(am.transpose(), bm);
  } else if (transpose_b) {
    run(am, bm.transpose());
  } else {
    run(am, bm);
  }
}

template <typename T>
Tensor<T> MatMul(const Tensor<T>& a, const Tensor<T>& b) {
  Tensor<T> out;
  Gemm(a, false, b, false, out, false);
  return out;
}

template <typename T>
void AddInPlace(Tensor<T>& target, const Tensor<T>& addend, T scale) {
  if (target.size() != addend.size()) {
    CheckSameShape(target.shape(), addend.shape(), "add");
  }
  T* t = target.data();
  const T* s = addend.data();
  const std::size_t n = target.size();
  for (std::size_t i = 0; i < n; ++i) t[i] += scale * s[i];
}

template <typename T>
Tensor<T> Lerp(const Tensor<T>& base, const Tensor<T>& target, T weight) {
  CheckSameShape(base.shape(), target.shape(), "lerp");
  Tensor<T> out = base;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = base[i] + weight * (target[i] - base[i]);
  }
  return out;
}

template <typename T>
T MaxAbsDiff(const Tensor<T>& a, const Tensor<T>& b) {
  CheckSameShape(a.shape(), b.shape(), "max_abs_diff");
  T m{0};
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]));
  }
  return m;
}

#define PBOOTH_INSTANTIATE(T)                                                \
  template class Tensor<T>;                                                  \
  template void Gemm<T>(const Tensor<T>&, bool, const Tensor<T>&, bool,      \
                        Tensor<T>&, bool);                                   \
  template Tensor<T> MatMul<T>(const Tensor<T>&, const Tensor<T>&);          \
  template void AddInPlace<T>(Tensor<T>&, const Tensor<T>&, T);              \
  template Tensor<T> Lerp<T>(const Tensor<T>&, const Tensor<T>&, T);         \
  template T MaxAbsDiff<T>(const Tensor<T>&, const Tensor<T>&);

PBOOTH_INSTANTIATE(float)
PBOOTH_INSTANTIATE(double)

#undef PBOOTH_INSTANTIATE

}  // namespace pbooth::nn
