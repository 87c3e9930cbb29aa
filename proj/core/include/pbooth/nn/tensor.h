#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace pbooth::nn {

using Shape = std::vector<std::size_t>;

std::string ShapeToString(const Shape& shape);
std::size_t ShapeSize(const Shape& shape);

// Dense row-major array. Most of the library treats tensors as matrices:
// rows() is the product of all leading dimensions and cols() the last one,
// so a rank-1 tensor behaves as a single row.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0});
  Tensor(Shape shape, std::vector<T> data);

  static Tensor Matrix(std::size_t rows, std::size_t cols, T fill = T{0}) {
    return Tensor({rows, cols}, fill);
  }
  static Tensor RowVector(std::vector<T> values) {
    const std::size_t n = values.size();
    return Tensor({1, n}, std::move(values));
  }
  static Tensor Scalar(T value) { return Tensor({1, 1}, std::vector<T>{value}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }
  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  Tensor Reshaped(Shape shape) const;
  Tensor RowSlice(std::size_t start, std::size_t count) const;
  void Fill(T value);
  bool AllFinite() const;
  T Sum() const;
  T MaxAbs() const;

  template <typename U>
  Tensor<U> Cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  bool operator==(const Tensor& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

 private:
  void UpdateExtents();

  Shape shape_;
  std::vector<T> data_;
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
};

// out (+)= op(a) * op(b) where op transposes when the flag is set.
template <typename T>
void Gemm(const Tensor<T>& a, bool transpose_a, const Tensor<T>& b,
          bool transpose_b, Tensor<T>& out, bool accumulate);

template <typename T>
Tensor<T> MatMul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
void AddInPlace(Tensor<T>& target, const Tensor<T>& addend, T scale = T{1});

template <typename T>
Tensor<T> Lerp(const Tensor<T>& base, const Tensor<T>& target, T weight);

template <typename T>
T MaxAbsDiff(const Tensor<T>& a, const Tensor<T>& b);

// Throws DimensionError naming both shapes unless they are equal.
void CheckSameShape(const Shape& a, const Shape& b, const char* op);

}  // namespace pbooth::nn
