#pragma once

#include <array>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace banditmt {

using Real = double;

/// Dense shape of rank 0..4. Every dimension is positive.
class Shape {
 public:
  static constexpr std::size_t kMaxRank = 4;

  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims);
  explicit Shape(std::span<const std::size_t> dims);

  std::size_t rank() const { return rank_; }
  std::size_t operator[](std::size_t axis) const { return dims_[axis]; }
  std::size_t elements() const;
  std::span<const std::size_t> dims() const { return {dims_.data(), rank_}; }

  bool operator==(const Shape& other) const;
  std::string str() const;

 private:
  std::array<std::size_t, kMaxRank> dims_{};
  std::size_t rank_ = 0;
};

/// Row-major dense array of reals.
class Array {
 public:
  Array() = default;
  explicit Array(Shape shape);
  Array(Shape shape, std::vector<Real> data);

  static Array scalar(Real value);
  static Array vector(std::vector<Real> values);
  static Array matrix(std::size_t rows, std::size_t cols, std::vector<Real> values);
  static Array zeros_like(const Array& other) { return Array(other.shape()); }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  std::size_t rows() const { return shape_.rank() == 2 ? shape_[0] : 1; }
  std::size_t cols() const { return shape_.rank() == 2 ? shape_[1] : data_.size(); }

  std::span<Real> data() { return data_; }
  std::span<const Real> data() const { return data_; }
  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }
  Real& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  Real at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
  std::span<Real> row(std::size_t r) { return std::span<Real>(data_).subspan(r * cols(), cols()); }
  std::span<const Real> row(std::size_t r) const {
    return std::span<const Real>(data_).subspan(r * cols(), cols());
  }

  Real item() const;
  bool all_finite() const;
  void fill(Real value);

  bool operator==(const Array& other) const = default;

 private:
  Shape shape_;
  std::vector<Real> data_;
};

/// softmax(logits / tau) with max-subtraction. Throws std::invalid_argument on
/// empty logits or non-positive tau.
std::vector<Real> softmax_temperature(std::span<const Real> logits, Real tau);

/// Index of the maximum element; ties resolve to the lowest index.
std::size_t argmax(std::span<const Real> values);

}  // namespace banditmt
