#include "banditmt/array.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace banditmt {

Shape::Shape(std::initializer_list<std::size_t> dims) : Shape(std::span<const std::size_t>(dims.begin(), dims.size())) {}

Shape::Shape(std::span<const std::size_t> dims) {
  if (dims.size() > kMaxRank) throw std::invalid_argument("shape rank exceeds " + std::to_string(kMaxRank));
  for (std::size_t d : dims) {
    if (d == 0) throw std::invalid_argument("shape dimensions must be positive");
    dims_[rank_++] = d;
  }
}

std::size_t Shape::elements() const {
  std::size_t n = 1;
  for (std::size_t i = 0; i < rank_; ++i) n *= dims_[i];
  return n;
}

bool Shape::operator==(const Shape& other) const {
  return rank_ == other.rank_ && std::equal(dims_.begin(), dims_.begin() + rank_, other.dims_.begin());
}

std::string Shape::str() const {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < rank_; ++i) out << (i ? "x" : "") << dims_[i];
  out << ']';
  return out.str();
}

Array::Array(Shape shape) : shape_(shape), data_(shape.elements(), 0.0) {}

Array::Array(Shape shape, std::vector<Real> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.elements())
    throw std::invalid_argument("array data length " + std::to_string(data_.size()) + " does not match shape " +
                                shape_.str());
}

Array Array::scalar(Real value) { return Array(Shape{1}, {value}); }

Array Array::vector(std::vector<Real> values) {
  const std::size_t n = values.size();
  return Array(Shape{n}, std::move(values));
}

Array Array::matrix(std::size_t rows, std::size_t cols, std::vector<Real> values) {
  return Array(Shape{rows, cols}, std::move(values));
}

Real Array::item() const {
  if (data_.size() != 1) throw std::invalid_argument("item() requires a single-element array, got " + shape_.str());
  return data_[0];
}

bool Array::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](Real v) { return std::isfinite(v); });
}

void Array::fill(Real value) { std::fill(data_.begin(), data_.end(), value); }

std::vector<Real> softmax_temperature(std::span<const Real> logits, Real tau) {
  if (logits.empty()) throw std::invalid_argument("softmax_temperature: empty logits");
  if (!(tau > 0.0)) throw std::invalid_argument("softmax_temperature: tau must be positive");
  const Real top = *std::max_element(logits.begin(), logits.end());
  std::vector<Real> out(logits.size());
  Real total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp((logits[i] - top) / tau);
    total += out[i];
  }
  for (Real& p : out) p /= total;
  return out;
}

std::size_t argmax(std::span<const Real> values) {
  if (values.empty()) throw std::invalid_argument("argmax of empty range");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

}  // namespace banditmt
