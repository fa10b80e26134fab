#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "banditmt/array.hpp"

namespace banditmt {

/// Named, ordered collection of learnable arrays.
class ParamSet {
 public:
  std::size_t add(std::string name, Array value);

  std::size_t size() const { return values_.size(); }
  const Array& value(std::size_t index) const { return values_[index]; }
  Array& value(std::size_t index) { return values_[index]; }
  const std::string& name(std::size_t index) const { return names_[index]; }
  std::optional<std::size_t> find(const std::string& name) const;
  std::size_t total_elements() const;

  /// Fills every parameter with uniform(-scale, scale) draws in declaration order.
  void init_uniform(Real scale, std::uint64_t seed);

  bool operator==(const ParamSet& other) const { return names_ == other.names_ && values_ == other.values_; }

 private:
  std::vector<std::string> names_;
  std::vector<Array> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// One gradient array per parameter, aligned with a ParamSet.
using Gradients = std::vector<Array>;

Gradients zero_gradients(const ParamSet& params);
void accumulate(Gradients& into, const Gradients& add, Real scale = 1.0);
void scale(Gradients& grads, Real factor);
Real global_norm(const Gradients& grads);
Real max_abs_difference(const Gradients& a, const Gradients& b);

}  // namespace banditmt
