#include "banditmt/params.hpp"

#include <cmath>
#include <stdexcept>

namespace banditmt {

std::size_t ParamSet::add(std::string name, Array value) {
  if (index_.contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  const std::size_t id = values_.size();
  index_.emplace(name, id);
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return id;
}

std::optional<std::size_t> ParamSet::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t ParamSet::total_elements() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

void ParamSet::init_uniform(Real scale, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<Real> dist(-scale, scale);
  for (auto& v : values_)
    for (Real& x : v.data()) x = dist(rng);
}

Gradients zero_gradients(const ParamSet& params) {
  Gradients g;
  g.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) g.push_back(Array::zeros_like(params.value(i)));
  return g;
}

void accumulate(Gradients& into, const Gradients& add, Real scale) {
  if (into.size() != add.size()) throw std::invalid_argument("accumulate: gradient count mismatch");
  for (std::size_t i = 0; i < into.size(); ++i) {
    if (!(into[i].shape() == add[i].shape())) throw std::invalid_argument("accumulate: gradient shape mismatch");
    auto dst = into[i].data();
    auto src = add[i].data();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += scale * src[k];
  }
}

void scale(Gradients& grads, Real factor) {
  for (auto& g : grads)
    for (Real& x : g.data()) x *= factor;
}

Real global_norm(const Gradients& grads) {
  Real sq = 0.0;
  for (const auto& g : grads)
    for (Real x : g.data()) sq += x * x;
  return std::sqrt(sq);
}

Real max_abs_difference(const Gradients& a, const Gradients& b) {
  if (a.size() != b.size()) throw std::invalid_argument("max_abs_difference: gradient count mismatch");
  Real worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!(a[i].shape() == b[i].shape())) throw std::invalid_argument("max_abs_difference: shape mismatch");
    for (std::size_t k = 0; k < a[i].size(); ++k) worst = std::max(worst, std::abs(a[i][k] - b[i][k]));
  }
  return worst;
}

}  // namespace banditmt
