#include "banditmt/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace banditmt {
namespace {

void check_aligned(const ParamSet& params, const Gradients& grads, const char* who) {
  if (grads.size() != params.size()) throw std::invalid_argument(std::string(who) + ": gradient count mismatch");
  for (std::size_t i = 0; i < grads.size(); ++i)
    if (!(grads[i].shape() == params.value(i).shape()))
      throw std::invalid_argument(std::string(who) + ": gradient shape mismatch for " + params.name(i));
}

}  // namespace

Real SgdConfig::rate_at(int epoch) const {
  const int decays = std::max(0, epoch - decay_start_epoch + 1);
  return learning_rate * std::pow(decay_factor, decays);
}

void SgdConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("sgd: learning_rate must be positive");
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) throw std::invalid_argument("sgd: decay_factor must be in (0,1]");
  if (!(clip_norm > 0.0)) throw std::invalid_argument("sgd: clip_norm must be positive");
}

Real sgd_step(ParamSet& params, Gradients grads, const SgdConfig& config, int epoch) {
  check_aligned(params, grads, "sgd_step");
  const Real norm = global_norm(grads);
  if (norm > config.clip_norm) scale(grads, config.clip_norm / norm);
  const Real lr = config.rate_at(epoch);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params.value(i).data();
    auto g = grads[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) p[k] -= lr * g[k];
  }
  return norm;
}

AdamState::AdamState(const ParamSet& params, Real learning_rate)
    : learning_rate_(learning_rate), m_(zero_gradients(params)), v_(zero_gradients(params)) {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("adam: learning_rate must be positive");
}

void adam_step(ParamSet& params, const Gradients& grads, AdamState& state) {
  check_aligned(params, grads, "adam_step");
  if (state.m_.size() != params.size()) throw std::invalid_argument("adam_step: state does not mirror parameters");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (!(state.m_[i].shape() == params.value(i).shape()))
      throw std::invalid_argument("adam_step: state shape mismatch for " + params.name(i));

  ++state.step_;
  const Real t = static_cast<Real>(state.step_);
  const Real c1 = 1.0 - std::pow(AdamState::kBeta1, t);
  const Real c2 = 1.0 - std::pow(AdamState::kBeta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params.value(i).data();
    auto g = grads[i].data();
    auto m = state.m_[i].data();
    auto v = state.v_[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = AdamState::kBeta1 * m[k] + (1.0 - AdamState::kBeta1) * g[k];
      v[k] = AdamState::kBeta2 * v[k] + (1.0 - AdamState::kBeta2) * g[k] * g[k];
      const Real mhat = m[k] / c1;
      const Real vhat = v[k] / c2;
      p[k] -= state.learning_rate_ * mhat / (std::sqrt(vhat) + AdamState::kEpsilon);
    }
  }
}

}  // namespace banditmt
