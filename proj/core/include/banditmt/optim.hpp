#pragma once

#include <cstdint>

#include "banditmt/params.hpp"

namespace banditmt {

struct SgdConfig {
  Real learning_rate = 1.0;
  Real decay_factor = 0.5;
  int decay_start_epoch = 9;
  Real clip_norm = 5.0;

  /// learning_rate * decay_factor^max(0, epoch - decay_start_epoch + 1); epochs are 1-based.
  Real rate_at(int epoch) const;
  void validate() const;
};

/// Clips `grads` to global norm <= clip_norm, then p <- p - lr(epoch) * g.
/// Returns the pre-clipping global norm.
Real sgd_step(ParamSet& params, Gradients grads, const SgdConfig& config, int epoch);

/// Adam with bias correction. Accumulators mirror the parameter shapes.
class AdamState {
 public:
  static constexpr Real kBeta1 = 0.9;
  static constexpr Real kBeta2 = 0.999;
  static constexpr Real kEpsilon = 1e-8;

  AdamState() = default;
  AdamState(const ParamSet& params, Real learning_rate);

  Real learning_rate() const { return learning_rate_; }
  std::uint64_t step() const { return step_; }
  const Gradients& first_moment() const { return m_; }
  const Gradients& second_moment() const { return v_; }

  friend void adam_step(ParamSet& params, const Gradients& grads, AdamState& state);

 private:
  Real learning_rate_ = 1e-4;
  std::uint64_t step_ = 0;
  Gradients m_;
  Gradients v_;
};

/// One Adam update minimising the objective whose gradient is `grads`.
void adam_step(ParamSet& params, const Gradients& grads, AdamState& state);

}  // namespace banditmt
