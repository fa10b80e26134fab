#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "banditmt/model.hpp"
#include "banditmt/tape.hpp"
#include "banditmt/vocab.hpp"

namespace banditmt {

/// Inverted dropout applied to recurrent inter-layer outputs and the
/// attentional output. Inactive when rate == 0 or rng is null.
struct Dropout {
  Real rate = 0.0;
  std::mt19937_64* rng = nullptr;

  bool active() const { return rate > 0.0 && rng != nullptr; }
  Var apply(Tape& tape, Var x) const;
};

struct LayerState {
  Var h;
  Var c;
};

struct EncoderOutput {
  Var states;  // [n x H], forward/backward concatenation per position
  Var keys;    // [n x H], attention key projection of `states`
  std::vector<LayerState> init;  // decoder initial state per layer
  std::size_t length = 0;
};

struct DecoderState {
  std::vector<LayerState> layers;
  Var feed;  // previous attentional output; zeros before the first step
};

struct Attention {
  Var context;
  Var weights;
};

EncoderOutput encode(Tape& tape, const EncoderDecoder& net, std::span<const TokenId> source,
                     const Dropout& dropout = {});
DecoderState initial_state(Tape& tape, const EncoderDecoder& net, const EncoderOutput& enc);
Attention attend(Tape& tape, const EncoderDecoder& net, const EncoderOutput& enc, Var h_dec);

struct StepOutput {
  DecoderState state;  // carries the new attentional output as its feed
  Var output;          // tanh(W_o [h_dec; c_t])
};

/// Consumes y_prev and produces the next attentional output.
StepOutput decoder_step(Tape& tape, const EncoderDecoder& net, const DecoderState& state, TokenId y_prev,
                        const EncoderOutput& enc, const Dropout& dropout = {});

Var policy_logits(Tape& tape, const NmtParams& params, Var output, const Dropout& dropout = {});
Var value_estimate(Tape& tape, const CriticParams& critic, Var output);

struct StepDistribution {
  std::vector<Real> probs;
  DecoderState state;
  Var output;
  Var logits;
};

StepDistribution decode_step(Tape& tape, const NmtParams& params, const DecoderState& state, TokenId y_prev,
                             const EncoderOutput& enc, Real tau = 1.0);

/// log P(y_t | y_<t, x) nodes under teacher forcing, at temperature tau.
std::vector<Var> step_log_probs(Tape& tape, const NmtParams& params, std::span<const TokenId> source,
                                std::span<const TokenId> target, Real tau = 1.0, const Dropout& dropout = {});
Var sequence_log_prob(Tape& tape, const NmtParams& params, std::span<const TokenId> source,
                      std::span<const TokenId> target, Real tau = 1.0, const Dropout& dropout = {});
/// Sum of per-step log-probabilities in nats at tau = 1.
Real sequence_log_prob(const NmtParams& params, std::span<const TokenId> source, std::span<const TokenId> target);

enum class DecodeMode { kGreedy, kSample, kBeam };

struct DecodeConfig {
  DecodeMode mode = DecodeMode::kGreedy;
  Real tau = 1.0;  // sample mode only
  std::size_t beam_width = 5;
  std::size_t max_len_factor = 2;
  std::size_t max_len_offset = 10;
  std::size_t max_len_cap = 100;
  std::optional<std::size_t> max_len;  // overrides the length rule
  std::uint64_t seed = 0;

  /// min(factor * |x| + offset, cap) unless overridden.
  std::size_t max_len_for(std::size_t source_length) const;
  void validate() const;
};

struct Hypothesis {
  std::vector<TokenId> tokens;   // includes EOS when produced
  std::vector<Real> log_probs;   // of the chosen tokens
  Real score() const;
};

Hypothesis decode(const NmtParams& params, std::span<const TokenId> source, const DecodeConfig& config);

/// Draws from `probs` using one uniform variate from `rng`.
TokenId sample_token(std::span<const Real> probs, std::mt19937_64& rng);

/// log softmax(logits / tau), numerically stable.
std::vector<Real> log_softmax(std::span<const Real> logits, Real tau = 1.0);

}  // namespace banditmt
