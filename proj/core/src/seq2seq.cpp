#include "banditmt/seq2seq.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace banditmt {
namespace {

void check_ids(std::span<const TokenId> ids, std::size_t vocab, const char* what) {
  for (TokenId t : ids)
    if (t >= vocab)
      throw std::invalid_argument(std::string(what) + ": token id " + std::to_string(t) + " outside vocabulary of " +
                                  std::to_string(vocab));
}

}  // namespace

Var Dropout::apply(Tape& tape, Var x) const {
  if (!active()) return x;
  if (rate >= 1.0) throw std::invalid_argument("dropout rate must be < 1");
  const Array& v = tape.value(x);
  Array mask(v.shape());
  std::bernoulli_distribution keep(1.0 - rate);
  const Real kept = 1.0 / (1.0 - rate);
  for (Real& m : mask.data()) m = keep(*rng) ? kept : 0.0;
  return tape.mul(x, tape.constant(std::move(mask)));
}

EncoderOutput encode(Tape& tape, const EncoderDecoder& net, std::span<const TokenId> source, const Dropout& dropout) {
  if (source.empty()) throw std::invalid_argument("encode: empty source");
  const ModelDims& dims = net.dims();
  check_ids(source, dims.src_vocab, "encode");
  const auto& layout = net.layout();
  const ParamSet& params = net.params();
  const std::size_t n = source.size();
  const std::size_t half = dims.hidden / 2;

  Var embed = tape.param(params, layout.src_embed);
  std::vector<Var> inputs;
  inputs.reserve(n);
  for (TokenId t : source) inputs.push_back(tape.row(embed, t));
  Var zero = tape.constant(Array(Shape{half}));

  EncoderOutput out;
  out.length = n;
  std::vector<Var> outputs(n);
  for (std::size_t l = 0; l < dims.layers; ++l) {
    std::vector<Var> fwd(n), bwd(n);
    LayerState fwd_last{zero, zero};
    LayerState bwd_last{zero, zero};
    {
      Var w = tape.param(params, layout.encoder[l][0].w);
      Var b = tape.param(params, layout.encoder[l][0].b);
      for (std::size_t t = 0; t < n; ++t) {
        LstmOutput s = lstm_cell(tape, w, b, inputs[t], fwd_last.h, fwd_last.c);
        fwd[t] = s.h;
        fwd_last = {s.h, s.c};
      }
    }
    {
      Var w = tape.param(params, layout.encoder[l][1].w);
      Var b = tape.param(params, layout.encoder[l][1].b);
      for (std::size_t t = n; t-- > 0;) {
        LstmOutput s = lstm_cell(tape, w, b, inputs[t], bwd_last.h, bwd_last.c);
        bwd[t] = s.h;
        bwd_last = {s.h, s.c};
      }
    }
    for (std::size_t t = 0; t < n; ++t) outputs[t] = tape.concat({fwd[t], bwd[t]});
    out.init.push_back({tape.concat({fwd_last.h, bwd_last.h}), tape.concat({fwd_last.c, bwd_last.c})});
    if (l + 1 < dims.layers)
      for (std::size_t t = 0; t < n; ++t) inputs[t] = dropout.apply(tape, outputs[t]);
  }
  out.states = tape.stack_rows(outputs);
  out.keys = tape.matmul_t(out.states, tape.param(params, layout.attn_keys));
  return out;
}

DecoderState initial_state(Tape& tape, const EncoderDecoder& net, const EncoderOutput& enc) {
  DecoderState s;
  s.layers = enc.init;
  s.feed = tape.constant(Array(Shape{net.dims().hidden}));
  return s;
}

Attention attend(Tape& tape, const EncoderDecoder& net, const EncoderOutput& enc, Var h_dec) {
  if (enc.length == 0) throw std::invalid_argument("attend: no encoder states");
  const ParamSet& params = net.params();
  Var query = tape.matvec(tape.param(params, net.layout().attn_query), h_dec);
  Var scores = tape.attn_scores(enc.keys, query, tape.param(params, net.layout().attn_v));
  Var weights = tape.softmax(scores);
  return {tape.mat_t_vec(enc.states, weights), weights};
}

StepOutput decoder_step(Tape& tape, const EncoderDecoder& net, const DecoderState& state, TokenId y_prev,
                        const EncoderOutput& enc, const Dropout& dropout) {
  const ModelDims& dims = net.dims();
  if (y_prev >= dims.tgt_vocab)
    throw std::invalid_argument("decode_step: token id " + std::to_string(y_prev) + " outside target vocabulary");
  if (state.layers.size() != dims.layers) throw std::invalid_argument("decode_step: state layer count mismatch");
  const auto& layout = net.layout();
  const ParamSet& params = net.params();

  Var embedded = tape.row(tape.param(params, layout.tgt_embed), y_prev);
  Var input = tape.concat({state.feed, embedded});
  StepOutput out;
  out.state.layers.reserve(dims.layers);
  for (std::size_t l = 0; l < dims.layers; ++l) {
    LstmOutput s = lstm_cell(tape, tape.param(params, layout.decoder[l].w), tape.param(params, layout.decoder[l].b),
                             input, state.layers[l].h, state.layers[l].c);
    out.state.layers.push_back({s.h, s.c});
    input = l + 1 < dims.layers ? dropout.apply(tape, s.h) : s.h;
  }
  Var h_dec = out.state.layers.back().h;
  Attention att = attend(tape, net, enc, h_dec);
  out.output = tape.tanh(tape.matvec(tape.param(params, layout.combine), tape.concat({h_dec, att.context})));
  out.state.feed = out.output;
  return out;
}

Var policy_logits(Tape& tape, const NmtParams& params, Var output, const Dropout& dropout) {
  return tape.matvec(tape.param(params.params(), params.layout().output), dropout.apply(tape, output));
}

Var value_estimate(Tape& tape, const CriticParams& critic, Var output) {
  const ParamSet& p = critic.params();
  return tape.add(tape.dot(tape.param(p, critic.layout().value_w), output), tape.param(p, critic.layout().value_b));
}

StepDistribution decode_step(Tape& tape, const NmtParams& params, const DecoderState& state, TokenId y_prev,
                             const EncoderOutput& enc, Real tau) {
  StepOutput s = decoder_step(tape, params, state, y_prev, enc);
  StepDistribution d;
  d.logits = policy_logits(tape, params, s.output);
  d.probs = softmax_temperature(tape.value(d.logits).data(), tau);
  d.state = std::move(s.state);
  d.output = s.output;
  return d;
}

std::vector<Var> step_log_probs(Tape& tape, const NmtParams& params, std::span<const TokenId> source,
                                std::span<const TokenId> target, Real tau, const Dropout& dropout) {
  if (target.empty()) throw std::invalid_argument("sequence_log_prob: empty target");
  check_ids(target, params.dims().tgt_vocab, "sequence_log_prob");
  EncoderOutput enc = encode(tape, params, source, dropout);
  DecoderState state = initial_state(tape, params, enc);
  std::vector<Var> out;
  out.reserve(target.size());
  TokenId prev = Vocabulary::kBos;
  for (TokenId y : target) {
    StepOutput s = decoder_step(tape, params, state, prev, enc, dropout);
    Var logits = policy_logits(tape, params, s.output, dropout);
    out.push_back(tape.log_softmax_at(logits, y, tau));
    state = std::move(s.state);
    prev = y;
  }
  return out;
}

Var sequence_log_prob(Tape& tape, const NmtParams& params, std::span<const TokenId> source,
                      std::span<const TokenId> target, Real tau, const Dropout& dropout) {
  std::vector<Var> steps = step_log_probs(tape, params, source, target, tau, dropout);
  Var total = steps.front();
  for (std::size_t i = 1; i < steps.size(); ++i) total = tape.add(total, steps[i]);
  return total;
}

Real sequence_log_prob(const NmtParams& params, std::span<const TokenId> source, std::span<const TokenId> target) {
  Tape tape;
  return tape.value(sequence_log_prob(tape, params, source, target)).item();
}

std::size_t DecodeConfig::max_len_for(std::size_t source_length) const {
  if (max_len) return *max_len;
  return std::min(max_len_factor * source_length + max_len_offset, max_len_cap);
}

void DecodeConfig::validate() const {
  if (!(tau > 0.0)) throw std::invalid_argument("decode: tau must be positive");
  if (mode == DecodeMode::kBeam && beam_width == 0) throw std::invalid_argument("decode: beam_width must be >= 1");
  if (max_len && *max_len == 0) throw std::invalid_argument("decode: max_len must be >= 1");
  if (!max_len && max_len_cap == 0) throw std::invalid_argument("decode: max_len_cap must be >= 1");
}

Real Hypothesis::score() const {
  Real s = 0.0;
  for (Real lp : log_probs) s += lp;
  return s;
}

std::vector<Real> log_softmax(std::span<const Real> logits, Real tau) {
  if (logits.empty()) throw std::invalid_argument("log_softmax: empty logits");
  if (!(tau > 0.0)) throw std::invalid_argument("log_softmax: tau must be positive");
  const Real top = *std::max_element(logits.begin(), logits.end());
  Real total = 0.0;
  for (Real z : logits) total += std::exp((z - top) / tau);
  const Real log_total = std::log(total);
  std::vector<Real> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = (logits[i] - top) / tau - log_total;
  return out;
}

TokenId sample_token(std::span<const Real> probs, std::mt19937_64& rng) {
  std::uniform_real_distribution<Real> unit(0.0, 1.0);
  const Real u = unit(rng);
  Real cumulative = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    cumulative += probs[i];
    if (u < cumulative) return static_cast<TokenId>(i);
  }
  // Rounding left u above the final cumulative sum: take the last token with mass.
  for (std::size_t i = probs.size(); i-- > 0;)
    if (probs[i] > 0.0) return static_cast<TokenId>(i);
  return 0;
}

namespace {

Hypothesis decode_single_path(const NmtParams& params, std::span<const TokenId> source, const DecodeConfig& config) {
  const std::size_t max_len = config.max_len_for(source.size());
  const bool sampling = config.mode == DecodeMode::kSample;
  const Real tau = sampling ? config.tau : 1.0;
  std::mt19937_64 rng(config.seed);

  Tape tape;
  EncoderOutput enc = encode(tape, params, source);
  DecoderState state = initial_state(tape, params, enc);
  Hypothesis hyp;
  TokenId prev = Vocabulary::kBos;
  while (hyp.tokens.size() < max_len) {
    StepOutput s = decoder_step(tape, params, state, prev, enc);
    Var logits = policy_logits(tape, params, s.output);
    std::vector<Real> logp = log_softmax(tape.value(logits).data(), tau);
    TokenId next;
    if (sampling) {
      std::vector<Real> probs(logp.size());
      std::transform(logp.begin(), logp.end(), probs.begin(), [](Real v) { return std::exp(v); });
      next = sample_token(probs, rng);
    } else {
      next = static_cast<TokenId>(argmax(logp));
    }
    hyp.tokens.push_back(next);
    hyp.log_probs.push_back(logp[next]);
    if (next == Vocabulary::kEos) break;
    state = std::move(s.state);
    prev = next;
  }
  return hyp;
}

struct BeamEntry {
  Hypothesis hyp;
  DecoderState state;  // state before consuming the last token
};

bool ranks_before(const Hypothesis& a, Real score_a, const Hypothesis& b, Real score_b) {
  if (score_a != score_b) return score_a > score_b;
  return a.tokens < b.tokens;
}

Hypothesis decode_beam(const NmtParams& params, std::span<const TokenId> source, const DecodeConfig& config) {
  const std::size_t max_len = config.max_len_for(source.size());
  const std::size_t width = config.beam_width;
  Tape tape;
  EncoderOutput enc = encode(tape, params, source);

  std::vector<BeamEntry> live;
  live.push_back({Hypothesis{}, initial_state(tape, params, enc)});
  std::vector<Hypothesis> finished;

  struct Candidate {
    std::size_t parent;
    TokenId token;
    Real score;
    Real log_prob;
  };

  while (!live.empty()) {
    std::vector<Candidate> candidates;
    std::vector<DecoderState> next_states;
    next_states.reserve(live.size());
    for (std::size_t p = 0; p < live.size(); ++p) {
      const BeamEntry& entry = live[p];
      const TokenId prev = entry.hyp.tokens.empty() ? Vocabulary::kBos : entry.hyp.tokens.back();
      StepOutput s = decoder_step(tape, params, entry.state, prev, enc);
      Var logits = policy_logits(tape, params, s.output);
      std::vector<Real> logp = log_softmax(tape.value(logits).data());
      const Real base = entry.hyp.score();
      for (std::size_t k = 0; k < logp.size(); ++k)
        candidates.push_back({p, static_cast<TokenId>(k), base + logp[k], logp[k]});
      next_states.push_back(std::move(s.state));
    }
    auto better = [&](const Candidate& a, const Candidate& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.parent != b.parent) return live[a.parent].hyp.tokens < live[b.parent].hyp.tokens;
      // Same prefix: compare the step term itself so rounding in the running
      // sum cannot reorder siblings (keeps width 1 identical to greedy).
      if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
      return a.token < b.token;
    };
    const std::size_t keep = std::min(width, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                      better);

    std::vector<BeamEntry> next_live;
    for (std::size_t i = 0; i < keep; ++i) {
      const Candidate& c = candidates[i];
      Hypothesis h = live[c.parent].hyp;
      h.tokens.push_back(c.token);
      h.log_probs.push_back(c.log_prob);
      if (c.token == Vocabulary::kEos || h.tokens.size() >= max_len)
        finished.push_back(std::move(h));
      else
        next_live.push_back({std::move(h), next_states[c.parent]});
    }
    live = std::move(next_live);

    if (!finished.empty() && !live.empty()) {
      Real best_finished = finished.front().score();
      for (const auto& f : finished) best_finished = std::max(best_finished, f.score());
      Real best_live = live.front().hyp.score();
      for (const auto& l : live) best_live = std::max(best_live, l.hyp.score());
      // Log-probabilities only decrease, so no live extension can overtake.
      if (best_finished > best_live) break;
    }
  }

  auto best = std::min_element(finished.begin(), finished.end(), [](const Hypothesis& a, const Hypothesis& b) {
    return ranks_before(a, a.score(), b, b.score());
  });
  return *best;
}

}  // namespace

Hypothesis decode(const NmtParams& params, std::span<const TokenId> source, const DecodeConfig& config) {
  config.validate();
  if (config.mode == DecodeMode::kBeam) return decode_beam(params, source, config);
  return decode_single_path(params, source, config);
}

}  // namespace banditmt
