#include "banditmt/bandit_rl.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "banditmt/csv.hpp"
#include "banditmt/metrics.hpp"

namespace banditmt {
namespace {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

Var sum_all(Tape& tape, std::span<const Var> terms) {
  Var total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) total = tape.add(total, terms[i]);
  return total;
}

void check_reward(Real r) {
  if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("reward must lie in [0,1]");
}

}  // namespace

void A2cConfig::validate() const {
  if (!(tau > 0.0)) throw std::invalid_argument("a2c.tau must be positive");
  if (!(actor_lr > 0.0)) throw std::invalid_argument("a2c.actor_lr must be positive");
  if (!(critic_lr > 0.0)) throw std::invalid_argument("a2c.critic_lr must be positive");
  if (batch_size == 0) throw std::invalid_argument("a2c.batch_size must be >= 1");
  if (!(pretrain_heldout >= 0.0 && pretrain_heldout < 1.0))
    throw std::invalid_argument("a2c.pretrain_heldout must be in [0,1)");
}

std::vector<Var> critic_values(Tape& tape, const CriticParams& critic, std::span<const TokenId> source,
                               std::span<const TokenId> hypothesis) {
  if (hypothesis.empty()) throw std::invalid_argument("critic_values: empty hypothesis");
  EncoderOutput enc = encode(tape, critic, source);
  DecoderState state = initial_state(tape, critic, enc);
  std::vector<Var> values;
  values.reserve(hypothesis.size());
  TokenId prev = Vocabulary::kBos;
  for (TokenId y : hypothesis) {
    StepOutput s = decoder_step(tape, critic, state, prev, enc);
    values.push_back(value_estimate(tape, critic, s.output));
    state = std::move(s.state);
    prev = y;
  }
  return values;
}

std::vector<Real> critic_values(const CriticParams& critic, std::span<const TokenId> source,
                                std::span<const TokenId> hypothesis) {
  Tape tape;
  std::vector<Real> out;
  for (Var v : critic_values(tape, critic, source, hypothesis)) out.push_back(tape.value(v).item());
  return out;
}

Real critic_loss(const CriticParams& critic, const RewardTriple& triple) {
  Real loss = 0.0;
  for (Real v : critic_values(critic, triple.source, triple.hypothesis)) loss += (triple.reward - v) * (triple.reward - v);
  return loss;
}

Gradients critic_gradient_autodiff(const CriticParams& critic, const RewardTriple& triple) {
  Tape tape;
  const Var target = tape.constant(Array::scalar(triple.reward));
  std::vector<Var> terms;
  for (Var v : critic_values(tape, critic, triple.source, triple.hypothesis)) {
    Var diff = tape.sub(target, v);
    terms.push_back(tape.mul(diff, diff));
  }
  return backward(tape, sum_all(tape, terms), critic.params());
}

Gradients critic_gradient(const CriticParams& critic, const RewardTriple& triple, Real* loss) {
  Tape tape;
  std::vector<Var> values = critic_values(tape, critic, triple.source, triple.hypothesis);
  std::vector<Var> terms;
  Real total = 0.0;
  for (Var v : values) {
    const Real residual = triple.reward - tape.value(v).item();
    total += residual * residual;
    terms.push_back(tape.scale(v, -2.0 * residual));
  }
  if (loss) *loss = total;
  return backward(tape, sum_all(tape, terms), critic.params());
}

Real critic_update(CriticParams& critic, const RewardTriple& triple, AdamState& adam) {
  Real loss = 0.0;
  Gradients g = critic_gradient(critic, triple, &loss);
  adam_step(critic.params(), g, adam);
  return loss;
}

Real critic_mse(const CriticParams& critic, std::span<const RewardTriple> triples) {
  Real sq = 0.0;
  std::size_t n = 0;
  for (const auto& t : triples) {
    for (Real v : critic_values(critic, t.source, t.hypothesis)) sq += (t.reward - v) * (t.reward - v);
    n += t.hypothesis.size();
  }
  return n == 0 ? 0.0 : sq / static_cast<Real>(n);
}

PretrainReport pretrain_critic(CriticParams& critic, std::span<const RewardTriple> triples, const A2cConfig& config,
                               std::uint64_t seed) {
  if (triples.empty()) throw std::invalid_argument("pretrain_critic: no triples");
  config.validate();
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(triples.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  const auto held = static_cast<std::size_t>(config.pretrain_heldout * static_cast<Real>(triples.size()));
  std::vector<RewardTriple> heldout;
  std::vector<std::size_t> train;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i < held && held < triples.size()) heldout.push_back(triples[order[i]]);
    else train.push_back(order[i]);
  }
  if (heldout.empty()) heldout.assign(triples.begin(), triples.end());

  PretrainReport report;
  report.train_size = train.size();
  report.heldout_size = heldout.size();
  AdamState adam(critic.params(), config.critic_lr);
  for (std::size_t epoch = 0; epoch < config.pretrain_epochs; ++epoch) {
    std::shuffle(train.begin(), train.end(), rng);
    Real loss = 0.0;
    std::size_t tokens = 0;
    for (std::size_t i : train) {
      loss += critic_update(critic, triples[i], adam);
      tokens += triples[i].hypothesis.size();
    }
    report.epoch_train_mse.push_back(loss / static_cast<Real>(std::max<std::size_t>(tokens, 1)));
  }
  report.heldout_mse = critic_mse(critic, heldout);
  Real zero = 0.0;
  std::size_t n = 0;
  for (const auto& t : heldout) {
    zero += t.reward * t.reward * static_cast<Real>(t.hypothesis.size());
    n += t.hypothesis.size();
  }
  report.zero_predictor_mse = zero / static_cast<Real>(n);
  return report;
}

Gradients reinforce_gradient(const NmtParams& params, std::span<const TokenId> source,
                             std::span<const TokenId> hypothesis, Real reward, Real tau) {
  Tape tape;
  Var lp = sequence_log_prob(tape, params, source, hypothesis, tau);
  return backward(tape, tape.scale(lp, reward), params.params());
}

Var a2c_surrogate(Tape& tape, const NmtParams& params, std::span<const TokenId> source,
                  std::span<const TokenId> hypothesis, Real reward, std::span<const Real> values, Real tau) {
  if (values.size() != hypothesis.size())
    throw std::invalid_argument("a2c_gradient: " + std::to_string(values.size()) + " values for " +
                                std::to_string(hypothesis.size()) + " tokens");
  std::vector<Var> steps = step_log_probs(tape, params, source, hypothesis, tau);
  for (std::size_t t = 0; t < steps.size(); ++t) steps[t] = tape.scale(steps[t], reward - values[t]);
  return sum_all(tape, steps);
}

Gradients a2c_gradient(const NmtParams& params, std::span<const TokenId> source, std::span<const TokenId> hypothesis,
                       Real reward, std::span<const Real> values, Real tau) {
  Tape tape;
  Var s = a2c_surrogate(tape, params, source, hypothesis, reward, values, tau);
  return backward(tape, s, params.params());
}

Gradients a2c_gradient(const NmtParams& params, const CriticParams& critic, std::span<const TokenId> source,
                       std::span<const TokenId> hypothesis, Real reward, Real tau) {
  const std::vector<Real> values = critic_values(critic, source, hypothesis);
  return a2c_gradient(params, source, hypothesis, reward, values, tau);
}

void RewardCache::submit(Entry entry) {
  std::lock_guard lock(mutex_);
  const std::uint64_t id = entry.id;
  if (pending_.count(id) || completed_.count(id) || consumed_.count(id)) throw ProtocolError("duplicate id");
  entry.reward.reset();
  pending_.emplace(id, std::move(entry));
}

void RewardCache::resolve(std::uint64_t id, Real reward) {
  std::lock_guard lock(mutex_);
  auto it = pending_.find(id);
  if (it == pending_.end()) {
    if (completed_.count(id) || consumed_.count(id)) throw ProtocolError("duplicate id");
    throw ProtocolError("unknown id");
  }
  if (!(reward >= 0.0 && reward <= 1.0)) throw ProtocolError("reward out of range");
  it->second.reward = reward;
  completed_.insert(pending_.extract(it));
}

std::size_t RewardCache::pending() const {
  std::lock_guard lock(mutex_);
  return pending_.size();
}

std::size_t RewardCache::completed() const {
  std::lock_guard lock(mutex_);
  return completed_.size();
}

std::vector<RewardCache::Entry> RewardCache::take_completed(std::size_t n) {
  std::lock_guard lock(mutex_);
  std::vector<Entry> out;
  while (out.size() < n && !completed_.empty()) {
    auto node = completed_.extract(completed_.begin());
    consumed_.insert(node.key());
    out.push_back(std::move(node.mapped()));
  }
  return out;
}

A2cLearner::A2cLearner(NmtParams& policy, CriticParams& critic, A2cConfig config, std::uint64_t seed)
    : policy_(policy),
      critic_(critic),
      config_(config),
      seed_(seed),
      actor_adam_(policy.params(), config.actor_lr),
      critic_adam_(critic.params(), config.critic_lr) {
  config_.validate();
}

Hypothesis A2cLearner::sample(std::uint64_t id, std::span<const TokenId> source) {
  DecodeConfig dc;
  dc.mode = DecodeMode::kSample;
  dc.tau = config_.tau;
  dc.seed = mix64(seed_ ^ mix64(id));
  Hypothesis h = decode(policy_, source, dc);
  if (h.tokens.empty()) throw std::logic_error("sampler produced an empty translation");
  cache_.submit({id, std::vector<TokenId>(source.begin(), source.end()), h, std::nullopt});
  return h;
}

UpdateStats A2cLearner::update() {
  const std::size_t b = config_.batch_size;
  if (cache_.completed() < b) throw std::logic_error("a2c update needs a full batch of rewards");
  std::vector<RewardCache::Entry> batch = cache_.take_completed(b);

  UpdateStats stats;
  stats.batch = batch.size();
  Gradients actor = zero_gradients(policy_.params());
  Gradients critic = zero_gradients(critic_.params());
  for (const auto& e : batch) {
    const Real r = *e.reward;
    const RewardTriple triple{e.id, e.source, e.hypothesis.tokens, r};
    const std::vector<Real> values = critic_values(critic_, e.source, e.hypothesis.tokens);
    accumulate(actor, a2c_gradient(policy_, e.source, e.hypothesis.tokens, r, values, config_.tau),
               -1.0 / static_cast<Real>(b));
    Real loss = 0.0;
    accumulate(critic, critic_gradient(critic_, triple, &loss), 1.0 / static_cast<Real>(b));
    stats.mean_reward += r / static_cast<Real>(b);
    stats.critic_loss += loss / static_cast<Real>(b);
    consumed_.push_back(triple);
  }
  stats.actor_grad_norm = global_norm(actor);
  stats.critic_grad_norm = global_norm(critic);
  adam_step(policy_.params(), actor, actor_adam_);
  adam_step(critic_.params(), critic, critic_adam_);
  ++actor_updates_;
  ++critic_updates_;
  return stats;
}

std::vector<RewardTriple> A2cLearner::drain() {
  std::vector<RewardTriple> out;
  for (auto& e : cache_.take_completed(cache_.completed())) {
    out.push_back({e.id, std::move(e.source), std::move(e.hypothesis.tokens), *e.reward});
    consumed_.push_back(out.back());
  }
  return out;
}

SimulatedFeedback::SimulatedFeedback(std::vector<Sentence> sources, std::vector<Sentence> references,
                                     Delivery delivery)
    : sources_(std::move(sources)), references_(std::move(references)), delivery_(delivery) {
  if (sources_.size() != references_.size()) throw std::invalid_argument("simulated feedback: side lengths differ");
}

std::optional<SourceItem> SimulatedFeedback::next_source() {
  if (next_ >= sources_.size()) return std::nullopt;
  SourceItem item{next_, sources_[next_]};
  ++next_;
  return item;
}

void SimulatedFeedback::submit(std::uint64_t id, const Sentence& translation) {
  if (id >= next_) throw ProtocolError("unknown id");
  const Real r = sentence_reward(translation, references_[id]);
  check_reward(r);
  queue_.push_back({id, r});
  ++submitted_;
}

RewardEvent SimulatedFeedback::next_reward() {
  if (queue_.empty()) throw std::logic_error("simulated feedback: no reward pending");
  RewardEvent ev;
  if (delivery_ == Delivery::kReversed) {
    ev = queue_.back();
    queue_.pop_back();
  } else {
    ev = queue_.front();
    queue_.erase(queue_.begin());
  }
  return ev;
}

BanditLog run_bandit_loop(A2cLearner& learner, FeedbackChannel& channel, const TextCodec& codec,
                          const BanditLoopOptions& options) {
  BanditLog log;
  const std::size_t b = learner.config().batch_size;
  std::map<std::uint64_t, TripleRecord> texts;
  std::size_t seen = 0;
  bool exhausted = false;

  auto record = [&](const std::vector<RewardTriple>& consumed) {
    for (const auto& t : consumed) {
      auto it = texts.find(t.id);
      TripleRecord rec = it->second;
      rec.reward = t.reward;
      log.triples.push_back(rec);
      log.rewards.push_back(t.reward);
      texts.erase(it);
    }
  };

  while (!exhausted) {
    std::vector<std::pair<std::uint64_t, Sentence>> round;
    while (round.size() < b && (options.limit == 0 || seen < options.limit)) {
      std::optional<SourceItem> src = channel.next_source();
      if (!src) break;
      ++seen;
      const std::vector<TokenId> ids = codec.encode_source(src->text);
      const Hypothesis h = learner.sample(src->id, ids);
      Sentence words = codec.decode_target(h.tokens);
      texts[src->id] = {src->id, join(src->text), join(words), 0.0};
      round.emplace_back(src->id, std::move(words));
    }
    if (round.size() < b) exhausted = true;
    if (round.empty()) break;
    if (options.reverse_submission) std::reverse(round.begin(), round.end());
    for (const auto& [id, words] : round) channel.submit(id, words);

    std::size_t received = 0;
    while (received < round.size()) {
      const RewardEvent ev = channel.next_reward();
      try {
        learner.reward(ev.id, ev.value);
        ++received;
      } catch (const ProtocolError& e) {
        ++log.protocol_errors;
        if (options.on_error) options.on_error(std::string(e.what()) + " (id " + std::to_string(ev.id) + ")");
      }
    }

    const std::size_t before = learner.consumed().size();
    if (learner.ready()) {
      UpdateStats stats = learner.update();
      if (options.on_update) options.on_update(stats);
    } else {
      log.dropped_tail += learner.drain().size();
    }
    record(std::vector<RewardTriple>(learner.consumed().begin() + static_cast<std::ptrdiff_t>(before),
                                     learner.consumed().end()));
  }
  log.actor_updates = learner.actor_updates();
  log.critic_updates = learner.critic_updates();
  return log;
}

void write_triples_csv(const std::filesystem::path& path, std::span<const TripleRecord> triples) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write triple log " + path.string());
  out << "id,source,hypothesis,reward\n";
  out.precision(17);
  for (const auto& t : triples)
    out << t.id << ',' << csv_field(t.source) << ',' << csv_field(t.hypothesis) << ',' << t.reward << '\n';
}

std::vector<TripleRecord> read_triples_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open triple log " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("id,source,hypothesis,reward", 0) != 0)
    throw std::runtime_error("triple log " + path.string() + ": missing header");
  std::vector<TripleRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> f = csv_split(line);
    if (f.size() != 4) throw std::runtime_error("triple log " + path.string() + ": bad line " + std::to_string(lineno));
    TripleRecord t{std::stoull(f[0]), f[1], f[2], std::stod(f[3])};
    check_reward(t.reward);
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<RewardTriple> encode_triples(std::span<const TripleRecord> records, const TextCodec& codec) {
  std::vector<RewardTriple> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    const Sentence src = tokenize(r.source);
    if (src.empty()) continue;
    out.push_back({r.id, codec.encode_source(src), codec.encode_target(tokenize(r.hypothesis)), r.reward});
  }
  return out;
}

}  // namespace banditmt
