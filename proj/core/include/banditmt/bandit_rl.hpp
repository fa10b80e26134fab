#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "banditmt/codec.hpp"
#include "banditmt/model.hpp"
#include "banditmt/optim.hpp"
#include "banditmt/seq2seq.hpp"
#include "banditmt/tape.hpp"

namespace banditmt {

struct RewardTriple {
  std::uint64_t id = 0;
  std::vector<TokenId> source;
  std::vector<TokenId> hypothesis;
  Real reward = 0.0;
};

/// Word-level form of a triple, as written to and read from triple logs.
struct TripleRecord {
  std::uint64_t id = 0;
  std::string source;
  std::string hypothesis;
  Real reward = 0.0;
};

struct A2cConfig {
  Real tau = 2.0 / 3.0;
  Real actor_lr = 1e-4;
  Real critic_lr = 1e-4;
  std::size_t batch_size = 64;
  std::size_t pretrain_triples = 20000;
  std::size_t pretrain_epochs = 5;
  Real pretrain_heldout = 0.1;
  void validate() const;
};

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---- critic ----------------------------------------------------------------

/// V_1..V_m: the value head after the critic decoder has consumed y_<t.
std::vector<Var> critic_values(Tape& tape, const CriticParams& critic, std::span<const TokenId> source,
                               std::span<const TokenId> hypothesis);
std::vector<Real> critic_values(const CriticParams& critic, std::span<const TokenId> source,
                                std::span<const TokenId> hypothesis);

/// sum_t (R - V_t)^2
Real critic_loss(const CriticParams& critic, const RewardTriple& triple);

/// Gradient of the squared-error loss by differentiating the loss graph.
Gradients critic_gradient_autodiff(const CriticParams& critic, const RewardTriple& triple);

/// -2 sum_t (R - V_t) dV_t/domega, with the residuals held constant.
Gradients critic_gradient(const CriticParams& critic, const RewardTriple& triple, Real* loss = nullptr);

/// One Adam step on a single triple; returns the loss before the step.
Real critic_update(CriticParams& critic, const RewardTriple& triple, AdamState& adam);

struct PretrainReport {
  std::vector<Real> epoch_train_mse;
  Real heldout_mse = 0.0;
  Real zero_predictor_mse = 0.0;
  std::size_t train_size = 0;
  std::size_t heldout_size = 0;
};

/// Per-triple critic_update passes over a seeded shuffle, with a held-out
/// slice for reporting. MSE is averaged over target positions.
PretrainReport pretrain_critic(CriticParams& critic, std::span<const RewardTriple> triples, const A2cConfig& config,
                               std::uint64_t seed);

/// Mean of (R - V_t)^2 over every target position of `triples`.
Real critic_mse(const CriticParams& critic, std::span<const RewardTriple> triples);

// ---- actor -----------------------------------------------------------------

/// Gradient of R * sum_t log P(y_t | y_<t, x) (ascent direction).
Gradients reinforce_gradient(const NmtParams& params, std::span<const TokenId> source,
                             std::span<const TokenId> hypothesis, Real reward, Real tau = 1.0);

/// sum_t (R - V_t) log P(y_t | y_<t, x) on `tape`; R and V enter only as
/// constant coefficients.
Var a2c_surrogate(Tape& tape, const NmtParams& params, std::span<const TokenId> source,
                  std::span<const TokenId> hypothesis, Real reward, std::span<const Real> values, Real tau = 1.0);

Gradients a2c_gradient(const NmtParams& params, std::span<const TokenId> source, std::span<const TokenId> hypothesis,
                       Real reward, std::span<const Real> values, Real tau = 1.0);
Gradients a2c_gradient(const NmtParams& params, const CriticParams& critic, std::span<const TokenId> source,
                       std::span<const TokenId> hypothesis, Real reward, Real tau = 1.0);

// ---- batching --------------------------------------------------------------

/// Sampled translations waiting for their rewards, keyed by sentence id.
/// All operations are mutually atomic.
class RewardCache {
 public:
  struct Entry {
    std::uint64_t id = 0;
    std::vector<TokenId> source;
    Hypothesis hypothesis;
    std::optional<Real> reward;
  };

  /// Throws ProtocolError("duplicate id") when the id was already submitted.
  void submit(Entry entry);
  /// Throws ProtocolError "unknown id", "duplicate id" or "reward out of range".
  void resolve(std::uint64_t id, Real reward);

  std::size_t pending() const;
  std::size_t completed() const;
  /// Removes up to `n` completed entries, smallest ids first.
  std::vector<Entry> take_completed(std::size_t n);

 private:
  mutable std::mutex mutex_;
  std::map<std::uint64_t, Entry> pending_;
  std::map<std::uint64_t, Entry> completed_;
  std::set<std::uint64_t> consumed_;
};

struct UpdateStats {
  std::size_t batch = 0;
  Real mean_reward = 0.0;
  Real critic_loss = 0.0;  // mean per-sentence loss before the step
  Real actor_grad_norm = 0.0;
  Real critic_grad_norm = 0.0;
};

/// Samples at temperature tau, caches translations until `batch_size` rewards
/// are in, then takes one Adam step for the policy and one for the critic.
class A2cLearner {
 public:
  A2cLearner(NmtParams& policy, CriticParams& critic, A2cConfig config, std::uint64_t seed);

  const A2cConfig& config() const { return config_; }
  RewardCache& cache() { return cache_; }

  /// Deterministic in (seed, id); the translation is cached as pending.
  Hypothesis sample(std::uint64_t id, std::span<const TokenId> source);
  void reward(std::uint64_t id, Real value) { cache_.resolve(id, value); }
  bool ready() const { return cache_.completed() >= config_.batch_size; }

  /// Consumes exactly batch_size completed entries; throws std::logic_error
  /// when fewer are available.
  UpdateStats update();
  /// Consumes all completed entries without an update.
  std::vector<RewardTriple> drain();

  std::size_t actor_updates() const { return actor_updates_; }
  std::size_t critic_updates() const { return critic_updates_; }
  const std::vector<RewardTriple>& consumed() const { return consumed_; }

 private:
  NmtParams& policy_;
  CriticParams& critic_;
  A2cConfig config_;
  std::uint64_t seed_;
  AdamState actor_adam_;
  AdamState critic_adam_;
  RewardCache cache_;
  std::size_t actor_updates_ = 0;
  std::size_t critic_updates_ = 0;
  std::vector<RewardTriple> consumed_;
};

// ---- feedback loop ---------------------------------------------------------

struct SourceItem {
  std::uint64_t id = 0;
  Sentence text;
};

struct RewardEvent {
  std::uint64_t id = 0;
  Real value = 0.0;
};

/// Where source sentences come from and where rewards come back.
class FeedbackChannel {
 public:
  virtual ~FeedbackChannel() = default;
  /// nullopt once the stream is exhausted.
  virtual std::optional<SourceItem> next_source() = 0;
  virtual void submit(std::uint64_t id, const Sentence& translation) = 0;
  /// Blocks until a reward arrives.
  virtual RewardEvent next_reward() = 0;
};

/// In-process feedback: scores submissions against hidden references.
class SimulatedFeedback : public FeedbackChannel {
 public:
  enum class Delivery { kInOrder, kReversed };

  SimulatedFeedback(std::vector<Sentence> sources, std::vector<Sentence> references,
                    Delivery delivery = Delivery::kInOrder);

  std::optional<SourceItem> next_source() override;
  void submit(std::uint64_t id, const Sentence& translation) override;
  RewardEvent next_reward() override;

  std::size_t submitted() const { return submitted_; }

 private:
  std::vector<Sentence> sources_;
  std::vector<Sentence> references_;
  Delivery delivery_;
  std::size_t next_ = 0;
  std::size_t submitted_ = 0;
  std::vector<RewardEvent> queue_;
};

struct BanditLoopOptions {
  bool reverse_submission = false;  // submit each batch in descending id order
  std::size_t limit = 0;            // stop after this many sentences; 0 = whole stream
  std::function<void(const UpdateStats&)> on_update;
  std::function<void(const std::string&)> on_error;
};

struct BanditLog {
  std::vector<TripleRecord> triples;  // in consumption order
  std::vector<Real> rewards;          // same order as triples
  std::size_t actor_updates = 0;
  std::size_t critic_updates = 0;
  std::size_t protocol_errors = 0;
  std::size_t dropped_tail = 0;  // rewards consumed by the final partial batch without an update
};

/// Rounds of: fetch batch_size sources, sample and submit all, wait for every
/// reward, update. A trailing partial batch is logged but not trained on.
BanditLog run_bandit_loop(A2cLearner& learner, FeedbackChannel& channel, const TextCodec& codec,
                          const BanditLoopOptions& options = {});

void write_triples_csv(const std::filesystem::path& path, std::span<const TripleRecord> triples);
std::vector<TripleRecord> read_triples_csv(const std::filesystem::path& path);
std::vector<RewardTriple> encode_triples(std::span<const TripleRecord> records, const TextCodec& codec);

}  // namespace banditmt
