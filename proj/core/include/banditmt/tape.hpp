#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "banditmt/array.hpp"
#include "banditmt/params.hpp"

namespace banditmt {

/// Handle to a node recorded on a Tape.
struct Var {
  static constexpr std::uint32_t kInvalid = std::numeric_limits<std::uint32_t>::max();
  std::uint32_t id = kInvalid;

  bool valid() const { return id != kInvalid; }
  bool operator==(const Var&) const = default;
};

enum class OpKind : std::uint8_t {
  kParameter,
  kConstant,
  kAdd,
  kSub,
  kMul,
  kScale,
  kSigmoid,
  kTanh,
  kMatVec,
  kMatMulT,
  kConcat,
  kSlice,
  kRow,
  kStackRows,
  kDot,
  kSum,
  kAttnScores,
  kSoftmax,
  kMatTVec,
  kLogSoftmaxAt,
};

std::string_view op_name(OpKind op);

struct TapeEntry {
  OpKind op = OpKind::kConstant;
  std::vector<std::uint32_t> inputs;
  Array value;
  Array aux;
  Real attr = 0.0;
  std::size_t offset = 0;
  std::size_t length = 0;
  // Parameter leaves only.
  const ParamSet* owner = nullptr;
  std::size_t param_index = 0;
};

/// Records primitive operations on dense arrays and replays them in reverse to
/// produce gradients. Parameter leaves reference their ParamSet, which must
/// outlive the tape and stay unmodified until gradients are read.
class Tape {
 public:
  Tape() = default;
  Tape(Tape&&) noexcept = default;
  Tape& operator=(Tape&&) noexcept = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var param(const ParamSet& set, std::size_t index);
  Var constant(Array value);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, Real factor);
  Var sigmoid(Var a);
  Var tanh(Var a);
  /// W[m x n] * x[n]
  Var matvec(Var w, Var x);
  /// X[n x k] * W[m x k]^T
  Var matmul_t(Var x, Var w);
  /// M[n x c]^T * a[n]
  Var mat_t_vec(Var m, Var a);
  Var concat(std::span<const Var> parts);
  Var concat(std::initializer_list<Var> parts) { return concat(std::span<const Var>(parts.begin(), parts.size())); }
  Var slice(Var a, std::size_t begin, std::size_t length);
  Var row(Var m, std::size_t r);
  Var stack_rows(std::span<const Var> rows);
  Var dot(Var a, Var b);
  Var sum(Var a);
  /// s_i = v . tanh(P_i + q) for each row i of P[n x A].
  Var attn_scores(Var keys, Var query, Var v);
  Var softmax(Var a, Real tau = 1.0);
  /// log softmax(z / tau)[index]
  Var log_softmax_at(Var logits, std::size_t index, Real tau = 1.0);

  const Array& value(Var v) const;
  const TapeEntry& entry(Var v) const { return entries_.at(v.id); }
  std::span<const TapeEntry> entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  /// Reverse sweep from a scalar node. Throws std::invalid_argument otherwise.
  void backward(Var loss);
  /// Adjoint of a node after backward(); zeros if no path to the loss.
  Array adjoint(Var v) const;
  /// Per-parameter gradients for `set`, zeros for parameters not on the tape.
  Gradients gradients(const ParamSet& set) const;

  /// Whether any parameter leaf of `set` was recorded.
  bool references(const ParamSet& set) const;

 private:
  Var push(TapeEntry entry, std::string_view what);
  const Array& val(std::uint32_t id) const;
  Array& grad(std::uint32_t id);

  std::vector<TapeEntry> entries_;
  std::vector<Array> adjoints_;
  std::vector<std::pair<const ParamSet*, std::vector<std::uint32_t>>> leaves_;
};

/// Runs backward() and collects the gradients of `set`.
Gradients backward(Tape& tape, Var loss, const ParamSet& set);

struct LstmOutput {
  Var h;
  Var c;
};

/// Standard LSTM step: gates = W[x; h_prev] + b split as (input, forget, cell, output).
/// W is [4H x (D + H)], b is [4H].
LstmOutput lstm_cell(Tape& tape, Var w, Var b, Var x, Var h_prev, Var c_prev);

}  // namespace banditmt
