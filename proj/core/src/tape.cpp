#include "banditmt/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace banditmt {
namespace {

Real sigmoid_scalar(Real x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const Real e = std::exp(x);
  return e / (1.0 + e);
}

void require(bool ok, std::string_view op, const std::string& detail) {
  if (!ok) throw std::invalid_argument(std::string(op) + ": " + detail);
}

}  // namespace

std::string_view op_name(OpKind op) {
  switch (op) {
    case OpKind::kParameter: return "parameter";
    case OpKind::kConstant: return "constant";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kTanh: return "tanh";
    case OpKind::kMatVec: return "matvec";
    case OpKind::kMatMulT: return "matmul_t";
    case OpKind::kConcat: return "concat";
    case OpKind::kSlice: return "slice";
    case OpKind::kRow: return "row";
    case OpKind::kStackRows: return "stack_rows";
    case OpKind::kDot: return "dot";
    case OpKind::kSum: return "sum";
    case OpKind::kAttnScores: return "attn_scores";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kMatTVec: return "mat_t_vec";
    case OpKind::kLogSoftmaxAt: return "log_softmax_at";
  }
  return "unknown";
}

const Array& Tape::val(std::uint32_t id) const {
  const TapeEntry& e = entries_[id];
  return e.op == OpKind::kParameter ? e.owner->value(e.param_index) : e.value;
}

const Array& Tape::value(Var v) const {
  if (!v.valid() || v.id >= entries_.size()) throw std::out_of_range("tape: invalid node");
  return val(v.id);
}

Var Tape::push(TapeEntry entry, std::string_view what) {
  if (entry.op != OpKind::kParameter && !entry.value.all_finite())
    throw std::domain_error("tape: non-finite value produced by " + std::string(what));
  for (std::uint32_t in : entry.inputs)
    if (in >= entries_.size()) throw std::out_of_range("tape: input node out of range");
  entries_.push_back(std::move(entry));
  return Var{static_cast<std::uint32_t>(entries_.size() - 1)};
}

Var Tape::param(const ParamSet& set, std::size_t index) {
  if (index >= set.size()) throw std::out_of_range("tape: parameter index out of range");
  auto it = std::find_if(leaves_.begin(), leaves_.end(), [&](const auto& p) { return p.first == &set; });
  if (it == leaves_.end()) {
    leaves_.emplace_back(&set, std::vector<std::uint32_t>(set.size(), Var::kInvalid));
    it = std::prev(leaves_.end());
  }
  std::uint32_t& slot = it->second[index];
  if (slot != Var::kInvalid) return Var{slot};
  TapeEntry e;
  e.op = OpKind::kParameter;
  e.owner = &set;
  e.param_index = index;
  Var v = push(std::move(e), "parameter");
  slot = v.id;
  return v;
}

Var Tape::constant(Array value) {
  TapeEntry e;
  e.op = OpKind::kConstant;
  e.value = std::move(value);
  return push(std::move(e), "constant");
}

Var Tape::add(Var a, Var b) {
  const Array& x = value(a);
  const Array& y = value(b);
  require(x.shape() == y.shape(), "add", "shape mismatch " + x.shape().str() + " vs " + y.shape().str());
  TapeEntry e;
  e.op = OpKind::kAdd;
  e.inputs = {a.id, b.id};
  e.value = Array(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) e.value[i] = x[i] + y[i];
  return push(std::move(e), "add");
}

Var Tape::sub(Var a, Var b) {
  const Array& x = value(a);
  const Array& y = value(b);
  require(x.shape() == y.shape(), "sub", "shape mismatch " + x.shape().str() + " vs " + y.shape().str());
  TapeEntry e;
  e.op = OpKind::kSub;
  e.inputs = {a.id, b.id};
  e.value = Array(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) e.value[i] = x[i] - y[i];
  return push(std::move(e), "sub");
}

Var Tape::mul(Var a, Var b) {
  const Array& x = value(a);
  const Array& y = value(b);
  require(x.shape() == y.shape(), "mul", "shape mismatch " + x.shape().str() + " vs " + y.shape().str());
  TapeEntry e;
  e.op = OpKind::kMul;
  e.inputs = {a.id, b.id};
  e.value = Array(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) e.value[i] = x[i] * y[i];
  return push(std::move(e), "mul");
}

Var Tape::scale(Var a, Real factor) {
  const Array& x = value(a);
  TapeEntry e;
  e.op = OpKind::kScale;
  e.inputs = {a.id};
  e.attr = factor;
  e.value = Array(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) e.value[i] = factor * x[i];
  return push(std::move(e), "scale");
}

Var Tape::sigmoid(Var a) {
  const Array& x = value(a);
  TapeEntry e;
  e.op = OpKind::kSigmoid;
  e.inputs = {a.id};
  e.value = Array(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) e.value[i] = sigmoid_scalar(x[i]);
  return push(std::move(e), "sigmoid");
}

Var Tape::tanh(Var a) {
  const Array& x = value(a);
  TapeEntry e;
  e.op = OpKind::kTanh;
  e.inputs = {a.id};
  e.value = Array(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) e.value[i] = std::tanh(x[i]);
  return push(std::move(e), "tanh");
}

Var Tape::matvec(Var w, Var x) {
  const Array& m = value(w);
  const Array& v = value(x);
  require(m.shape().rank() == 2 && m.shape()[1] == v.size(), "matvec",
          "cannot multiply " + m.shape().str() + " by " + v.shape().str());
  const std::size_t rows = m.shape()[0];
  const std::size_t cols = m.shape()[1];
  TapeEntry e;
  e.op = OpKind::kMatVec;
  e.inputs = {w.id, x.id};
  e.value = Array(Shape{rows});
  const Real* md = m.data().data();
  const Real* vd = v.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    Real acc = 0.0;
    const Real* mr = md + r * cols;
    for (std::size_t c = 0; c < cols; ++c) acc += mr[c] * vd[c];
    e.value[r] = acc;
  }
  return push(std::move(e), "matvec");
}

Var Tape::matmul_t(Var x, Var w) {
  const Array& a = value(x);
  const Array& b = value(w);
  require(a.shape().rank() == 2 && b.shape().rank() == 2 && a.shape()[1] == b.shape()[1], "matmul_t",
          "cannot multiply " + a.shape().str() + " by transpose of " + b.shape().str());
  const std::size_t n = a.shape()[0];
  const std::size_t k = a.shape()[1];
  const std::size_t m = b.shape()[0];
  TapeEntry e;
  e.op = OpKind::kMatMulT;
  e.inputs = {x.id, w.id};
  e.value = Array(Shape{n, m});
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < m; ++j) {
      Real acc = 0.0;
      for (std::size_t c = 0; c < k; ++c) acc += a.at(r, c) * b.at(j, c);
      e.value.at(r, j) = acc;
    }
  return push(std::move(e), "matmul_t");
}

Var Tape::mat_t_vec(Var m, Var a) {
  const Array& mat = value(m);
  const Array& v = value(a);
  require(mat.shape().rank() == 2 && mat.shape()[0] == v.size(), "mat_t_vec",
          "cannot multiply transpose of " + mat.shape().str() + " by " + v.shape().str());
  const std::size_t n = mat.shape()[0];
  const std::size_t c = mat.shape()[1];
  TapeEntry e;
  e.op = OpKind::kMatTVec;
  e.inputs = {m.id, a.id};
  e.value = Array(Shape{c});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) e.value[j] += mat.at(i, j) * v[i];
  return push(std::move(e), "mat_t_vec");
}

Var Tape::concat(std::span<const Var> parts) {
  require(!parts.empty(), "concat", "no inputs");
  std::size_t total = 0;
  for (Var p : parts) total += value(p).size();
  TapeEntry e;
  e.op = OpKind::kConcat;
  e.value = Array(Shape{total});
  std::size_t at = 0;
  for (Var p : parts) {
    const Array& x = value(p);
    std::copy(x.data().begin(), x.data().end(), e.value.data().begin() + static_cast<std::ptrdiff_t>(at));
    at += x.size();
    e.inputs.push_back(p.id);
  }
  return push(std::move(e), "concat");
}

Var Tape::slice(Var a, std::size_t begin, std::size_t length) {
  const Array& x = value(a);
  require(length > 0 && begin + length <= x.size(), "slice", "range out of bounds for " + x.shape().str());
  TapeEntry e;
  e.op = OpKind::kSlice;
  e.inputs = {a.id};
  e.offset = begin;
  e.length = length;
  e.value = Array(Shape{length});
  std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>(begin), length, e.value.data().begin());
  return push(std::move(e), "slice");
}

Var Tape::row(Var m, std::size_t r) {
  const Array& mat = value(m);
  require(mat.shape().rank() == 2 && r < mat.shape()[0], "row",
          "row " + std::to_string(r) + " out of range for " + mat.shape().str());
  TapeEntry e;
  e.op = OpKind::kRow;
  e.inputs = {m.id};
  e.offset = r;
  auto src = mat.row(r);
  e.value = Array(Shape{src.size()}, std::vector<Real>(src.begin(), src.end()));
  return push(std::move(e), "row");
}

Var Tape::stack_rows(std::span<const Var> rows) {
  require(!rows.empty(), "stack_rows", "no inputs");
  const std::size_t cols = value(rows[0]).size();
  TapeEntry e;
  e.op = OpKind::kStackRows;
  e.value = Array(Shape{rows.size(), cols});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Array& x = value(rows[r]);
    require(x.size() == cols, "stack_rows", "ragged rows");
    std::copy(x.data().begin(), x.data().end(), e.value.row(r).begin());
    e.inputs.push_back(rows[r].id);
  }
  return push(std::move(e), "stack_rows");
}

Var Tape::dot(Var a, Var b) {
  const Array& x = value(a);
  const Array& y = value(b);
  require(x.size() == y.size(), "dot", "length mismatch");
  TapeEntry e;
  e.op = OpKind::kDot;
  e.inputs = {a.id, b.id};
  Real acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
  e.value = Array::scalar(acc);
  return push(std::move(e), "dot");
}

Var Tape::sum(Var a) {
  const Array& x = value(a);
  TapeEntry e;
  e.op = OpKind::kSum;
  e.inputs = {a.id};
  Real acc = 0.0;
  for (Real v : x.data()) acc += v;
  e.value = Array::scalar(acc);
  return push(std::move(e), "sum");
}

Var Tape::attn_scores(Var keys, Var query, Var v) {
  const Array& p = value(keys);
  const Array& q = value(query);
  const Array& w = value(v);
  require(p.shape().rank() == 2 && p.shape()[1] == q.size() && q.size() == w.size(), "attn_scores",
          "incompatible shapes " + p.shape().str() + ", " + q.shape().str() + ", " + w.shape().str());
  const std::size_t n = p.shape()[0];
  const std::size_t a = p.shape()[1];
  TapeEntry e;
  e.op = OpKind::kAttnScores;
  e.inputs = {keys.id, query.id, v.id};
  e.aux = Array(Shape{n, a});
  e.value = Array(Shape{n});
  for (std::size_t i = 0; i < n; ++i) {
    Real s = 0.0;
    for (std::size_t j = 0; j < a; ++j) {
      const Real u = std::tanh(p.at(i, j) + q[j]);
      e.aux.at(i, j) = u;
      s += w[j] * u;
    }
    e.value[i] = s;
  }
  return push(std::move(e), "attn_scores");
}

Var Tape::softmax(Var a, Real tau) {
  const Array& x = value(a);
  TapeEntry e;
  e.op = OpKind::kSoftmax;
  e.inputs = {a.id};
  e.attr = tau;
  e.value = Array(x.shape(), softmax_temperature(x.data(), tau));
  return push(std::move(e), "softmax");
}

Var Tape::log_softmax_at(Var logits, std::size_t index, Real tau) {
  const Array& z = value(logits);
  require(index < z.size(), "log_softmax_at", "index " + std::to_string(index) + " out of range");
  if (!(tau > 0.0)) throw std::invalid_argument("log_softmax_at: tau must be positive");
  Real top = z[0];
  for (Real v : z.data()) top = std::max(top, v);
  Real total = 0.0;
  for (Real v : z.data()) total += std::exp((v - top) / tau);
  TapeEntry e;
  e.op = OpKind::kLogSoftmaxAt;
  e.inputs = {logits.id};
  e.attr = tau;
  e.offset = index;
  e.value = Array::scalar((z[index] - top) / tau - std::log(total));
  e.aux = Array(z.shape());
  for (std::size_t i = 0; i < z.size(); ++i) e.aux[i] = std::exp((z[i] - top) / tau) / total;
  return push(std::move(e), "log_softmax_at");
}

Array& Tape::grad(std::uint32_t id) {
  Array& g = adjoints_[id];
  if (g.empty()) g = Array(val(id).shape());
  return g;
}

void Tape::backward(Var loss) {
  const Array& l = value(loss);
  if (l.size() != 1) throw std::invalid_argument("backward: loss must be scalar, got " + l.shape().str());
  adjoints_.assign(entries_.size(), Array());
  grad(loss.id)[0] = 1.0;

  for (std::size_t k = loss.id + 1; k-- > 0;) {
    if (adjoints_[k].empty()) continue;
    const TapeEntry& e = entries_[k];
    const Array& g = adjoints_[k];
    switch (e.op) {
      case OpKind::kParameter:
      case OpKind::kConstant:
        break;
      case OpKind::kAdd: {
        Array& ga = grad(e.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        Array& gb = grad(e.inputs[1]);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
        break;
      }
      case OpKind::kSub: {
        Array& ga = grad(e.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        Array& gb = grad(e.inputs[1]);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        break;
      }
      case OpKind::kMul: {
        const Array& x = val(e.inputs[0]);
        const Array& y = val(e.inputs[1]);
        Array& ga = grad(e.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
        Array& gb = grad(e.inputs[1]);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
        break;
      }
      case OpKind::kScale: {
        Array& ga = grad(e.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += e.attr * g[i];
        break;
      }
      case OpKind::kSigmoid: {
        Array& ga = grad(e.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * e.value[i] * (1.0 - e.value[i]);
        break;
      }
      case OpKind::kTanh: {
        Array& ga = grad(e.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - e.value[i] * e.value[i]);
        break;
      }
      case OpKind::kMatVec: {
        const Array& m = val(e.inputs[0]);
        const Array& x = val(e.inputs[1]);
        const std::size_t rows = m.shape()[0];
        const std::size_t cols = m.shape()[1];
        Array& gm = grad(e.inputs[0]);
        Array& gx = grad(e.inputs[1]);
        Real* gmd = gm.data().data();
        Real* gxd = gx.data().data();
        const Real* md = m.data().data();
        const Real* xd = x.data().data();
        for (std::size_t r = 0; r < rows; ++r) {
          const Real gr = g[r];
          if (gr == 0.0) continue;
          Real* gmr = gmd + r * cols;
          const Real* mr = md + r * cols;
          for (std::size_t c = 0; c < cols; ++c) {
            gmr[c] += gr * xd[c];
            gxd[c] += gr * mr[c];
          }
        }
        break;
      }
      case OpKind::kMatMulT: {
        const Array& a = val(e.inputs[0]);
        const Array& b = val(e.inputs[1]);
        const std::size_t n = a.shape()[0];
        const std::size_t kk = a.shape()[1];
        const std::size_t m = b.shape()[0];
        Array& ga = grad(e.inputs[0]);
        Array& gb = grad(e.inputs[1]);
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t j = 0; j < m; ++j) {
            const Real gr = g.at(r, j);
            for (std::size_t c = 0; c < kk; ++c) {
              ga.at(r, c) += gr * b.at(j, c);
              gb.at(j, c) += gr * a.at(r, c);
            }
          }
        break;
      }
      case OpKind::kMatTVec: {
        const Array& mat = val(e.inputs[0]);
        const Array& v = val(e.inputs[1]);
        const std::size_t n = mat.shape()[0];
        const std::size_t c = mat.shape()[1];
        Array& gm = grad(e.inputs[0]);
        Array& gv = grad(e.inputs[1]);
        for (std::size_t i = 0; i < n; ++i) {
          Real acc = 0.0;
          for (std::size_t j = 0; j < c; ++j) {
            gm.at(i, j) += v[i] * g[j];
            acc += mat.at(i, j) * g[j];
          }
          gv[i] += acc;
        }
        break;
      }
      case OpKind::kConcat: {
        std::size_t at = 0;
        for (std::uint32_t in : e.inputs) {
          Array& gi = grad(in);
          for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += g[at + i];
          at += gi.size();
        }
        break;
      }
      case OpKind::kSlice: {
        Array& ga = grad(e.inputs[0]);
        for (std::size_t i = 0; i < e.length; ++i) ga[e.offset + i] += g[i];
        break;
      }
      case OpKind::kRow: {
        Array& gm = grad(e.inputs[0]);
        auto dst = gm.row(e.offset);
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
        break;
      }
      case OpKind::kStackRows: {
        for (std::size_t r = 0; r < e.inputs.size(); ++r) {
          Array& gi = grad(e.inputs[r]);
          auto src = g.row(r);
          for (std::size_t i = 0; i < src.size(); ++i) gi[i] += src[i];
        }
        break;
      }
      case OpKind::kDot: {
        const Array& x = val(e.inputs[0]);
        const Array& y = val(e.inputs[1]);
        Array& ga = grad(e.inputs[0]);
        for (std::size_t i = 0; i < x.size(); ++i) ga[i] += g[0] * y[i];
        Array& gb = grad(e.inputs[1]);
        for (std::size_t i = 0; i < x.size(); ++i) gb[i] += g[0] * x[i];
        break;
      }
      case OpKind::kSum: {
        Array& ga = grad(e.inputs[0]);
        for (Real& v : ga.data()) v += g[0];
        break;
      }
      case OpKind::kAttnScores: {
        const Array& w = val(e.inputs[2]);
        const std::size_t n = e.aux.shape()[0];
        const std::size_t a = e.aux.shape()[1];
        Array& gp = grad(e.inputs[0]);
        Array& gq = grad(e.inputs[1]);
        Array& gw = grad(e.inputs[2]);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < a; ++j) {
            const Real u = e.aux.at(i, j);
            const Real d = g[i] * w[j] * (1.0 - u * u);
            gp.at(i, j) += d;
            gq[j] += d;
            gw[j] += g[i] * u;
          }
        }
        break;
      }
      case OpKind::kSoftmax: {
        Real gp = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) gp += g[i] * e.value[i];
        Array& ga = grad(e.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += e.value[i] * (g[i] - gp) / e.attr;
        break;
      }
      case OpKind::kLogSoftmaxAt: {
        Array& ga = grad(e.inputs[0]);
        const Real s = g[0] / e.attr;
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] -= s * e.aux[i];
        ga[e.offset] += s;
        break;
      }
    }
  }
}

Array Tape::adjoint(Var v) const {
  if (!v.valid() || v.id >= entries_.size()) throw std::out_of_range("tape: invalid node");
  if (v.id < adjoints_.size() && !adjoints_[v.id].empty()) return adjoints_[v.id];
  return Array(val(v.id).shape());
}

Gradients Tape::gradients(const ParamSet& set) const {
  Gradients out = zero_gradients(set);
  auto it = std::find_if(leaves_.begin(), leaves_.end(), [&](const auto& p) { return p.first == &set; });
  if (it == leaves_.end()) return out;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const std::uint32_t id = it->second[i];
    if (id != Var::kInvalid && id < adjoints_.size() && !adjoints_[id].empty()) out[i] = adjoints_[id];
  }
  return out;
}

bool Tape::references(const ParamSet& set) const {
  return std::any_of(leaves_.begin(), leaves_.end(), [&](const auto& p) { return p.first == &set; });
}

Gradients backward(Tape& tape, Var loss, const ParamSet& set) {
  tape.backward(loss);
  return tape.gradients(set);
}

LstmOutput lstm_cell(Tape& tape, Var w, Var b, Var x, Var h_prev, Var c_prev) {
  const std::size_t hidden = tape.value(h_prev).size();
  const Array& wv = tape.value(w);
  const std::size_t in = tape.value(x).size();
  if (wv.shape().rank() != 2 || wv.shape()[0] != 4 * hidden || wv.shape()[1] != in + hidden)
    throw std::invalid_argument("lstm_cell: weight shape " + wv.shape().str() + " inconsistent with input " +
                                std::to_string(in) + " and hidden " + std::to_string(hidden));
  if (tape.value(c_prev).size() != hidden || tape.value(b).size() != 4 * hidden)
    throw std::invalid_argument("lstm_cell: state or bias shape mismatch");
  Var gates = tape.add(tape.matvec(w, tape.concat({x, h_prev})), b);
  Var i = tape.sigmoid(tape.slice(gates, 0, hidden));
  Var f = tape.sigmoid(tape.slice(gates, hidden, hidden));
  Var g = tape.tanh(tape.slice(gates, 2 * hidden, hidden));
  Var o = tape.sigmoid(tape.slice(gates, 3 * hidden, hidden));
  Var c = tape.add(tape.mul(f, c_prev), tape.mul(i, g));
  Var h = tape.mul(o, tape.tanh(c));
  return {h, c};
}

}  // namespace banditmt
