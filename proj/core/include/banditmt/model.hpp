#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "banditmt/params.hpp"

namespace banditmt {

struct ModelDims {
  std::size_t src_vocab = 0;
  std::size_t tgt_vocab = 0;
  std::size_t embed = 0;
  std::size_t hidden = 0;  // decoder hidden size; each encoder direction uses hidden / 2
  std::size_t layers = 1;

  void validate() const;
  bool operator==(const ModelDims&) const = default;
};

enum class HeadKind { kPolicy, kValue };

/// Weights of a bidirectional-encoder, input-feeding attentional decoder.
/// The policy head projects the attentional output to target logits; the value
/// head maps it to a scalar.
class EncoderDecoder {
 public:
  static constexpr Real kInitScale = 0.1;

  struct LstmWeights {
    std::size_t w = 0;  // [4h x (in + h)]
    std::size_t b = 0;  // [4h]
  };

  struct Layout {
    std::size_t src_embed = 0;  // [Vs x E]
    std::size_t tgt_embed = 0;  // [Vt x E]
    std::vector<std::array<LstmWeights, 2>> encoder;  // [layer][forward, backward]
    std::vector<LstmWeights> decoder;
    std::size_t attn_keys = 0;   // [H x H], applied to encoder states
    std::size_t attn_query = 0;  // [H x H], applied to the decoder state
    std::size_t attn_v = 0;      // [H]
    std::size_t combine = 0;     // [H x 2H], tanh(W [h_dec; c_t])
    std::size_t output = 0;      // [Vt x H], policy head only
    std::size_t value_w = 0;     // [H], value head only
    std::size_t value_b = 0;     // [1], value head only
  };

  /// All parameters start at zero.
  EncoderDecoder(ModelDims dims, HeadKind head);

  const ModelDims& dims() const { return dims_; }
  HeadKind head() const { return head_; }
  const Layout& layout() const { return layout_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  void init_uniform(std::uint64_t seed, Real scale = kInitScale) { params_.init_uniform(scale, seed); }

 private:
  ModelDims dims_;
  HeadKind head_;
  Layout layout_;
  ParamSet params_;
};

/// Translation policy weights (theta).
class NmtParams : public EncoderDecoder {
 public:
  explicit NmtParams(ModelDims dims) : EncoderDecoder(dims, HeadKind::kPolicy) {}
  static NmtParams initialized(ModelDims dims, std::uint64_t seed);
};

/// Value-estimator weights (omega); never shares storage with NmtParams.
class CriticParams : public EncoderDecoder {
 public:
  explicit CriticParams(ModelDims dims) : EncoderDecoder(dims, HeadKind::kValue) {}
  static CriticParams initialized(ModelDims dims, std::uint64_t seed);
};

}  // namespace banditmt
