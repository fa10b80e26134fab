#include "banditmt/model.hpp"

#include <stdexcept>

namespace banditmt {

void ModelDims::validate() const {
  if (src_vocab == 0 || tgt_vocab == 0) throw std::invalid_argument("model: vocabulary sizes must be positive");
  if (embed == 0 || hidden == 0 || layers == 0) throw std::invalid_argument("model: dimensions must be positive");
  if (hidden % 2 != 0) throw std::invalid_argument("model: hidden size must be even");
}

EncoderDecoder::EncoderDecoder(ModelDims dims, HeadKind head) : dims_(dims), head_(head) {
  dims_.validate();
  const std::size_t e = dims_.embed;
  const std::size_t h = dims_.hidden;
  const std::size_t half = h / 2;

  layout_.src_embed = params_.add("src_embed", Array(Shape{dims_.src_vocab, e}));
  layout_.tgt_embed = params_.add("tgt_embed", Array(Shape{dims_.tgt_vocab, e}));
  for (std::size_t l = 0; l < dims_.layers; ++l) {
    const std::size_t in = l == 0 ? e : h;
    std::array<LstmWeights, 2> pair;
    for (int d = 0; d < 2; ++d) {
      const std::string prefix = "encoder.l" + std::to_string(l) + (d == 0 ? ".fwd" : ".bwd");
      pair[d].w = params_.add(prefix + ".W", Array(Shape{4 * half, in + half}));
      pair[d].b = params_.add(prefix + ".b", Array(Shape{4 * half}));
    }
    layout_.encoder.push_back(pair);
  }
  for (std::size_t l = 0; l < dims_.layers; ++l) {
    const std::size_t in = l == 0 ? e + h : h;
    const std::string prefix = "decoder.l" + std::to_string(l);
    LstmWeights w;
    w.w = params_.add(prefix + ".W", Array(Shape{4 * h, in + h}));
    w.b = params_.add(prefix + ".b", Array(Shape{4 * h}));
    layout_.decoder.push_back(w);
  }
  layout_.attn_keys = params_.add("attn.W_keys", Array(Shape{h, h}));
  layout_.attn_query = params_.add("attn.W_query", Array(Shape{h, h}));
  layout_.attn_v = params_.add("attn.v", Array(Shape{h}));
  layout_.combine = params_.add("combine.W", Array(Shape{h, 2 * h}));
  if (head_ == HeadKind::kPolicy) {
    layout_.output = params_.add("output.W", Array(Shape{dims_.tgt_vocab, h}));
  } else {
    layout_.value_w = params_.add("value.w", Array(Shape{h}));
    layout_.value_b = params_.add("value.b", Array(Shape{1}));
  }
}

NmtParams NmtParams::initialized(ModelDims dims, std::uint64_t seed) {
  NmtParams p(dims);
  p.init_uniform(seed);
  return p;
}

CriticParams CriticParams::initialized(ModelDims dims, std::uint64_t seed) {
  CriticParams p(dims);
  p.init_uniform(seed);
  return p;
}

}  // namespace banditmt
