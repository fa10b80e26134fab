#pragma once

#include <filesystem>
#include <variant>

#include "banditmt/model.hpp"
#include "banditmt/vocab.hpp"

namespace banditmt {

inline constexpr const char* kCheckpointVersion = "banditmt-ckpt-1";

/// A serialisable model together with the vocabularies it was trained on.
/// Layout on disk: a text header (version tag, head kind, dims, vocabularies,
/// and one "name f64 rank dims..." line per tensor), the line "payload", then
/// every tensor as row-major little-endian float64 in header order.
struct Checkpoint {
  std::variant<NmtParams, CriticParams> model;
  Vocabulary source_vocab;
  Vocabulary target_vocab;

  const EncoderDecoder& network() const;
  const NmtParams& policy() const;
  const CriticParams& critic() const;
};

void save_checkpoint(const std::filesystem::path& path, const EncoderDecoder& net, const Vocabulary& source_vocab,
                     const Vocabulary& target_vocab);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace banditmt
