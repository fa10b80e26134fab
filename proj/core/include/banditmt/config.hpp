#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include "banditmt/bandit_rl.hpp"
#include "banditmt/data_select.hpp"
#include "banditmt/seq2seq.hpp"
#include "banditmt/supervised.hpp"

namespace banditmt {

enum class Profile { kPaperDefaults, kDeskScale };

Profile parse_profile(const std::string& name);
std::string profile_name(Profile profile);

/// Every tunable of the pipeline in one document.
struct PipelineConfig {
  Profile profile = Profile::kPaperDefaults;
  TrainConfig train;
  DecodeConfig decode;
  A2cConfig a2c;
  SelectionConfig select;
  std::string server_address = "127.0.0.1:7070";
  std::size_t server_window = 64;

  static PipelineConfig defaults(Profile profile);
  void validate() const;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Profile defaults overlaid with the JSON object in `text`. The profile comes
/// from `profile_override` when given, else the document's "profile" key, else
/// paper-defaults. Unknown keys and invalid values throw ConfigError naming the key.
PipelineConfig parse_config(const std::string& text, std::optional<Profile> profile_override = std::nullopt);
PipelineConfig load_config(const std::filesystem::path& path, std::optional<Profile> profile_override = std::nullopt);

/// Canonical form: every key present, keys sorted, two-space indentation.
std::string serialize(const PipelineConfig& config);

}  // namespace banditmt
