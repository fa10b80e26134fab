#include "banditmt/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>

namespace banditmt {
namespace {

using json = nlohmann::json;

template <typename T>
T get_as(const json& v, const std::string& key) {
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw ConfigError(key + ": expected a boolean");
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer() || (std::is_unsigned_v<T> && v.get<long long>() < 0))
      throw ConfigError(key + ": expected a non-negative integer");
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) throw ConfigError(key + ": expected a number");
  } else {
    if (!v.is_string()) throw ConfigError(key + ": expected a string");
  }
  return v.get<T>();
}

using Setter = std::function<void(const json&, const std::string&)>;

template <typename T>
Setter field(T& slot) {
  return [&slot](const json& v, const std::string& key) { slot = get_as<T>(v, key); };
}

void apply_section(const json& doc, const std::string& section, const std::map<std::string, Setter>& setters) {
  if (!doc.is_object()) throw ConfigError(section + ": expected an object");
  for (const auto& [key, value] : doc.items()) {
    const std::string full = section + "." + key;
    auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown key '" + full + "'");
    it->second(value, full);
  }
}

std::string mode_name(DecodeMode m) {
  switch (m) {
    case DecodeMode::kGreedy: return "greedy";
    case DecodeMode::kSample: return "sample";
    case DecodeMode::kBeam: return "beam";
  }
  return "greedy";
}

}  // namespace

Profile parse_profile(const std::string& name) {
  if (name == "paper-defaults") return Profile::kPaperDefaults;
  if (name == "desk-scale") return Profile::kDeskScale;
  throw ConfigError("profile: unknown profile '" + name + "' (expected paper-defaults or desk-scale)");
}

std::string profile_name(Profile profile) {
  return profile == Profile::kDeskScale ? "desk-scale" : "paper-defaults";
}

PipelineConfig PipelineConfig::defaults(Profile profile) {
  PipelineConfig c;
  c.profile = profile;
  if (profile == Profile::kDeskScale) {
    c.train.batch_size = 8;
    c.train.epochs = 13;
    c.train.embedding = 32;
    c.train.hidden = 32;
    c.train.layers = 1;
    c.train.dropout = 0.0;
    c.train.sgd.learning_rate = 1.0;
    c.train.sgd.decay_start_epoch = 11;
    c.train.bpe_merges = 2000;
    c.decode.beam_width = 5;
    c.a2c.actor_lr = 1e-3;
    c.a2c.critic_lr = 1e-3;
    c.a2c.batch_size = 16;
    c.a2c.pretrain_triples = 2000;
    c.a2c.pretrain_epochs = 3;
    c.select.in_domain_cap = 2000;
    c.select.fraction = 0.3;
  }
  return c;
}

void PipelineConfig::validate() const {
  try {
    train.validate();
    decode.validate();
    a2c.validate();
    select.validate();
    if (server_address.find(':') == std::string::npos) throw std::invalid_argument("server.address must be host:port");
    if (server_window == 0) throw std::invalid_argument("server.window must be >= 1");
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

PipelineConfig parse_config(const std::string& text, std::optional<Profile> profile_override) {
  json doc;
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
    doc = json::object();
  } else {
    try {
      doc = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
  }
  if (!doc.is_object()) throw ConfigError("config: top level must be an object");

  Profile profile = Profile::kPaperDefaults;
  if (doc.contains("profile")) profile = parse_profile(get_as<std::string>(doc["profile"], "profile"));
  if (profile_override) profile = *profile_override;
  PipelineConfig c = PipelineConfig::defaults(profile);

  std::string normalization;
  std::string mode;
  for (const auto& [key, value] : doc.items()) {
    if (key == "profile") continue;
    if (key == "train") {
      normalization = c.train.normalization == LossNormalization::kPerToken ? "token" : "sentence";
      apply_section(value, key,
                    {{"batch_size", field(c.train.batch_size)},
                     {"epochs", field(c.train.epochs)},
                     {"embedding", field(c.train.embedding)},
                     {"hidden", field(c.train.hidden)},
                     {"layers", field(c.train.layers)},
                     {"dropout", field(c.train.dropout)},
                     {"learning_rate", field(c.train.sgd.learning_rate)},
                     {"decay_factor", field(c.train.sgd.decay_factor)},
                     {"decay_start_epoch", field(c.train.sgd.decay_start_epoch)},
                     {"clip_norm", field(c.train.sgd.clip_norm)},
                     {"bpe_merges", field(c.train.bpe_merges)},
                     {"heldout_fraction", field(c.train.heldout_fraction)},
                     {"normalization", field(normalization)}});
      if (normalization == "token") c.train.normalization = LossNormalization::kPerToken;
      else if (normalization == "sentence") c.train.normalization = LossNormalization::kPerSentence;
      else throw ConfigError("train.normalization: expected token or sentence");
    } else if (key == "decode") {
      mode = mode_name(c.decode.mode);
      apply_section(value, key,
                    {{"mode", field(mode)},
                     {"tau", field(c.decode.tau)},
                     {"beam_width", field(c.decode.beam_width)},
                     {"max_len_factor", field(c.decode.max_len_factor)},
                     {"max_len_offset", field(c.decode.max_len_offset)},
                     {"max_len_cap", field(c.decode.max_len_cap)}});
      if (mode == "greedy") c.decode.mode = DecodeMode::kGreedy;
      else if (mode == "sample") c.decode.mode = DecodeMode::kSample;
      else if (mode == "beam") c.decode.mode = DecodeMode::kBeam;
      else throw ConfigError("decode.mode: expected greedy, sample or beam");
    } else if (key == "a2c") {
      apply_section(value, key,
                    {{"tau", field(c.a2c.tau)},
                     {"actor_lr", field(c.a2c.actor_lr)},
                     {"critic_lr", field(c.a2c.critic_lr)},
                     {"batch_size", field(c.a2c.batch_size)},
                     {"pretrain_triples", field(c.a2c.pretrain_triples)},
                     {"pretrain_epochs", field(c.a2c.pretrain_epochs)},
                     {"pretrain_heldout", field(c.a2c.pretrain_heldout)}});
    } else if (key == "select") {
      apply_section(value, key,
                    {{"in_domain_cap", field(c.select.in_domain_cap)},
                     {"fraction", field(c.select.fraction)},
                     {"order", field(c.select.order)},
                     {"unk_singleton_limit", field(c.select.unk_singleton_limit)}});
    } else if (key == "server") {
      apply_section(value, key, {{"address", field(c.server_address)}, {"window", field(c.server_window)}});
    } else {
      throw ConfigError("unknown key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path, std::optional<Profile> profile_override) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), profile_override);
}

std::string serialize(const PipelineConfig& c) {
  json doc;
  doc["profile"] = profile_name(c.profile);
  doc["train"] = {{"batch_size", c.train.batch_size},
                  {"epochs", c.train.epochs},
                  {"embedding", c.train.embedding},
                  {"hidden", c.train.hidden},
                  {"layers", c.train.layers},
                  {"dropout", c.train.dropout},
                  {"learning_rate", c.train.sgd.learning_rate},
                  {"decay_factor", c.train.sgd.decay_factor},
                  {"decay_start_epoch", c.train.sgd.decay_start_epoch},
                  {"clip_norm", c.train.sgd.clip_norm},
                  {"bpe_merges", c.train.bpe_merges},
                  {"heldout_fraction", c.train.heldout_fraction},
                  {"normalization", c.train.normalization == LossNormalization::kPerToken ? "token" : "sentence"}};
  doc["decode"] = {{"mode", mode_name(c.decode.mode)},
                   {"tau", c.decode.tau},
                   {"beam_width", c.decode.beam_width},
                   {"max_len_factor", c.decode.max_len_factor},
                   {"max_len_offset", c.decode.max_len_offset},
                   {"max_len_cap", c.decode.max_len_cap}};
  doc["a2c"] = {{"tau", c.a2c.tau},
                {"actor_lr", c.a2c.actor_lr},
                {"critic_lr", c.a2c.critic_lr},
                {"batch_size", c.a2c.batch_size},
                {"pretrain_triples", c.a2c.pretrain_triples},
                {"pretrain_epochs", c.a2c.pretrain_epochs},
                {"pretrain_heldout", c.a2c.pretrain_heldout}};
  doc["select"] = {{"in_domain_cap", c.select.in_domain_cap},
                   {"fraction", c.select.fraction},
                   {"order", c.select.order},
                   {"unk_singleton_limit", c.select.unk_singleton_limit}};
  doc["server"] = {{"address", c.server_address}, {"window", c.server_window}};
  return doc.dump(2) + "\n";
}

}  // namespace banditmt
