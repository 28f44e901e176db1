#pragma once

// Effective configuration: every tunable grouped into flat sections, loadable
// from a TOML-compatible `[section] key = value` file with dotted-key
// overrides, and dumpable back to the same format.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "stftcodec/codec_model.hpp"
#include "stftcodec/discriminators.hpp"
#include "stftcodec/losses.hpp"
#include "stftcodec/trainer.hpp"

namespace stftcodec {

inline constexpr const char* kConfigEnvVar = "STFTCODEC_CONFIG";

struct CliConfig {
  ModelConfig model;
  DiscriminatorConfig discriminators;
  LossWeights loss;
  TrainConfig train;
  std::map<std::string, std::string> external_tools;  // metric name -> executable

  /// Sets `section.key` from its text form. Unknown keys and unparsable
  /// values throw InvalidArgument naming the key.
  void set(const std::string& key, const std::string& value);
  /// Applies "section.key=value".
  void apply_override(const std::string& assignment);
  void load_file(const std::filesystem::path& path);
  void load_string(const std::string& text);

  /// Re-derives dependent fields (frequency bins, quantizer input width, chunk).
  void finalize();
  std::string dump() const;
  /// Hex SHA-256 of dump().
  std::string hash() const;
  std::vector<std::string> keys() const;

  bool operator==(const CliConfig&) const = default;
};

void to_json(nlohmann::json& j, const StftConfig& c);
void from_json(const nlohmann::json& j, StftConfig& c);
void to_json(nlohmann::json& j, const GeneratorConfig& c);
void from_json(const nlohmann::json& j, GeneratorConfig& c);
void to_json(nlohmann::json& j, const CodebookSpec& c);
void from_json(const nlohmann::json& j, CodebookSpec& c);
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
void to_json(nlohmann::json& j, const DiscriminatorConfig& c);
void from_json(const nlohmann::json& j, DiscriminatorConfig& c);
void to_json(nlohmann::json& j, const LossWeights& c);
void from_json(const nlohmann::json& j, LossWeights& c);
void to_json(nlohmann::json& j, const AblationFlags& c);
void from_json(const nlohmann::json& j, AblationFlags& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Hex SHA-256 digest of arbitrary bytes.
std::string sha256_hex(const std::string& bytes);

}  // namespace stftcodec
