#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "affect/evaluation.hpp"
#include "affect/synth_cohort.hpp"

namespace affect {

// Flat `section.key = value` configuration. Lines starting with '#' are
// comments.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view text, const std::string& source = "config");
  static KeyValueConfig load(const std::filesystem::path& path);

  // AFFECTCAST_SECTION__KEY=value overrides section.key.
  static constexpr const char* kEnvPrefix = "AFFECTCAST_";
  static std::string env_name(const std::string& key);
  void apply_environment(char** envp);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  const std::string& get(const std::string& key) const;
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  const std::map<std::string, std::string>& values() const { return values_; }

  // Sorted `key = value` lines; the hash is taken over this text.
  std::string serialize() const;
  std::uint64_t hash() const { return fnv1a64(serialize()); }

 private:
  std::map<std::string, std::string> values_;
};

struct ExplainSettings {
  std::size_t num_samples = 20;
  std::size_t num_permutations = 200;
  std::size_t background_size = 100;
  std::size_t top_k = 20;
  std::size_t min_occurrences = 3;
};

struct RunConfig {
  std::filesystem::path data_dir = "data";
  std::filesystem::path output_dir = "runs";
  std::filesystem::path schema_file;  // empty: data_dir/schema.txt
  Target target = Target::kPA;
  DiaryMode diary = DiaryMode::kWith;
  Protocol protocol = Protocol::kLoso;
  std::uint64_t seed = 0;
  bool global_labels = false;
  int jobs = 1;
  ModelConfig model;
  TrainConfig train;
  TextEncoderConfig text;
  std::size_t vocab_min_count = 1;
  SynthConfig synth;
  ExplainSettings explain;

  // Unknown keys and unparsable values raise ConfigError naming the key.
  static RunConfig from(const KeyValueConfig& kv);
  KeyValueConfig to_key_values() const;
  static std::vector<std::string> known_keys();

  std::filesystem::path resolved_schema_file() const;
  ExperimentConfig experiment() const;
};

// Per-output-directory provenance record.
struct Manifest {
  std::string command;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> inputs;  // path -> checksum
  std::vector<std::string> outputs;
  std::map<std::string, std::string> artifact_versions;

  std::string to_json() const;
};

inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kToolVersion = "1.0.0";

// Checksums of the given files, keyed by their path as written in the config.
std::map<std::string, std::string> checksum_inputs(const std::vector<std::filesystem::path>& files);

}  // namespace affect
