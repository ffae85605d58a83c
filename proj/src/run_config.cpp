#include "affect/run_config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <functional>

#include <json.hpp>

namespace affect {

KeyValueConfig KeyValueConfig::parse(std::string_view text, const std::string& source) {
  KeyValueConfig cfg;
  std::size_t pos = 0, line_no = 0;
  while (pos <= text.size()) {
    const auto end = std::min(text.find('\n', pos), text.size());
    const auto line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("", source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    const auto key = trim(std::string_view(line).substr(0, eq));
    if (key.empty() || key.find('.') == std::string::npos)
      throw ConfigError(key, source + ":" + std::to_string(line_no) + ": keys take the form section.key");
    cfg.values_[key] = trim(std::string_view(line).substr(eq + 1));
    if (end == text.size()) break;
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("", "config file " + path.string() + " does not exist");
  return parse(read_file(path), path.string());
}

std::string KeyValueConfig::env_name(const std::string& key) {
  std::string out = kEnvPrefix;
  for (std::size_t i = 0; i < key.size(); ++i) {
    if (key[i] == '.')
      out += "__";
    else
      out += static_cast<char>(std::toupper(static_cast<unsigned char>(key[i])));
  }
  return out;
}

void KeyValueConfig::apply_environment(char** envp) {
  if (envp == nullptr) return;
  const std::string_view prefix = kEnvPrefix;
  for (char** e = envp; *e != nullptr; ++e) {
    std::string_view entry(*e);
    if (!entry.starts_with(prefix)) continue;
    const auto eq = entry.find('=');
    if (eq == std::string_view::npos) continue;
    std::string name(entry.substr(prefix.size(), eq - prefix.size()));
    std::string key;
    for (std::size_t i = 0; i < name.size(); ++i) {
      if (name.compare(i, 2, "__") == 0) {
        key += '.';
        ++i;
      } else {
        key += static_cast<char>(std::tolower(static_cast<unsigned char>(name[i])));
      }
    }
    values_[key] = std::string(entry.substr(eq + 1));
  }
}

const std::string& KeyValueConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(key, "missing key");
  return it->second;
}

std::string KeyValueConfig::serialize() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

namespace {

template <typename T>
T parse_integer(const std::string& key, const std::string& v) {
  T out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key, "expected an integer, got '" + v + "'");
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    return parse_double(v);
  } catch (const Error&) {
    throw ConfigError(key, "expected a number, got '" + v + "'");
  }
}

bool parse_flag(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key, "expected true or false, got '" + v + "'");
}

// "name:weight,name:weight"
std::map<std::string, double> parse_weights(const std::string& key, const std::string& v) {
  std::map<std::string, double> out;
  std::size_t pos = 0;
  while (pos < v.size()) {
    const auto end = std::min(v.find(',', pos), v.size());
    const auto item = trim(std::string_view(v).substr(pos, end - pos));
    pos = end + 1;
    if (item.empty()) continue;
    const auto colon = item.rfind(':');
    if (colon == std::string::npos) throw ConfigError(key, "expected name:weight pairs, got '" + item + "'");
    out[trim(std::string_view(item).substr(0, colon))] = parse_real(key, trim(std::string_view(item).substr(colon + 1)));
  }
  return out;
}

std::string format_weights(const std::map<std::string, double>& w) {
  std::string out;
  for (const auto& [k, v] : w) out += (out.empty() ? "" : ",") + k + ":" + format_double(v);
  return out;
}

std::vector<std::string> parse_list(const std::string& v) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < v.size()) {
    const auto end = std::min(v.find(',', pos), v.size());
    auto item = trim(std::string_view(v).substr(pos, end - pos));
    if (!item.empty()) out.push_back(std::move(item));
    pos = end + 1;
  }
  return out;
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : ",") + s;
  return out;
}

struct Binding {
  std::string key;
  std::function<void(RunConfig&, const std::string& key, const std::string& value)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define AFFECT_INT(KEY, FIELD, TYPE)                                                                         \
  Binding {                                                                                                  \
    KEY, [](RunConfig& c, const std::string& k, const std::string& v) { c.FIELD = parse_integer<TYPE>(k, v); }, \
        [](const RunConfig& c) { return std::to_string(c.FIELD); }                                           \
  }
#define AFFECT_REAL(KEY, FIELD)                                                                         \
  Binding {                                                                                             \
    KEY, [](RunConfig& c, const std::string& k, const std::string& v) { c.FIELD = parse_real(k, v); }, \
        [](const RunConfig& c) { return format_double(c.FIELD); }                                       \
  }
#define AFFECT_FLAG(KEY, FIELD)                                                                         \
  Binding {                                                                                             \
    KEY, [](RunConfig& c, const std::string& k, const std::string& v) { c.FIELD = parse_flag(k, v); }, \
        [](const RunConfig& c) { return std::string(c.FIELD ? "true" : "false"); }                      \
  }

const std::vector<Binding>& bindings() {
  static const std::vector<Binding> b{
      {"paths.data_dir", [](RunConfig& c, const std::string&, const std::string& v) { c.data_dir = v; },
       [](const RunConfig& c) { return c.data_dir.string(); }},
      {"paths.output_dir", [](RunConfig& c, const std::string&, const std::string& v) { c.output_dir = v; },
       [](const RunConfig& c) { return c.output_dir.string(); }},
      {"paths.schema_file", [](RunConfig& c, const std::string&, const std::string& v) { c.schema_file = v; },
       [](const RunConfig& c) { return c.schema_file.string(); }},
      {"experiment.target",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         try {
           c.target = parse_target(v);
         } catch (const Error& e) {
           throw ConfigError(k, e.what());
         }
       },
       [](const RunConfig& c) { return std::string(to_string(c.target)); }},
      {"experiment.diary",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         try {
           c.diary = parse_diary_mode(v);
         } catch (const Error& e) {
           throw ConfigError(k, e.what());
         }
       },
       [](const RunConfig& c) { return std::string(to_string(c.diary)); }},
      {"experiment.protocol",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         try {
           c.protocol = parse_protocol(v);
         } catch (const Error& e) {
           throw ConfigError(k, e.what());
         }
       },
       [](const RunConfig& c) { return std::string(c.protocol == Protocol::kLoso ? "loso" : "personalized"); }},
      AFFECT_INT("experiment.seed", seed, std::uint64_t),
      AFFECT_FLAG("experiment.global_labels", global_labels),
      AFFECT_INT("experiment.jobs", jobs, int),
      AFFECT_INT("model.model_dim", model.model_dim, int),
      AFFECT_INT("model.num_heads", model.num_heads, int),
      AFFECT_INT("model.num_layers", model.num_layers, int),
      AFFECT_INT("model.mlp_hidden", model.mlp_hidden, int),
      AFFECT_INT("model.ffn_dim", model.ffn_dim, int),
      AFFECT_REAL("model.dropout", model.dropout),
      AFFECT_INT("text.embedding_dim", text.embedding_dim, int),
      AFFECT_INT("text.num_heads", text.num_heads, int),
      AFFECT_INT("text.num_layers", text.num_layers, int),
      AFFECT_INT("text.ffn_dim", text.ffn_dim, int),
      AFFECT_INT("text.max_tokens", text.max_tokens, int),
      AFFECT_REAL("text.dropout", text.dropout),
      AFFECT_INT("text.vocab_min_count", vocab_min_count, std::size_t),
      AFFECT_INT("train.stage1_epochs", train.stage1_epochs, int),
      AFFECT_INT("train.stage2_epochs", train.stage2_epochs, int),
      AFFECT_REAL("train.stage1_lr", train.stage1_lr),
      AFFECT_REAL("train.stage2_lr", train.stage2_lr),
      AFFECT_REAL("train.encoder_lr_stage2", train.encoder_lr_stage2),
      AFFECT_INT("train.batch_size", train.batch_size, int),
      AFFECT_REAL("train.weight_decay", train.weight_decay),
      AFFECT_INT("train.early_stop_patience", train.early_stop_patience, int),
      AFFECT_REAL("train.validation_fraction", train.validation_fraction),
      AFFECT_FLAG("train.require_stage1", train.require_stage1),
      AFFECT_INT("synth.num_participants", synth.num_participants, std::size_t),
      AFFECT_INT("synth.days_per_participant", synth.days_per_participant, int),
      {"synth.feature_effects",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.synth.effects.feature_effects = parse_weights(k, v);
       },
       [](const RunConfig& c) { return format_weights(c.synth.effects.feature_effects); }},
      {"synth.word_effects",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.synth.effects.diary_vocab_effects = parse_weights(k, v);
       },
       [](const RunConfig& c) { return format_weights(c.synth.effects.diary_vocab_effects); }},
      AFFECT_REAL("synth.frequency_effect", synth.effects.frequency_effect),
      AFFECT_REAL("synth.noise_std", synth.effects.noise_std),
      AFFECT_FLAG("synth.polarity_flip", synth.effects.per_participant_polarity_flip),
      {"synth.flipped_features",
       [](RunConfig& c, const std::string&, const std::string& v) { c.synth.effects.flipped_features = parse_list(v); },
       [](const RunConfig& c) { return join(c.synth.effects.flipped_features); }},
      AFFECT_REAL("synth.ar_coefficient", synth.ar_coefficient),
      AFFECT_REAL("synth.context_baseline_spread", synth.context_baseline_spread),
      AFFECT_REAL("synth.effect_baseline_spread", synth.effect_baseline_spread),
      AFFECT_REAL("synth.diary_rate", synth.diary_rate),
      AFFECT_REAL("synth.word_rate", synth.word_rate),
      AFFECT_REAL("synth.missing_rate", synth.missing_rate),
      AFFECT_REAL("synth.item_noise", synth.item_noise),
      AFFECT_INT("explain.num_samples", explain.num_samples, std::size_t),
      AFFECT_INT("explain.num_permutations", explain.num_permutations, std::size_t),
      AFFECT_INT("explain.background_size", explain.background_size, std::size_t),
      AFFECT_INT("explain.top_k", explain.top_k, std::size_t),
      AFFECT_INT("explain.min_occurrences", explain.min_occurrences, std::size_t),
  };
  return b;
}

#undef AFFECT_INT
#undef AFFECT_REAL
#undef AFFECT_FLAG

}  // namespace

RunConfig RunConfig::from(const KeyValueConfig& kv) {
  RunConfig c;
  c.synth.effects.feature_effects = {{"deep_sleep_duration", 1.0}, {"active_time", 0.5}};
  c.synth.effects.diary_vocab_effects = {{"happy", 1.0}, {"ashamed", -1.0}};
  c.synth.effects.frequency_effect = 0.3;
  const auto& table = bindings();
  for (const auto& [key, value] : kv.values()) {
    const auto it = std::find_if(table.begin(), table.end(), [&](const Binding& b) { return b.key == key; });
    if (it == table.end()) throw ConfigError(key, "unknown configuration key");
    it->set(c, key, value);
  }
  c.synth.seed = c.seed;
  try {
    c.model.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError("model", e.what());
  }
  c.train.validate();
  if (c.jobs < 1) throw ConfigError("experiment.jobs", "must be at least 1");
  if (c.text.embedding_dim <= 0 || c.text.num_heads <= 0 || c.text.embedding_dim % c.text.num_heads != 0)
    throw ConfigError("text.embedding_dim", "must be positive and divisible by text.num_heads");
  if (c.text.max_tokens < 2) throw ConfigError("text.max_tokens", "must be at least 2");
  if (c.explain.num_permutations == 0) throw ConfigError("explain.num_permutations", "must be positive");
  if (c.explain.background_size == 0) throw ConfigError("explain.background_size", "must be positive");
  return c;
}

KeyValueConfig RunConfig::to_key_values() const {
  KeyValueConfig kv;
  for (const auto& b : bindings()) kv.set(b.key, b.get(*this));
  return kv;
}

std::vector<std::string> RunConfig::known_keys() {
  std::vector<std::string> keys;
  for (const auto& b : bindings()) keys.push_back(b.key);
  return keys;
}

std::filesystem::path RunConfig::resolved_schema_file() const {
  return schema_file.empty() ? data_dir / CohortFiles::kSchema : schema_file;
}

ExperimentConfig RunConfig::experiment() const {
  ExperimentConfig e;
  e.model = model;
  e.train = train;
  e.text = text;
  e.vocab_min_count = vocab_min_count;
  e.global_labels = global_labels;
  e.seed = seed;
  e.jobs = jobs;
  return e;
}

std::string Manifest::to_json() const {
  nlohmann::ordered_json j{{"command", command},
                           {"tool_version", kToolVersion},
                           {"config_hash", hex64(config_hash)},
                           {"seed", seed},
                           {"inputs", inputs},
                           {"outputs", outputs},
                           {"artifact_versions", artifact_versions}};
  return j.dump(2) + "\n";
}

std::map<std::string, std::string> checksum_inputs(const std::vector<std::filesystem::path>& files) {
  std::map<std::string, std::string> out;
  for (const auto& f : files) out[f.generic_string()] = hex64(file_checksum(f));
  return out;
}

}  // namespace affect
