#include <gtest/gtest.h>

#include <json.hpp>

#include "affect/run_config.hpp"
#include "support.hpp"

using namespace affect;

namespace {

std::string key_of_error(const std::string& text) {
  try {
    RunConfig::from(KeyValueConfig::parse(text));
  } catch (const ConfigError& e) {
    return e.key();
  }
  return "none";
}

}  // namespace

TEST(KeyValue, ParsesCommentsAndWhitespace) {
  const auto kv = KeyValueConfig::parse("# a comment\n\n  model.model_dim =  32 \ntrain.batch_size=8\n");
  EXPECT_EQ(kv.get("model.model_dim"), "32");
  EXPECT_EQ(kv.get("train.batch_size"), "8");
  EXPECT_EQ(kv.values().size(), 2u);
  EXPECT_THROW(kv.get("train.seed"), ConfigError);
  EXPECT_THROW(KeyValueConfig::parse("just words\n"), ConfigError);
  EXPECT_THROW(KeyValueConfig::parse("nosection = 1\n"), ConfigError);
}

TEST(KeyValue, EnvironmentOverrides) {
  auto kv = KeyValueConfig::parse("train.batch_size = 8\nmodel.dropout = 0.1\n");
  EXPECT_EQ(KeyValueConfig::env_name("train.batch_size"), "AFFECTCAST_TRAIN__BATCH_SIZE");
  std::string a = "AFFECTCAST_TRAIN__BATCH_SIZE=4", b = "AFFECTCAST_EXPERIMENT__SEED=9", c = "OTHER=1",
              d = "AFFECTCAST_BROKEN";
  char* env[] = {a.data(), b.data(), c.data(), d.data(), nullptr};
  kv.apply_environment(env);
  EXPECT_EQ(kv.get("train.batch_size"), "4");
  EXPECT_EQ(kv.get("experiment.seed"), "9");
  EXPECT_EQ(kv.get("model.dropout"), "0.1");
  EXPECT_EQ(kv.values().size(), 3u);
  const auto rc = RunConfig::from(kv);
  EXPECT_EQ(rc.train.batch_size, 4);
  EXPECT_EQ(rc.seed, 9u);
  EXPECT_EQ(rc.synth.seed, 9u);
}

TEST(KeyValue, HashIgnoresOrderAndComments) {
  const auto a = KeyValueConfig::parse("a.x = 1\nb.y = 2\n");
  const auto b = KeyValueConfig::parse("# c\nb.y = 2\n\na.x=1");
  EXPECT_EQ(a.serialize(), "a.x = 1\nb.y = 2\n");
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_NE(a.hash(), KeyValueConfig::parse("a.x = 1\nb.y = 3\n").hash());
}

TEST(RunConfigTest, DefaultsAndValues) {
  const auto rc = RunConfig::from(KeyValueConfig::parse(
      "experiment.target = na\nexperiment.diary = without\nexperiment.protocol = personalized\n"
      "model.model_dim = 32\nsynth.feature_effects = deep_sleep_duration:1.5, sleep_hrv:-0.5\n"
      "synth.flipped_features = sleep_hrv\nsynth.polarity_flip = true\n"));
  EXPECT_EQ(rc.target, Target::kNA);
  EXPECT_EQ(rc.diary, DiaryMode::kWithout);
  EXPECT_EQ(rc.protocol, Protocol::kPersonalized);
  EXPECT_EQ(rc.model.model_dim, 32);
  EXPECT_EQ(rc.synth.effects.feature_effects.at("sleep_hrv"), -0.5);
  EXPECT_EQ(rc.synth.effects.flipped_features, std::vector<std::string>{"sleep_hrv"});
  EXPECT_TRUE(rc.synth.effects.per_participant_polarity_flip);
  EXPECT_EQ(rc.resolved_schema_file(), std::filesystem::path("data") / "schema.txt");
  const auto e = rc.experiment();
  EXPECT_EQ(e.model.model_dim, 32);
  const auto defaults = RunConfig::from(KeyValueConfig{});
  EXPECT_EQ(defaults.train.stage1_epochs, 20);
  EXPECT_EQ(defaults.train.batch_size, 16);
  EXPECT_FALSE(defaults.synth.effects.diary_vocab_effects.empty());
}

TEST(RunConfigTest, ErrorsNameTheKey) {
  EXPECT_EQ(key_of_error("model.bogus = 1\n"), "model.bogus");
  EXPECT_EQ(key_of_error("train.batch_size = eight\n"), "train.batch_size");
  EXPECT_EQ(key_of_error("train.batch_size = 0\n"), "train.batch_size");
  EXPECT_EQ(key_of_error("model.dropout = lots\n"), "model.dropout");
  EXPECT_EQ(key_of_error("experiment.target = joy\n"), "experiment.target");
  EXPECT_EQ(key_of_error("train.require_stage1 = maybe\n"), "train.require_stage1");
  EXPECT_EQ(key_of_error("synth.feature_effects = deep_sleep_duration\n"), "synth.feature_effects");
  EXPECT_EQ(key_of_error("experiment.jobs = 0\n"), "experiment.jobs");
  EXPECT_EQ(key_of_error("text.embedding_dim = 10\ntext.num_heads = 3\n"), "text.embedding_dim");
  EXPECT_EQ(key_of_error("explain.num_permutations = 0\n"), "explain.num_permutations");
}

TEST(RunConfigTest, KeyValuesRoundTrip) {
  const auto rc = RunConfig::from(KeyValueConfig::parse("model.dropout = 0.25\nsynth.word_effects = calm:0.7\n"));
  const auto kv = rc.to_key_values();
  EXPECT_EQ(kv.values().size(), RunConfig::known_keys().size());
  const auto back = RunConfig::from(kv);
  EXPECT_EQ(back.to_key_values().serialize(), kv.serialize());
  EXPECT_EQ(back.model.dropout, 0.25);
  EXPECT_EQ(back.synth.effects.diary_vocab_effects, (std::map<std::string, double>{{"calm", 0.7}}));
}

TEST(ManifestTest, JsonFields) {
  testing_support::TempDir dir("manifest");
  write_file_atomic(dir.path() / "in.txt", "hello");
  Manifest m;
  m.command = "train";
  m.config_hash = 0xabcULL;
  m.seed = 3;
  m.inputs = checksum_inputs({dir.path() / "in.txt"});
  m.outputs = {"model.affm"};
  m.artifact_versions = {{"model", "1"}};
  const auto j = nlohmann::json::parse(m.to_json());
  EXPECT_EQ(j.at("command"), "train");
  EXPECT_EQ(j.at("tool_version"), kToolVersion);
  EXPECT_EQ(j.at("config_hash"), hex64(0xabc));
  EXPECT_EQ(j.at("seed"), 3);
  EXPECT_EQ(j.at("inputs").size(), 1u);
  EXPECT_EQ(j.at("inputs").begin().value(), hex64(fnv1a64("hello")));
  EXPECT_EQ(j.at("outputs")[0], "model.affm");
}
