#pragma once

#include <map>
#include <string>
#include <vector>

#include "affect/core_data.hpp"
#include "affect/labeling.hpp"

namespace affect {

// Planted relationships. Every effect acts on the affect of day t through the
// input window that forecasts it (days t-h-w+1 .. t-h), each driver scaled to
// unit variance, so weights are comparable across effect kinds.
struct EffectSpec {
  // feature name -> weight on the participant-referenced window mean
  std::map<std::string, double> feature_effects;
  // word -> weight on the share of window days whose diary contains the word
  std::map<std::string, double> diary_vocab_effects;
  // weight on the number of diary days in the window
  double frequency_effect = 0.0;
  double noise_std = 0.5;
  // Participants alternate polarity (+1, -1, +1, ...) on the flipped features.
  bool per_participant_polarity_flip = false;
  // Features whose sign flips; empty means all feature effects.
  std::vector<std::string> flipped_features;

  void validate() const;
  bool flips(const std::string& feature) const;
};

struct SynthConfig {
  std::size_t num_participants = 25;
  int days_per_participant = 60;
  EffectSpec effects;
  std::uint64_t seed = 0;
  Date start_date = parse_date("2023-03-06");
  WindowSpec window;
  // AR(1) coefficient of daily deviations from the participant baseline.
  double ar_coefficient = 0.7;
  // SD (in feature SD units) of participant baselines, for features without /
  // with a planted effect. Wide context baselines make participants tell apart.
  double context_baseline_spread = 2.0;
  double effect_baseline_spread = 0.3;
  double diary_rate = 0.6;
  // Probability that a planted word appears in a day's diary.
  double word_rate = 0.35;
  double second_entry_rate = 0.1;
  double missing_rate = 0.0;
  double item_noise = 4.0;
  double affect_scale = 15.0;

  void validate() const;
};

struct LatentPoint {
  std::string participant_id;
  Date date;
  double latent = 0.0;
  // Standardized driver per effect ("feature:<name>", "word:<w>", "frequency").
  std::map<std::string, double> drivers;
};

struct SynthCohort {
  CohortDataset dataset;
  std::vector<LatentPoint> latent;
  EffectSpec effects;
  std::map<std::string, int> polarity;

  std::string ground_truth_json() const;
};

SynthCohort generate(const SynthConfig& cfg, const FeatureSchema& schema = FeatureSchema::default_schema());

}  // namespace affect
