#include "affect/synth_cohort.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>

#include <json.hpp>

namespace affect {

namespace {

struct FeatureScale {
  double mean;
  double sd;
};

FeatureScale typical_scale(const std::string& name) {
  static const std::map<std::string, FeatureScale> table{
      {"light_sleep_duration", {240, 40}},  {"deep_sleep_duration", {90, 20}},
      {"total_sleep_duration", {420, 50}},  {"sleep_heart_rate", {60, 5}},
      {"sleep_hrv", {50, 10}},              {"active_time", {70, 15}},
      {"total_movement", {9000, 1500}},     {"walk_steps", {7000, 1200}},
      {"run_steps", {3000, 500}},           {"met", {1.6, 0.15}},
      {"calorie_intake", {2100, 250}},      {"target_calorie_expenditure", {2300, 200}},
      {"atmospheric_pressure", {1013, 5}},
  };
  const auto it = table.find(name);
  return it == table.end() ? FeatureScale{100, 10} : it->second;
}

const std::vector<std::string>& neutral_templates() {
  static const std::vector<std::string> t{
      "Went to the morning lecture and took notes.",
      "Had lunch with my roommate at the cafeteria.",
      "Spent the afternoon in the library working on the report.",
      "Walked to campus because the bus was late.",
      "Did laundry and cleaned my desk.",
      "Called my family in the evening.",
      "Watched a movie after dinner.",
      "Finished the reading for tomorrow's seminar.",
      "Went grocery shopping near the station.",
      "Worked on the group project with two classmates.",
      "Cooked pasta for dinner.",
      "Had a quiz in the statistics class.",
      "Played some games online before bed.",
      "Took a short nap after class.",
      "Met a friend for coffee downtown.",
      "Practiced guitar for an hour.",
      "Reviewed slides for the chemistry exam.",
      "Rode my bike along the river.",
      "Attended a club meeting in the student hall.",
      "Answered emails and planned the week.",
      "Went to the gym in the evening.",
      "It rained most of the day so I stayed inside.",
      "Had a part-time shift at the bookstore.",
      "Read a few chapters of a novel.",
      "Helped my sister with her homework over video call.",
      "Visited the career center about internships.",
      "Took the train to see an old friend.",
      "Stayed up late finishing an assignment.",
      "Went for a walk around the park.",
      "Organized notes and made a study schedule.",
  };
  return t;
}

const std::vector<std::string>& word_contexts() {
  static const std::vector<std::string> c{
      "this morning", "after class", "at dinner", "during practice", "in the evening", "on the bus",
  };
  return c;
}

// Variance of the mean of `w` consecutive values of a unit-variance AR(1).
double window_mean_variance(double phi, int w) {
  double s = 0.0;
  for (int i = 0; i < w; ++i)
    for (int j = 0; j < w; ++j) s += std::pow(phi, std::abs(i - j));
  return s / (static_cast<double>(w) * w);
}

std::string participant_name(std::size_t i, std::size_t count) {
  const int width = std::max(2, static_cast<int>(std::to_string(count).size()));
  char buf[32];
  std::snprintf(buf, sizeof buf, "P%0*zu", width, i + 1);
  return buf;
}

std::string clock(int minutes) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "%02d:%02d", minutes / 60, minutes % 60);
  return buf;
}

}  // namespace

void EffectSpec::validate() const {
  bool any = frequency_effect != 0.0;
  for (const auto& [_, w] : feature_effects) any = any || w != 0.0;
  for (const auto& [_, w] : diary_vocab_effects) any = any || w != 0.0;
  if (!any) throw Error("effect spec needs at least one nonzero effect");
  if (!(noise_std >= 0.0)) throw Error("noise_std must be non-negative");
  for (const auto& f : flipped_features)
    if (!feature_effects.count(f)) throw Error("flipped feature '" + f + "' has no planted effect");
}

bool EffectSpec::flips(const std::string& feature) const {
  if (!per_participant_polarity_flip) return false;
  return flipped_features.empty() ||
         std::find(flipped_features.begin(), flipped_features.end(), feature) != flipped_features.end();
}

void SynthConfig::validate() const {
  if (num_participants < 2) throw Error("synthetic cohort needs at least 2 participants");
  const int min_days = window.window_days + window.horizon_days + 1;
  if (days_per_participant < min_days)
    throw Error("days_per_participant must be at least " + std::to_string(min_days));
  if (!(ar_coefficient > -1.0 && ar_coefficient < 1.0)) throw Error("ar_coefficient must lie in (-1, 1)");
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error(std::string(name) + " must lie in [0, 1]");
  };
  prob(diary_rate, "diary_rate");
  prob(word_rate, "word_rate");
  prob(second_entry_rate, "second_entry_rate");
  prob(missing_rate, "missing_rate");
  if (effects.frequency_effect != 0.0 && (diary_rate <= 0.0 || diary_rate >= 1.0))
    throw Error("frequency_effect needs 0 < diary_rate < 1");
  if (!effects.diary_vocab_effects.empty() && (diary_rate * word_rate <= 0.0 || diary_rate * word_rate >= 1.0))
    throw Error("word effects need 0 < diary_rate * word_rate < 1");
  effects.validate();
}

SynthCohort generate(const SynthConfig& cfg, const FeatureSchema& schema) {
  cfg.validate();
  for (const auto& [name, _] : cfg.effects.feature_effects)
    if (!schema.index_of(name)) throw Error("feature effect on '" + name + "' which is not in the schema");

  const int w = cfg.window.window_days;
  const int lag = cfg.window.horizon_days;
  const int burn_in = w + lag - 1;
  const int total = burn_in + cfg.days_per_participant;
  const double phi = cfg.ar_coefficient;
  const double mean_sd = std::sqrt(window_mean_variance(phi, w));
  const double word_p = cfg.diary_rate * cfg.word_rate;
  const double word_sd = std::sqrt(word_p * (1.0 - word_p) / w);
  const double freq_sd = std::sqrt(w * cfg.diary_rate * (1.0 - cfg.diary_rate));
  const auto items = PanasItems::standard();
  const auto& templates = neutral_templates();
  const auto& contexts = word_contexts();

  SynthCohort out;
  out.effects = cfg.effects;
  std::vector<DailyObservation> observations;
  std::vector<DiaryEntry> diaries;
  std::vector<AffectReport> reports;

  for (std::size_t p = 0; p < cfg.num_participants; ++p) {
    const std::string pid = participant_name(p, cfg.num_participants);
    std::mt19937_64 rng(derive_seed(cfg.seed, pid));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const int polarity = cfg.effects.per_participant_polarity_flip && p % 2 == 1 ? -1 : 1;
    out.polarity[pid] = polarity;

    const std::size_t nf = schema.size();
    std::vector<double> baseline(nf);
    for (std::size_t f = 0; f < nf; ++f) {
      const bool planted = cfg.effects.feature_effects.count(schema[f].name) > 0;
      baseline[f] = gauss(rng) * (planted ? cfg.effect_baseline_spread : cfg.context_baseline_spread);
    }
    // dev[d][f]: unit-variance AR(1) deviation from the participant baseline.
    std::vector<std::vector<double>> dev(static_cast<std::size_t>(total), std::vector<double>(nf));
    for (std::size_t f = 0; f < nf; ++f) {
      double x = gauss(rng);
      for (int d = 0; d < total; ++d) {
        if (d > 0) x = phi * x + std::sqrt(1.0 - phi * phi) * gauss(rng);
        dev[static_cast<std::size_t>(d)][f] = x;
      }
    }
    std::vector<bool> present(static_cast<std::size_t>(total));
    std::map<std::string, std::vector<bool>> has_word;
    for (const auto& [word, _] : cfg.effects.diary_vocab_effects) has_word[word].assign(static_cast<std::size_t>(total), false);
    for (int d = 0; d < total; ++d) {
      present[static_cast<std::size_t>(d)] = unif(rng) < cfg.diary_rate;
      for (auto& [word, flags] : has_word)
        flags[static_cast<std::size_t>(d)] = present[static_cast<std::size_t>(d)] && unif(rng) < cfg.word_rate;
    }

    for (int d = 0; d < total; ++d) {
      const Date date = add_days(cfg.start_date, d - burn_in);
      const auto di = static_cast<std::size_t>(d);
      const bool emitted = d >= burn_in;

      if (emitted) {
        DailyObservation obs{pid, date, std::vector<double>(nf), std::vector<bool>(nf, true)};
        for (std::size_t f = 0; f < nf; ++f) {
          const auto scale = typical_scale(schema[f].name);
          obs.values[f] = scale.mean + scale.sd * (baseline[f] + dev[di][f]);
          if (cfg.missing_rate > 0.0 && unif(rng) < cfg.missing_rate) {
            obs.values[f] = std::numeric_limits<double>::quiet_NaN();
            obs.observed[f] = false;
          }
        }
        observations.push_back(std::move(obs));

        if (present[di]) {
          std::string text = templates[rng() % templates.size()];
          for (const auto& [word, flags] : has_word)
            if (flags[di]) text += " I felt " + word + " " + contexts[rng() % contexts.size()] + ".";
          const int evening = 18 * 60 + static_cast<int>(rng() % (6 * 60));
          diaries.push_back(make_diary_entry(pid, date, text, clock(evening)));
          if (unif(rng) < cfg.second_entry_rate) {
            const int daytime = 8 * 60 + static_cast<int>(rng() % (10 * 60));
            diaries.push_back(make_diary_entry(pid, date, templates[rng() % templates.size()], clock(daytime)));
          }
        }
      }

      // Affect of day d is driven by the window that forecasts it.
      const int first = d - lag - w + 1;
      if (first < 0 || !emitted) continue;
      LatentPoint lp{pid, date, 0.0, {}};
      for (const auto& [name, weight] : cfg.effects.feature_effects) {
        const auto f = *schema.index_of(name);
        double m = 0.0;
        for (int k = first; k < first + w; ++k) m += dev[static_cast<std::size_t>(k)][f];
        const double driver = (m / w) / mean_sd;
        lp.drivers["feature:" + name] = driver;
        lp.latent += weight * (cfg.effects.flips(name) ? polarity : 1) * driver;
      }
      for (const auto& [word, weight] : cfg.effects.diary_vocab_effects) {
        double m = 0.0;
        for (int k = first; k < first + w; ++k) m += has_word[word][static_cast<std::size_t>(k)] ? 1.0 : 0.0;
        const double driver = word_sd > 0.0 ? (m / w - word_p) / word_sd : 0.0;
        lp.drivers["word:" + word] = driver;
        lp.latent += weight * driver;
      }
      if (cfg.effects.frequency_effect != 0.0) {
        double count = 0.0;
        for (int k = first; k < first + w; ++k) count += present[static_cast<std::size_t>(k)] ? 1.0 : 0.0;
        const double driver = freq_sd > 0.0 ? (count - w * cfg.diary_rate) / freq_sd : 0.0;
        lp.drivers["frequency"] = driver;
        lp.latent += cfg.effects.frequency_effect * driver;
      }
      lp.latent += cfg.effects.noise_std * gauss(rng);

      AffectReport report{pid, date, {}};
      auto item = [&](double sign) {
        return std::clamp(50.0 + sign * cfg.affect_scale * lp.latent + cfg.item_noise * gauss(rng), 0.0, 100.0);
      };
      for (const auto& name : items.positive) report.item_scores[name] = item(1.0);
      for (const auto& name : items.negative) report.item_scores[name] = item(-1.0);
      reports.push_back(std::move(report));
      out.latent.push_back(std::move(lp));
    }
  }
  out.dataset = CohortDataset(schema, std::move(observations), std::move(diaries), std::move(reports));
  return out;
}

std::string SynthCohort::ground_truth_json() const {
  nlohmann::ordered_json j;
  j["effects"] = {{"feature_effects", effects.feature_effects},
                  {"diary_vocab_effects", effects.diary_vocab_effects},
                  {"frequency_effect", effects.frequency_effect},
                  {"noise_std", effects.noise_std},
                  {"per_participant_polarity_flip", effects.per_participant_polarity_flip},
                  {"flipped_features", effects.flipped_features}};
  j["polarity"] = polarity;
  auto series = nlohmann::ordered_json::array();
  for (const auto& lp : latent)
    series.push_back({{"participant_id", lp.participant_id},
                      {"date", format_date(lp.date)},
                      {"latent", lp.latent},
                      {"drivers", lp.drivers}});
  j["latent"] = std::move(series);
  return j.dump(1) + "\n";
}

}  // namespace affect
