#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "affect/common.hpp"

namespace affect {

enum class Modality { kSleep, kPhysiology, kActivity, kMetabolic, kEnvironment };

std::string_view to_string(Modality m);
Modality parse_modality(std::string_view text);

struct FeatureSpec {
  std::string name;
  std::string unit;
  Modality modality = Modality::kSleep;

  bool operator==(const FeatureSpec&) const = default;
};

// Ordered list of objective features. The order is fixed when the schema is
// loaded and every observation vector is aligned to it.
class FeatureSchema {
 public:
  FeatureSchema() = default;
  explicit FeatureSchema(std::vector<FeatureSpec> features);

  // One `name,unit,modality` triple per line; blank lines and '#' comments ignored.
  static FeatureSchema parse(std::string_view text);
  static FeatureSchema load(const std::filesystem::path& path);
  // The 13 wearable features named in the study's results.
  static FeatureSchema default_schema();

  std::string serialize() const;
  std::size_t size() const { return features_.size(); }
  const FeatureSpec& operator[](std::size_t i) const { return features_[i]; }
  const std::vector<FeatureSpec>& features() const { return features_; }
  std::optional<std::size_t> index_of(std::string_view name) const;
  std::uint64_t fingerprint() const;

  bool operator==(const FeatureSchema&) const = default;

 private:
  std::vector<FeatureSpec> features_;
};

struct DailyObservation {
  std::string participant_id;
  Date date;
  std::vector<double> values;
  std::vector<bool> observed;
};

struct DiaryEntry {
  std::string participant_id;
  Date date;
  std::string text;
  // Optional submission time; used only to order same-day entries.
  std::string timestamp;

  bool operator==(const DiaryEntry&) const = default;
};

// Builds a DiaryEntry, rejecting text that is empty after trimming.
DiaryEntry make_diary_entry(std::string participant_id, Date date, std::string text,
                            std::string timestamp = {});

struct AffectReport {
  std::string participant_id;
  Date date;
  std::map<std::string, double> item_scores;

  bool operator==(const AffectReport&) const = default;
};

// The 10 positive and 10 negative PANAS words.
struct PanasItems {
  std::vector<std::string> positive;
  std::vector<std::string> negative;

  static PanasItems standard();
  std::vector<std::string> all() const;
  bool contains(std::string_view item) const;
};

// Immutable, validated cohort. Records are kept in canonical (participant, date)
// order, so two datasets built from permuted inputs compare equal.
class CohortDataset {
 public:
  CohortDataset() = default;
  CohortDataset(FeatureSchema schema, std::vector<DailyObservation> observations,
                std::vector<DiaryEntry> diaries, std::vector<AffectReport> reports);

  const FeatureSchema& schema() const { return schema_; }
  const std::vector<DailyObservation>& observations() const { return observations_; }
  const std::vector<DiaryEntry>& diaries() const { return diaries_; }
  const std::vector<AffectReport>& reports() const { return reports_; }
  const std::set<std::string>& participant_ids() const { return participant_ids_; }

  const DailyObservation* find_observation(const std::string& participant, Date date) const;
  // Diaries of one participant with date in [first, last], canonical order.
  std::vector<DiaryEntry> diaries_between(const std::string& participant, Date first,
                                          Date last) const;

  friend bool operator==(const CohortDataset& a, const CohortDataset& b);

 private:
  void index();

  FeatureSchema schema_;
  std::vector<DailyObservation> observations_;
  std::vector<DiaryEntry> diaries_;
  std::vector<AffectReport> reports_;
  std::set<std::string> participant_ids_;
  std::map<std::pair<std::string, Date>, std::size_t> observation_index_;
};

bool operator==(const CohortDataset& a, const CohortDataset& b);

// Parsers for the individual file formats. `source` names the file in errors.
std::vector<DailyObservation> parse_observations_csv(std::string_view text,
                                                     const FeatureSchema& schema,
                                                     const std::string& source = "observations");
std::vector<DiaryEntry> parse_diaries_jsonl(std::string_view text,
                                            const std::string& source = "diaries");
std::vector<AffectReport> parse_reports_csv(std::string_view text, const PanasItems& items,
                                            const std::string& source = "reports");

std::string observations_to_csv(const CohortDataset& dataset);
std::string diaries_to_jsonl(const CohortDataset& dataset);
std::string reports_to_csv(const CohortDataset& dataset, const PanasItems& items);

CohortDataset load_cohort(const std::filesystem::path& observations_path,
                          const std::filesystem::path& diaries_path,
                          const std::filesystem::path& reports_path, const FeatureSchema& schema,
                          const PanasItems& items = PanasItems::standard());

// Conventional file names inside a cohort directory.
struct CohortFiles {
  static constexpr const char* kObservations = "observations.csv";
  static constexpr const char* kDiaries = "diaries.jsonl";
  static constexpr const char* kReports = "reports.csv";
  static constexpr const char* kSchema = "schema.txt";
};

CohortDataset load_cohort_dir(const std::filesystem::path& dir,
                              const PanasItems& items = PanasItems::standard());
void write_cohort_dir(const CohortDataset& dataset, const std::filesystem::path& dir,
                      const PanasItems& items = PanasItems::standard());

// Forward-fills unobserved values within each participant from the most recent
// observed day, falling back to the cohort mean of the feature. Masks are kept.
CohortDataset impute_missing(const CohortDataset& dataset);

}  // namespace affect
