#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "affect/core_data.hpp"
#include "affect/labeling.hpp"

namespace testing_support {

namespace fs = std::filesystem;
using namespace affect;

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("affect_" + tag + "_" + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

inline FeatureSchema tiny_schema() {
  return FeatureSchema({{"sleep", "min", Modality::kSleep},
                        {"steps", "steps", Modality::kActivity},
                        {"pressure", "hPa", Modality::kEnvironment}});
}

inline DailyObservation observation(const std::string& pid, Date d, std::vector<double> values) {
  DailyObservation o;
  o.participant_id = pid;
  o.date = d;
  o.observed.assign(values.size(), true);
  o.values = std::move(values);
  return o;
}

// All 20 items equal to `score`, so pa == na == score.
inline AffectReport flat_report(const std::string& pid, Date d, double score) {
  AffectReport r;
  r.participant_id = pid;
  r.date = d;
  for (const auto& item : PanasItems::standard().all()) r.item_scores[item] = score;
  return r;
}

inline Date day0() { return parse_date("2024-01-01"); }

// `participants` x `days` contiguous observations with random values and a
// report on every day with a distinct score.
inline CohortDataset grid_cohort(std::size_t participants, int days, std::uint64_t seed = 1,
                                 bool with_diaries = false) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const FeatureSchema schema = tiny_schema();
  std::vector<DailyObservation> obs;
  std::vector<AffectReport> reports;
  std::vector<DiaryEntry> diaries;
  int k = 0;
  for (std::size_t p = 0; p < participants; ++p) {
    const std::string pid = "P" + std::to_string(p + 1);
    for (int d = 0; d < days; ++d) {
      const Date date = add_days(day0(), d);
      obs.push_back(observation(pid, date, {400 + 30 * noise(rng), 8000 + 900 * noise(rng), 1010 + 5 * noise(rng)}));
      reports.push_back(flat_report(pid, date, 10.0 + 0.01 * (k++) + 30.0 * std::fabs(noise(rng))));
      if (with_diaries && d % 2 == 0)
        diaries.push_back(make_diary_entry(pid, date, d % 4 == 0 ? "calm day at home" : "busy day, rain"));
    }
  }
  return CohortDataset(schema, std::move(obs), std::move(diaries), std::move(reports));
}

}  // namespace testing_support
