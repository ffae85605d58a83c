#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "affect/evaluation.hpp"

namespace testing_support {

struct LeakageReport {
  std::size_t checks = 0;
  std::vector<std::string> violations;

  void expect(bool ok, const std::string& what) {
    ++checks;
    if (!ok) violations.push_back(what);
  }
};

// Every row of every window is a day strictly before the label date, matches
// the dataset, and the diaries carried along stay inside the window.
inline void check_window_dates(std::span<const affect::SampleWindow> windows, const affect::CohortDataset& data,
                               affect::WindowSpec spec, LeakageReport& out) {
  using namespace affect;
  for (const auto& w : windows) {
    const std::string ref = w.participant_id + "@" + format_date(w.label_date);
    out.expect(w.label_date == add_days(w.anchor_date, spec.horizon_days), ref + ": horizon");
    out.expect(w.objective.rows() == spec.window_days, ref + ": window length");
    for (Eigen::Index r = 0; r < w.objective.rows(); ++r) {
      const Date day = add_days(w.window_start(), static_cast<int>(r));
      out.expect(day < w.label_date, ref + ": row on or after label date");
      const auto* obs = data.find_observation(w.participant_id, day);
      out.expect(obs != nullptr, ref + ": row without an observation");
      if (obs == nullptr) continue;
      for (Eigen::Index f = 0; f < w.objective.cols(); ++f) {
        const auto fi = static_cast<std::size_t>(f);
        if (obs->observed[fi]) out.expect(obs->values[fi] == w.objective(r, f), ref + ": row differs from data");
      }
    }
    for (const auto& e : w.diary_entries) {
      out.expect(e.participant_id == w.participant_id, ref + ": foreign diary");
      out.expect(e.date >= w.window_start() && e.date <= w.anchor_date, ref + ": diary outside window");
      out.expect(e.date < w.label_date, ref + ": diary on or after label date");
    }
  }
}

inline bool same_table(const affect::LabelTable& a, const affect::LabelTable& b) {
  if (a.median != b.median || a.entries.size() != b.entries.size()) return false;
  if (a.exclusion_band.has_value() != b.exclusion_band.has_value()) return false;
  if (a.exclusion_band && (a.exclusion_band->low != b.exclusion_band->low || a.exclusion_band->high != b.exclusion_band->high))
    return false;
  for (std::size_t i = 0; i < a.entries.size(); ++i)
    if (a.entries[i].label != b.entries[i].label || a.entries[i].date != b.entries[i].date) return false;
  return true;
}

// Wildly perturbs each fold's test windows (features, scores, diaries) and
// checks that the fold's label table, training labels and standardization
// statistics do not move.
inline void check_fold_isolation(std::span<const affect::SampleWindow> candidates, affect::Protocol protocol,
                                 affect::Target target, LeakageReport& out) {
  using namespace affect;
  const auto folds = protocol == Protocol::kLoso ? loso_folds(candidates) : personalized_folds(candidates);
  for (const auto& fold : folds.folds) {
    std::vector<SampleWindow> poisoned(candidates.begin(), candidates.end());
    for (std::size_t i : fold.test) {
      auto& w = poisoned[i];
      w.objective = w.objective.array() * 1000.0 + 12345.0;
      w.score = (i % 2 ? 1e6 : -1e6) + static_cast<double>(i);
      for (auto& e : w.diary_entries) e.text = "leak leak leak";
    }
    const auto clean = prepare_fold(candidates, fold, target);
    const auto dirty = prepare_fold(poisoned, fold, target);
    out.expect(same_table(clean.table, dirty.table), fold.fold_id + ": label table depends on test data");
    out.expect(clean.train.size() == dirty.train.size(), fold.fold_id + ": training set size changed");
    bool labels_equal = clean.train.size() == dirty.train.size();
    for (std::size_t i = 0; labels_equal && i < clean.train.size(); ++i)
      labels_equal = clean.train[i].label == dirty.train[i].label && clean.train[i].objective == dirty.train[i].objective;
    out.expect(labels_equal, fold.fold_id + ": training windows changed");
    const auto sa = FeatureScaler::fit(split_validation(clean.train, 0.15).train);
    const auto sb = FeatureScaler::fit(split_validation(dirty.train, 0.15).train);
    out.expect(sa.mean == sb.mean && sa.stddev == sb.stddev, fold.fold_id + ": scaler depends on test data");
    // Held-out windows are labeled with training statistics only.
    for (const auto& w : clean.test) {
      const auto expected = clean.table.classify(w.score);
      out.expect(expected.has_value() && *expected == w.label, fold.fold_id + ": test label not from training median");
    }
  }
}

}  // namespace testing_support
