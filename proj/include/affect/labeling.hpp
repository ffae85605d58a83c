#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "affect/common.hpp"
#include "affect/core_data.hpp"

namespace affect {

enum class Target { kPA, kNA };

std::string_view to_string(Target t);
Target parse_target(std::string_view text);

struct AffectScore {
  std::string participant_id;
  Date date;
  double pa = 0.0;
  double na = 0.0;

  double value(Target t) const { return t == Target::kPA ? pa : na; }
};

// PA and NA composites: means of the positive and negative items.
AffectScore aggregate_panas(const AffectReport& report, const PanasItems& items = PanasItems::standard());
std::vector<AffectScore> aggregate_reports(const CohortDataset& dataset,
                                           const PanasItems& items = PanasItems::standard());

struct ScoredDate {
  std::string participant_id;
  Date date;
  double score = 0.0;
};

struct LabelEntry {
  std::string participant_id;
  Date date;
  double score = 0.0;
  int label = 0;
};

struct ExclusionBand {
  double low = 0.0;
  double high = 0.0;
};

// Binary labels from a median split after removing the central 20% of ranks.
struct LabelTable {
  Target target = Target::kPA;
  std::vector<LabelEntry> entries;
  std::vector<ScoredDate> excluded;
  double median = 0.0;
  // Score range of the removed ranks; empty when nothing was removed.
  std::optional<ExclusionBand> exclusion_band;

  const LabelEntry* find(const std::string& participant, Date date) const;
  // Label an unseen score with this table's median and band (used to label
  // held-out data with training-fold statistics). nullopt when inside the band.
  std::optional<int> classify(double score) const;
};

inline constexpr double kExcludedFraction = 0.2;

LabelTable build_label_table(std::span<const AffectScore> scores, Target target);
std::string label_table_to_csv(const LabelTable& table);
// Inverse of label_table_to_csv; median and band are recovered from the rows.
LabelTable parse_label_table_csv(std::string_view text, const std::string& source = "labels");

// One supervised example: `window_days` days of objective features ending at
// `anchor_date`, and the label of `label_date = anchor_date + horizon`.
struct SampleWindow {
  std::string participant_id;
  Date anchor_date;
  Date label_date;
  // window_days x |schema|, rows oldest to newest.
  Eigen::MatrixXd objective;
  // Same shape as `objective`; false where the value was imputed.
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> observed;
  std::vector<DiaryEntry> diary_entries;
  double score = 0.0;
  int label = 0;

  Date window_start() const { return add_days(anchor_date, 1 - static_cast<int>(objective.rows())); }
};

struct WindowSpec {
  int window_days = 7;
  int horizon_days = 7;
};

struct AssembledSamples {
  std::vector<SampleWindow> samples;
  std::size_t skipped = 0;
};

// One window per labeled (participant, label_date) whose full history is
// observed. Windows that lack history are skipped and counted.
AssembledSamples assemble_samples(const CohortDataset& dataset, const LabelTable& labels,
                                  WindowSpec spec = {});

// Every scored date with a complete history, unlabeled (label = -1). Used by
// cross-validation, which labels windows with fold-local statistics.
AssembledSamples candidate_windows(const CohortDataset& dataset,
                                   std::span<const AffectScore> scores, Target target,
                                   WindowSpec spec = {});

}  // namespace affect
