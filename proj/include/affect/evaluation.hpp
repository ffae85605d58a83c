#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "affect/fusion_model.hpp"
#include "affect/labeling.hpp"
#include "affect/text_encoder.hpp"
#include "affect/training.hpp"

namespace affect {

enum class Protocol { kLoso, kPersonalized };
enum class DiaryMode { kWith, kWithout };

std::string_view to_string(Protocol p);
std::string_view to_string(DiaryMode d);
// Accepts "loso"/"non-personalized" and "personalized".
Protocol parse_protocol(std::string_view text);
DiaryMode parse_diary_mode(std::string_view text);

// Indices into the sample collection the folds were built from.
struct Fold {
  std::string fold_id;
  std::string participant_id;  // held-out (LOSO) or target (personalized) participant
  Protocol protocol = Protocol::kLoso;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

struct FoldSet {
  std::vector<Fold> folds;
  // Participants left out of personalized folds for having < 2 samples.
  std::vector<std::string> skipped;
};

FoldSet loso_folds(std::span<const SampleWindow> samples);
FoldSet personalized_folds(std::span<const SampleWindow> samples);

double accuracy(std::span<const int> predictions, std::span<const int> labels);

struct ExperimentConfig {
  ModelConfig model;
  TrainConfig train;
  TextEncoderConfig text;
  WindowSpec window;
  std::size_t vocab_min_count = 1;
  // Label with one cohort-wide table instead of per-training-fold statistics.
  bool global_labels = false;
  std::uint64_t seed = 0;
  int jobs = 1;
  // Builds the text encoder of a fold; defaults to ReferenceTextEncoder(text).
  std::function<std::unique_ptr<TextEncoder>(Tokenizer, std::uint64_t seed)> encoder_factory;
};

struct CellSpec {
  Target target = Target::kPA;
  DiaryMode diary = DiaryMode::kWith;
  Protocol protocol = Protocol::kLoso;

  std::string label() const;
};

// Labeled windows of one fold. Labels come from `table`, which is built from
// the training windows' scores only (unless global labels were requested).
struct PreparedFold {
  std::vector<SampleWindow> train;
  std::vector<SampleWindow> test;
  LabelTable table;
};

PreparedFold prepare_fold(std::span<const SampleWindow> candidates, const Fold& fold, Target target,
                          const LabelTable* global_table = nullptr);

struct PredictionRow {
  std::string fold_id;
  std::string participant_id;
  Date label_date;
  double probability = 0.0;
  int prediction = 0;
  int label = 0;
};

struct FoldResult {
  std::string fold_id;
  std::string participant_id;
  std::uint64_t seed = 0;
  std::size_t num_train = 0;
  std::size_t num_test = 0;
  double accuracy = 0.0;
  std::vector<PredictionRow> predictions;
  TrainReport report;
};

FoldResult run_fold(std::span<const SampleWindow> candidates, const Fold& fold, const CellSpec& cell,
                    const FeatureSchema& schema, const ExperimentConfig& cfg,
                    const LabelTable* global_table = nullptr);

struct CellResult {
  CellSpec spec;
  std::vector<FoldResult> folds;
  std::size_t skipped_participants = 0;
  // Test-count weighted mean over folds with at least one test sample.
  double accuracy = 0.0;
  std::size_t num_test = 0;
};

CellResult run_cell(const CohortDataset& dataset, std::span<const AffectScore> scores, const CellSpec& cell,
                    const ExperimentConfig& cfg);

struct ResultsRow {
  CellSpec spec;
  double accuracy = 0.0;
  std::size_t num_test = 0;
  std::vector<double> fold_accuracies;
};

struct ResultsTable {
  std::vector<ResultsRow> rows;

  std::string to_csv() const;
  std::string to_json() const;
};

ResultsRow summarize(const CellResult& cell);

// All 8 cells: targets x diary conditions x protocols, in that nesting order.
std::vector<CellSpec> grid_cells();
ResultsTable run_experiment_grid(const CohortDataset& dataset, std::span<const AffectScore> scores,
                                 const ExperimentConfig& cfg, std::vector<CellResult>* details = nullptr);

// `fold_id,participant_id,label_date,probability,prediction,label`
std::string predictions_to_csv(std::span<const CellResult> cells);

}  // namespace affect
