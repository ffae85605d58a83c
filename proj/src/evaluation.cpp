#include "affect/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include <json.hpp>

namespace affect {

std::string_view to_string(Protocol p) { return p == Protocol::kLoso ? "non-personalized" : "personalized"; }
std::string_view to_string(DiaryMode d) { return d == DiaryMode::kWith ? "with" : "without"; }

Protocol parse_protocol(std::string_view text) {
  if (text == "loso" || text == "non-personalized") return Protocol::kLoso;
  if (text == "personalized") return Protocol::kPersonalized;
  throw Error("unknown protocol '" + std::string(text) + "' (expected loso or personalized)");
}

DiaryMode parse_diary_mode(std::string_view text) {
  if (text == "with") return DiaryMode::kWith;
  if (text == "without") return DiaryMode::kWithout;
  throw Error("unknown diary mode '" + std::string(text) + "' (expected with or without)");
}

std::string CellSpec::label() const {
  std::string s(to_string(target));
  s += diary == DiaryMode::kWith ? "-with" : "-without";
  s += protocol == Protocol::kLoso ? "-loso" : "-personalized";
  return s;
}

namespace {

std::map<std::string, std::vector<std::size_t>> by_participant(std::span<const SampleWindow> samples) {
  std::map<std::string, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < samples.size(); ++i) out[samples[i].participant_id].push_back(i);
  for (auto& [pid, idx] : out)
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return samples[a].anchor_date < samples[b].anchor_date;
    });
  return out;
}

}  // namespace

FoldSet loso_folds(std::span<const SampleWindow> samples) {
  const auto groups = by_participant(samples);
  if (groups.size() < 2)
    throw ProtocolError("leave-one-subject-out needs at least 2 participants, got " +
                        std::to_string(groups.size()));
  FoldSet set;
  for (const auto& [pid, idx] : groups) {
    Fold f;
    f.fold_id = "loso-" + pid;
    f.participant_id = pid;
    f.protocol = Protocol::kLoso;
    f.test = idx;
    for (std::size_t i = 0; i < samples.size(); ++i)
      if (samples[i].participant_id != pid) f.train.push_back(i);
    set.folds.push_back(std::move(f));
  }
  return set;
}

FoldSet personalized_folds(std::span<const SampleWindow> samples) {
  const auto groups = by_participant(samples);
  FoldSet set;
  for (const auto& [pid, idx] : groups) {
    if (idx.size() < 2) {
      set.skipped.push_back(pid);
      continue;
    }
    Fold f;
    f.fold_id = "personalized-" + pid;
    f.participant_id = pid;
    f.protocol = Protocol::kPersonalized;
    const std::size_t n_train = (idx.size() + 1) / 2;
    std::set<std::size_t> own_train(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    f.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
    for (std::size_t i = 0; i < samples.size(); ++i)
      if (samples[i].participant_id != pid || own_train.count(i)) f.train.push_back(i);
    set.folds.push_back(std::move(f));
  }
  if (set.folds.empty()) throw ProtocolError("no participant has the 2 samples a personalized fold needs");
  return set;
}

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size())
    throw DimensionError("accuracy: " + std::to_string(predictions.size()) + " predictions vs " +
                         std::to_string(labels.size()) + " labels");
  if (predictions.empty()) throw DimensionError("accuracy: empty input");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += predictions[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

namespace {

AffectScore as_score(const SampleWindow& w, Target target) {
  AffectScore s{w.participant_id, w.label_date, 0.0, 0.0};
  (target == Target::kPA ? s.pa : s.na) = w.score;
  return s;
}

}  // namespace

PreparedFold prepare_fold(std::span<const SampleWindow> candidates, const Fold& fold, Target target,
                          const LabelTable* global_table) {
  PreparedFold out;
  if (global_table != nullptr) {
    out.table = *global_table;
  } else {
    std::vector<AffectScore> train_scores;
    train_scores.reserve(fold.train.size());
    for (std::size_t i : fold.train) train_scores.push_back(as_score(candidates[i], target));
    out.table = build_label_table(train_scores, target);
  }
  for (std::size_t i : fold.train) {
    const auto& w = candidates[i];
    const auto* e = out.table.find(w.participant_id, w.label_date);
    if (e == nullptr) continue;
    out.train.push_back(w);
    out.train.back().label = e->label;
  }
  for (std::size_t i : fold.test) {
    const auto& w = candidates[i];
    std::optional<int> label;
    if (global_table != nullptr) {
      if (const auto* e = global_table->find(w.participant_id, w.label_date)) label = e->label;
    } else {
      label = out.table.classify(w.score);
    }
    if (!label) continue;
    out.test.push_back(w);
    out.test.back().label = *label;
  }
  return out;
}

FoldResult run_fold(std::span<const SampleWindow> candidates, const Fold& fold, const CellSpec& cell,
                    const FeatureSchema& schema, const ExperimentConfig& cfg, const LabelTable* global_table) {
  FoldResult r;
  r.fold_id = cell.label() + "/" + fold.fold_id;
  r.participant_id = fold.participant_id;
  r.seed = derive_seed(cfg.seed, r.fold_id);
  auto prepared = prepare_fold(candidates, fold, cell.target, global_table);
  r.num_train = prepared.train.size();
  r.num_test = prepared.test.size();

  ModelConfig model_cfg = cfg.model;
  model_cfg.seed = derive_seed(r.seed, "model");
  TrainConfig train_cfg = cfg.train;
  train_cfg.seed = r.seed;

  std::unique_ptr<TextEncoder> encoder;
  if (cell.diary == DiaryMode::kWith) {
    // Vocabulary from training-fold text only.
    std::set<std::tuple<std::string, Date, std::string, std::string>> seen;
    std::vector<std::string> texts;
    for (const auto& w : prepared.train)
      for (const auto& e : w.diary_entries)
        if (seen.emplace(e.participant_id, e.date, e.timestamp, e.text).second) texts.push_back(e.text);
    auto tokenizer = Tokenizer::build(texts, static_cast<std::size_t>(cfg.text.max_tokens), cfg.vocab_min_count);
    const auto text_seed = derive_seed(r.seed, "text");
    if (cfg.encoder_factory) {
      encoder = cfg.encoder_factory(std::move(tokenizer), text_seed);
    } else {
      TextEncoderConfig text_cfg = cfg.text;
      text_cfg.seed = text_seed;
      encoder = std::make_unique<ReferenceTextEncoder>(std::move(tokenizer), text_cfg);
    }
  }
  auto forecaster = train_forecaster(prepared.train, schema, std::move(encoder), model_cfg, train_cfg);
  r.report = forecaster.report;
  std::size_t hit = 0;
  for (const auto& w : prepared.test) {
    const auto p = forecaster.predict(w);
    r.predictions.push_back({r.fold_id, w.participant_id, w.label_date, p.probability, p.label, w.label});
    hit += p.label == w.label ? 1 : 0;
  }
  r.accuracy = r.num_test > 0 ? static_cast<double>(hit) / static_cast<double>(r.num_test) : 0.0;
  return r;
}

CellResult run_cell(const CohortDataset& dataset, std::span<const AffectScore> scores, const CellSpec& cell,
                    const ExperimentConfig& cfg) {
  const auto candidates = candidate_windows(dataset, scores, cell.target, cfg.window).samples;
  const FoldSet folds = cell.protocol == Protocol::kLoso ? loso_folds(candidates) : personalized_folds(candidates);
  std::optional<LabelTable> global;
  if (cfg.global_labels) {
    std::vector<AffectScore> all;
    for (const auto& w : candidates) all.push_back(as_score(w, cell.target));
    global = build_label_table(all, cell.target);
  }

  CellResult out;
  out.spec = cell;
  out.skipped_participants = folds.skipped.size();
  out.folds.resize(folds.folds.size());
  std::vector<std::exception_ptr> errors(folds.folds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < folds.folds.size(); i = next++) {
      try {
        out.folds[i] = run_fold(candidates, folds.folds[i], cell, dataset.schema(), cfg,
                                global ? &*global : nullptr);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto jobs = static_cast<std::size_t>(std::max(1, cfg.jobs));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(jobs, folds.folds.size()); ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::size_t hit = 0;
  for (const auto& f : out.folds) {
    out.num_test += f.num_test;
    for (const auto& p : f.predictions) hit += p.prediction == p.label ? 1 : 0;
  }
  out.accuracy = out.num_test > 0 ? static_cast<double>(hit) / static_cast<double>(out.num_test) : 0.0;
  return out;
}

ResultsRow summarize(const CellResult& cell) {
  ResultsRow row{cell.spec, cell.accuracy, cell.num_test, {}};
  for (const auto& f : cell.folds)
    if (f.num_test > 0) row.fold_accuracies.push_back(f.accuracy);
  return row;
}

std::vector<CellSpec> grid_cells() {
  std::vector<CellSpec> cells;
  for (Target t : {Target::kPA, Target::kNA})
    for (DiaryMode d : {DiaryMode::kWith, DiaryMode::kWithout})
      for (Protocol p : {Protocol::kPersonalized, Protocol::kLoso}) cells.push_back({t, d, p});
  return cells;
}

ResultsTable run_experiment_grid(const CohortDataset& dataset, std::span<const AffectScore> scores,
                                 const ExperimentConfig& cfg, std::vector<CellResult>* details) {
  ResultsTable table;
  for (const auto& cell : grid_cells()) {
    auto result = run_cell(dataset, scores, cell, cfg);
    table.rows.push_back(summarize(result));
    if (details != nullptr) details->push_back(std::move(result));
  }
  return table;
}

std::string ResultsTable::to_csv() const {
  std::string out = "target,diary,protocol,accuracy,n_test,fold_accuracies\n";
  for (const auto& r : rows) {
    std::string folds;
    for (std::size_t i = 0; i < r.fold_accuracies.size(); ++i) {
      if (i) folds += ';';
      folds += format_double(r.fold_accuracies[i]);
    }
    out += std::string(to_string(r.spec.target)) + "," + std::string(to_string(r.spec.diary)) + "," +
           std::string(to_string(r.spec.protocol)) + "," + format_double(r.accuracy) + "," +
           std::to_string(r.num_test) + "," + folds + "\n";
  }
  return out;
}

std::string ResultsTable::to_json() const {
  auto rows_json = nlohmann::ordered_json::array();
  for (const auto& r : rows)
    rows_json.push_back({{"target", to_string(r.spec.target)},
                         {"diary", to_string(r.spec.diary)},
                         {"protocol", to_string(r.spec.protocol)},
                         {"accuracy", r.accuracy},
                         {"n_test", r.num_test},
                         {"fold_accuracies", r.fold_accuracies}});
  return nlohmann::ordered_json{{"rows", rows_json}}.dump(2) + "\n";
}

std::string predictions_to_csv(std::span<const CellResult> cells) {
  std::string out = "fold_id,participant_id,label_date,probability,prediction,label\n";
  for (const auto& c : cells)
    for (const auto& f : c.folds)
      for (const auto& p : f.predictions)
        out += csv_escape(p.fold_id) + "," + csv_escape(p.participant_id) + "," + format_date(p.label_date) + "," +
               format_double(p.probability) + "," + std::to_string(p.prediction) + "," + std::to_string(p.label) +
               "\n";
  return out;
}

}  // namespace affect
