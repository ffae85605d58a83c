// affectcast: batch entry point for synthesis, labeling, training, evaluation
// and explanation runs driven by a key-value config file.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "affect/common.hpp"
#include "affect/core_data.hpp"
#include "affect/evaluation.hpp"
#include "affect/explainability.hpp"
#include "affect/labeling.hpp"
#include "affect/run_config.hpp"
#include "affect/synth_cohort.hpp"
#include "affect/training.hpp"

extern char** environ;

namespace fs = std::filesystem;
using namespace affect;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
};

struct Loaded {
  RunConfig cfg;
  std::string invocation;  // how to re-run a prerequisite with the same config
};

Loaded load_config(const Common& common) {
  KeyValueConfig kv;
  if (!common.config_path.empty()) kv = KeyValueConfig::load(common.config_path);
  kv.apply_environment(environ);
  for (const auto& o : common.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError(o, "--set expects key=value");
    kv.set(trim(std::string_view(o).substr(0, eq)), trim(std::string_view(o).substr(eq + 1)));
  }
  Loaded l{RunConfig::from(kv), {}};
  if (!common.config_path.empty()) l.invocation = " --config " + common.config_path;
  for (const auto& o : common.overrides) l.invocation += " --set " + o;
  return l;
}

std::uint64_t config_hash(const RunConfig& cfg) { return cfg.to_key_values().hash(); }

// Outputs go to <dir>.partial and are renamed into place once complete.
class StagedDir {
 public:
  explicit StagedDir(fs::path final_dir) : final_(std::move(final_dir)), tmp_(final_.string() + ".partial") {
    fs::remove_all(tmp_);
    fs::create_directories(tmp_);
  }
  StagedDir(const StagedDir&) = delete;
  StagedDir& operator=(const StagedDir&) = delete;
  ~StagedDir() {
    if (!committed_) {
      std::error_code ec;
      fs::remove_all(tmp_, ec);
    }
  }

  const fs::path& path() const { return tmp_; }
  void write(const std::string& name, std::string_view contents) { write_file_atomic(tmp_ / name, contents); }

  void commit(Manifest manifest) {
    for (const auto& entry : fs::recursive_directory_iterator(tmp_))
      if (entry.is_regular_file()) manifest.outputs.push_back(fs::relative(entry.path(), tmp_).generic_string());
    manifest.outputs.push_back(kManifestFile);
    std::sort(manifest.outputs.begin(), manifest.outputs.end());
    write(kManifestFile, manifest.to_json());
    fs::remove_all(final_);
    if (final_.has_parent_path()) fs::create_directories(final_.parent_path());
    fs::rename(tmp_, final_);
    committed_ = true;
  }

 private:
  fs::path final_;
  fs::path tmp_;
  bool committed_ = false;
};

std::vector<fs::path> cohort_files(const RunConfig& cfg) {
  return {cfg.data_dir / CohortFiles::kObservations, cfg.data_dir / CohortFiles::kDiaries,
          cfg.data_dir / CohortFiles::kReports, cfg.resolved_schema_file()};
}

void require(const fs::path& path, const std::string& command) {
  if (!fs::exists(path)) throw PrerequisiteError(path.string(), command);
}

CohortDataset load_data(const Loaded& l) {
  for (const auto& f : cohort_files(l.cfg)) require(f, "affectcast synth" + l.invocation);
  const auto schema = FeatureSchema::load(l.cfg.resolved_schema_file());
  return impute_missing(load_cohort(l.cfg.data_dir / CohortFiles::kObservations,
                                    l.cfg.data_dir / CohortFiles::kDiaries,
                                    l.cfg.data_dir / CohortFiles::kReports, schema));
}

fs::path labels_file(const RunConfig& cfg, Target t) {
  return cfg.output_dir / "labels" / ("labels_" + std::string(t == Target::kPA ? "pa" : "na") + ".csv");
}

Manifest base_manifest(const std::string& command, const RunConfig& cfg, std::vector<fs::path> inputs) {
  Manifest m;
  m.command = command;
  m.config_hash = config_hash(cfg);
  m.seed = cfg.seed;
  m.inputs = checksum_inputs(inputs);
  m.artifact_versions = {{"tool", kToolVersion},
                         {"model_checkpoint", std::to_string(FusionModel::kCheckpointVersion)},
                         {"encoder_checkpoint", std::to_string(ReferenceTextEncoder::kCheckpointVersion)}};
  return m;
}

int cmd_synth(const Common& common, std::optional<std::uint64_t> seed, const std::string& out) {
  auto l = load_config(common);
  if (seed) {
    l.cfg.seed = *seed;
    l.cfg.synth.seed = *seed;
  }
  if (!out.empty()) l.cfg.data_dir = out;
  const auto cohort = generate(l.cfg.synth);
  StagedDir dir(l.cfg.data_dir);
  write_cohort_dir(cohort.dataset, dir.path());
  dir.write("ground_truth.json", cohort.ground_truth_json());
  dir.commit(base_manifest("synth", l.cfg, {}));
  std::cout << "synth: " << cohort.dataset.participant_ids().size() << " participants, "
            << cohort.dataset.observations().size() << " days, " << cohort.dataset.diaries().size()
            << " diary entries -> " << l.cfg.data_dir.string() << "\n";
  return 0;
}

int cmd_labels(const Common& common) {
  const auto l = load_config(common);
  const auto dataset = load_data(l);
  const auto scores = aggregate_reports(dataset);
  StagedDir dir(l.cfg.output_dir / "labels");
  for (Target t : {Target::kPA, Target::kNA}) {
    const auto table = build_label_table(scores, t);
    dir.write(labels_file(l.cfg, t).filename().string(), label_table_to_csv(table));
    std::size_t pos = 0;
    for (const auto& e : table.entries) pos += e.label == 1 ? 1 : 0;
    std::cout << "labels " << to_string(t) << ": " << table.entries.size() << " labeled (" << pos << " high, "
              << table.entries.size() - pos << " low), " << table.excluded.size() << " excluded, median "
              << format_double(table.median) << "\n";
  }
  dir.commit(base_manifest("labels", l.cfg, cohort_files(l.cfg)));
  return 0;
}

int cmd_train(const Common& common) {
  const auto l = load_config(common);
  const auto dataset = load_data(l);
  const auto label_path = labels_file(l.cfg, l.cfg.target);
  require(label_path, "affectcast labels" + l.invocation);
  const auto table = parse_label_table_csv(read_file(label_path), label_path.string());
  const auto assembled = assemble_samples(dataset, table);
  if (assembled.samples.empty()) throw Error("no sample windows could be assembled from the labeled dates");

  std::unique_ptr<TextEncoder> encoder;
  if (l.cfg.diary == DiaryMode::kWith) {
    std::vector<std::string> texts;
    for (const auto& e : dataset.diaries()) texts.push_back(e.text);
    TextEncoderConfig text = l.cfg.text;
    text.seed = derive_seed(l.cfg.seed, "text");
    encoder = std::make_unique<ReferenceTextEncoder>(
        Tokenizer::build(texts, static_cast<std::size_t>(text.max_tokens), l.cfg.vocab_min_count), text);
  }
  ModelConfig model = l.cfg.model;
  model.seed = derive_seed(l.cfg.seed, "model");
  TrainConfig train = l.cfg.train;
  train.seed = l.cfg.seed;
  const auto forecaster = train_forecaster(assembled.samples, dataset.schema(), std::move(encoder), model, train);

  StagedDir dir(l.cfg.output_dir / "train");
  save_forecaster(forecaster, dir.path());
  dir.write("train_report.json", forecaster.report.to_json());
  auto inputs = cohort_files(l.cfg);
  inputs.push_back(label_path);
  dir.commit(base_manifest("train", l.cfg, inputs));
  const auto& s2 = forecaster.report.stage2;
  std::cout << "train: " << assembled.samples.size() << " windows (" << assembled.skipped << " skipped), stage-2 loss "
            << (s2.train_loss.empty() ? std::string("n/a") : format_double(s2.train_loss.back())) << ", checksum "
            << hex64(forecaster.report.checksum) << "\n";
  return 0;
}

int cmd_evaluate(const Common& common, bool grid, std::optional<int> jobs) {
  auto l = load_config(common);
  if (jobs) {
    if (*jobs < 1) throw ConfigError("--jobs", "must be at least 1");
    l.cfg.jobs = *jobs;
  }
  const auto dataset = load_data(l);
  const auto scores = aggregate_reports(dataset);
  const auto exp = l.cfg.experiment();
  std::vector<CellResult> cells;
  ResultsTable table;
  if (grid) {
    table = run_experiment_grid(dataset, scores, exp, &cells);
  } else {
    cells.push_back(run_cell(dataset, scores, {l.cfg.target, l.cfg.diary, l.cfg.protocol}, exp));
    table.rows.push_back(summarize(cells.back()));
  }
  StagedDir dir(l.cfg.output_dir / "evaluate");
  dir.write("results.csv", table.to_csv());
  dir.write("results.json", table.to_json());
  dir.write("predictions.csv", predictions_to_csv(cells));
  dir.commit(base_manifest("evaluate", l.cfg, cohort_files(l.cfg)));
  for (const auto& r : table.rows)
    std::cout << to_string(r.spec.target) << " " << to_string(r.spec.diary) << " diary, " << to_string(r.spec.protocol)
              << ": accuracy " << format_double(r.accuracy) << " over " << r.num_test << " windows\n";
  return 0;
}

int cmd_explain(const Common& common, std::optional<std::size_t> num_samples, const std::string& participant) {
  const auto l = load_config(common);
  // Checked in pipeline order so the message names the earliest missing step.
  const auto dataset = load_data(l);
  const auto label_path = labels_file(l.cfg, l.cfg.target);
  require(label_path, "affectcast labels" + l.invocation);
  const auto train_dir = l.cfg.output_dir / "train";
  require(train_dir / ForecasterFiles::kModel, "affectcast train" + l.invocation);
  const auto forecaster = load_forecaster(train_dir);
  const auto samples =
      assemble_samples(dataset, parse_label_table_csv(read_file(label_path), label_path.string())).samples;
  if (samples.empty()) throw Error("no sample windows to explain");

  std::vector<std::size_t> chosen;
  if (!participant.empty()) {
    for (std::size_t i = 0; i < samples.size(); ++i)
      if (samples[i].participant_id == participant) chosen.push_back(i);
    if (chosen.empty()) throw Error("participant '" + participant + "' has no labeled windows");
  } else {
    chosen = select_background(samples.size(), num_samples.value_or(l.cfg.explain.num_samples),
                               derive_seed(l.cfg.seed, "explain"));
  }
  std::vector<std::vector<FeatureToken>> background;
  for (std::size_t i :
       select_background(samples.size(), l.cfg.explain.background_size, derive_seed(l.cfg.seed, "background")))
    background.push_back(forecaster.tokens(samples[i]));

  std::vector<Attribution> attributions;
  for (std::size_t i : chosen) {
    const auto& s = samples[i];
    const std::string ref = s.participant_id + "@" + format_date(s.label_date);
    PermutationOptions opts{l.cfg.explain.num_permutations, derive_seed(l.cfg.seed, ref), true};
    auto a = shapley_sample(forecaster.model, forecaster.schema, forecaster.tokens(s), background, opts, ref);
    attributions.insert(attributions.end(), a.begin(), a.end());
  }
  std::vector<KeywordScore> keywords;
  if (forecaster.with_diary() && !dataset.diaries().empty())
    keywords = attention_keyword_scores(*forecaster.encoder, dataset.diaries(), l.cfg.explain.top_k,
                                        l.cfg.explain.min_occurrences);

  StagedDir dir(l.cfg.output_dir / "explain");
  const auto files = export_attribution_report(attributions, keywords, dir.path());
  for (const auto& w : files.warnings) std::cerr << "warning: " << w << "\n";
  auto inputs = cohort_files(l.cfg);
  inputs.push_back(label_path);
  inputs.push_back(train_dir / ForecasterFiles::kModel);
  dir.commit(base_manifest("explain", l.cfg, inputs));
  std::cout << "explain: " << chosen.size() << " samples, " << attributions.size() << " attributions, "
            << keywords.size() << " keywords\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Affect forecasting from wearable features and diaries"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", common.config_path, "key-value config file");
    sub->add_option("--set", common.overrides, "override a config key (key=value)");
  };

  auto* synth = app.add_subcommand("synth", "generate a synthetic cohort");
  add_common(synth);
  std::optional<std::uint64_t> seed;
  std::string out;
  synth->add_option("--seed", seed, "generator seed (experiment.seed)");
  synth->add_option("--out", out, "output directory (paths.data_dir)");

  auto* labels = app.add_subcommand("labels", "build PA/NA label tables");
  add_common(labels);

  auto* train = app.add_subcommand("train", "train a forecaster on all labeled windows");
  add_common(train);

  auto* evaluate = app.add_subcommand("evaluate", "cross-validate one cell or the full grid");
  add_common(evaluate);
  bool grid = false;
  std::optional<int> jobs;
  evaluate->add_flag("--grid", grid, "run all 8 cells");
  evaluate->add_option("--jobs", jobs, "concurrent folds");

  auto* explain = app.add_subcommand("explain", "Shapley attributions and keyword attention");
  add_common(explain);
  std::optional<std::size_t> samples;
  std::string participant;
  explain->add_option("--samples", samples, "number of windows to explain");
  explain->add_option("--participant", participant, "explain every window of one participant");

  CLI11_PARSE(app, argc, argv);
  try {
    if (synth->parsed()) return cmd_synth(common, seed, out);
    if (labels->parsed()) return cmd_labels(common);
    if (train->parsed()) return cmd_train(common);
    if (evaluate->parsed()) return cmd_evaluate(common, grid, jobs);
    if (explain->parsed()) return cmd_explain(common, samples, participant);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
