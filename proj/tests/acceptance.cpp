// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers as
// arguments to run a subset. Exit status is non-zero when any selected
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "affect/evaluation.hpp"
#include "affect/explainability.hpp"
#include "affect/synth_cohort.hpp"
#include "affect/training.hpp"
#include "gradcheck.hpp"
#include "leakage.hpp"

using namespace affect;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::vector<SampleWindow> labeled_windows(const CohortDataset& data, Target target) {
  const auto scores = aggregate_reports(data);
  return assemble_samples(data, build_label_table(scores, target)).samples;
}

// ---- 1: label protocol against rank enumeration -------------------------

// Excluded ranks: the floor(n/5)-long block whose centre is nearest the median
// rank (upper block on ties); the rest split at the median.
struct OracleSplit {
  std::multiset<double> excluded, low, high;
};

OracleSplit rank_oracle(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size(), k = n / 5;
  std::size_t start = 0;
  double best = 1e300;
  for (std::size_t lo = 0; lo + k <= n; ++lo) {
    const double d = std::fabs(2.0 * static_cast<double>(lo) + static_cast<double>(k) - static_cast<double>(n));
    if (d <= best) {
      best = d;
      start = lo;
    }
  }
  const double median = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  OracleSplit s;
  for (std::size_t i = 0; i < n; ++i) {
    if (i >= start && i < start + k)
      s.excluded.insert(v[i]);
    else
      (v[i] > median ? s.high : s.low).insert(v[i]);
  }
  return s;
}

Outcome label_protocol() {
  std::size_t cases = 0, bad = 0;
  auto check = [&](const std::vector<AffectScore>& scores) {
    ++cases;
    std::vector<double> pa;
    for (const auto& s : scores) pa.push_back(s.pa);
    const auto table = build_label_table(scores, Target::kPA);
    const auto want = rank_oracle(pa);
    OracleSplit got;
    for (const auto& e : table.excluded) got.excluded.insert(e.score);
    for (const auto& e : table.entries) (e.label ? got.high : got.low).insert(e.score);
    const long ones = static_cast<long>(got.high.size()), zeros = static_cast<long>(got.low.size());
    const bool ok = table.excluded.size() == scores.size() / 5 && std::abs(ones - zeros) <= 1 &&
                    got.excluded == want.excluded && got.high == want.high && got.low == want.low;
    bad += ok ? 0 : 1;
  };
  // Synthetic cohorts, truncated to every n <= 50.
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    SynthConfig sc;
    sc.num_participants = 3;
    sc.days_per_participant = 20;
    sc.seed = seed;
    sc.effects.feature_effects = {{"deep_sleep_duration", 1.0}};
    const auto scores = aggregate_reports(generate(sc).dataset);
    std::set<double> distinct;
    for (const auto& s : scores) distinct.insert(s.pa);
    if (distinct.size() != scores.size()) return {false, "synthetic scores are not all distinct"};
    for (std::size_t n = 2; n <= 50; ++n) check({scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(n)});
  }
  // Random distinct scores, shuffled.
  std::mt19937_64 rng(99);
  for (std::size_t n = 2; n <= 50; ++n)
    for (int rep = 0; rep < 10; ++rep) {
      std::vector<AffectScore> scores;
      for (std::size_t i = 0; i < n; ++i) {
        const double v = static_cast<double>(i) * 1.7 + std::uniform_real_distribution<double>(0, 1)(rng);
        scores.push_back({"P" + std::to_string(i % 3), add_days(parse_date("2024-01-01"), static_cast<int>(i)), v, v});
      }
      std::shuffle(scores.begin(), scores.end(), rng);
      check(scores);
    }
  return {bad == 0, std::to_string(cases - bad) + "/" + std::to_string(cases) + " cohorts match the rank oracle"};
}

// ---- 2: gradient check ------------------------------------------------

Outcome gradient_check() {
  const FeatureSchema schema({{"a", "u", Modality::kSleep}, {"b", "u", Modality::kActivity}, {"c", "u", Modality::kEnvironment}});
  ModelConfig mc;
  mc.model_dim = 8;
  mc.num_heads = 2;
  mc.num_layers = 2;
  mc.mlp_hidden = 6;
  mc.ffn_dim = 12;
  mc.dropout = 0.0;
  mc.seed = 5;
  FusionModel model(mc, schema, 2, 0);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0, 1);
  std::vector<FeatureToken> tokens;
  for (std::size_t f = 0; f < 3; ++f)
    for (int d = 0; d < 2; ++d) tokens.push_back({model.layout().objective_id(f, d), n(rng), d, !(f == 1 && d == 0)});
  const auto res = testing_support::grad_check(
      model.parameters(),
      [&](nn::Tape& t) { return nn::bce_with_logits(t, model.forward(t, tokens, nn::ForwardContext{}), 1.0); }, 200, 3);
  return {res.max_rel_error < 1e-4,
          "max relative error " + fmt("%.2e", res.max_rel_error) + " over " + std::to_string(res.probes) + " probes"};
}

// ---- 3: Shapley oracle equivalence -------------------------------------

Outcome shapley_oracle() {
  const FeatureSchema schema({{"a", "u", Modality::kSleep}, {"b", "u", Modality::kActivity},
                              {"c", "u", Modality::kMetabolic}, {"d", "u", Modality::kEnvironment}});
  ModelConfig mc;
  mc.model_dim = 8;
  mc.num_heads = 2;
  mc.num_layers = 1;
  mc.mlp_hidden = 8;
  mc.ffn_dim = 16;
  mc.seed = 12;
  FusionModel model(mc, schema, 2, 0);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0, 1.5);
  auto draw = [&] {
    std::vector<FeatureToken> t;
    for (std::size_t f = 0; f < 4; ++f)
      for (int d = 0; d < 2; ++d) t.push_back({model.layout().objective_id(f, d), n(rng), d, true});
    return t;
  };
  const auto sample = draw();
  std::vector<std::vector<FeatureToken>> background;
  for (int i = 0; i < 10; ++i) background.push_back(draw());
  const auto f = model_hybrid(model, sample, background);
  const auto v = background_value_function(f, background.size());
  const auto exact = shapley_exact(v, 8);
  const auto est = shapley_permutation(f, 8, background.size(), {20000, 17, true});
  double worst = 0, sum = 0;
  for (std::size_t i = 0; i < 8; ++i) {
    worst = std::max(worst, std::abs(est[i] - exact[i]));
    sum += exact[i];
  }
  const double gap = std::abs(sum - (v(std::vector<bool>(8, true)) - v(std::vector<bool>(8, false))));
  return {worst < 0.01 && gap < 1e-9, "max |dphi| " + fmt("%.2e", worst) + ", efficiency gap " + fmt("%.1e", gap)};
}

// ---- shared small-model settings for the learning criteria -------------

ExperimentConfig learning_config() {
  ExperimentConfig cfg;
  cfg.model.model_dim = 16;
  cfg.model.num_heads = 2;
  cfg.model.num_layers = 1;
  cfg.model.mlp_hidden = 16;
  cfg.model.ffn_dim = 32;
  cfg.model.dropout = 0.0;
  cfg.text.embedding_dim = 16;
  cfg.text.num_heads = 2;
  cfg.text.num_layers = 1;
  cfg.text.ffn_dim = 32;
  cfg.text.max_tokens = 32;
  cfg.text.dropout = 0.0;
  cfg.train.stage1_epochs = 15;
  cfg.train.stage2_epochs = 15;
  cfg.train.stage1_lr = 3e-3;
  cfg.train.stage2_lr = 3e-3;
  cfg.train.encoder_lr_stage2 = 0.0;
  cfg.seed = 5;
  return cfg;
}

// ---- 4: diary-signal recovery ------------------------------------------

Outcome diary_signal() {
  SynthConfig sc;
  sc.num_participants = 16;
  sc.days_per_participant = 60;
  sc.seed = 11;
  sc.effects.diary_vocab_effects = {{"happy", 2.0}};
  sc.effects.noise_std = 0.3;
  sc.diary_rate = 0.8;
  sc.word_rate = 0.4;
  const auto cohort = generate(sc);
  const auto scores = aggregate_reports(cohort.dataset);
  const auto cfg = learning_config();
  const auto with = run_cell(cohort.dataset, scores, {Target::kPA, DiaryMode::kWith, Protocol::kLoso}, cfg);
  const auto without = run_cell(cohort.dataset, scores, {Target::kPA, DiaryMode::kWithout, Protocol::kLoso}, cfg);
  return {with.accuracy >= 0.75 && with.accuracy - without.accuracy >= 0.10,
          "LOSO accuracy with diary " + fmt("%.3f", with.accuracy) + ", without " + fmt("%.3f", without.accuracy)};
}

// ---- 5: personalization gap ----------------------------------------------

Outcome personalization_gap() {
  // Few participants with long histories: the personal half of a participant
  // is enough to learn which polarity applies to them.
  SynthConfig sc;
  sc.num_participants = 6;
  sc.days_per_participant = 100;
  sc.seed = 13;
  sc.effects.feature_effects = {{"deep_sleep_duration", 3.0}};
  sc.effects.per_participant_polarity_flip = true;
  sc.effects.noise_std = 0.3;
  const auto cohort = generate(sc);
  const auto scores = aggregate_reports(cohort.dataset);
  auto cfg = learning_config();
  cfg.model.num_layers = 2;
  const auto pers = run_cell(cohort.dataset, scores, {Target::kPA, DiaryMode::kWithout, Protocol::kPersonalized}, cfg);
  const auto loso = run_cell(cohort.dataset, scores, {Target::kPA, DiaryMode::kWithout, Protocol::kLoso}, cfg);
  return {pers.accuracy - loso.accuracy >= 0.05,
          "personalized " + fmt("%.3f", pers.accuracy) + ", non-personalized " + fmt("%.3f", loso.accuracy)};
}

// ---- 6: attention recovery -----------------------------------------------

Outcome attention_recovery() {
  // Diary text comes from the generator with several feeling words after the
  // same "I felt" carrier, so only the word itself can decide. Each entry is
  // one stage-1 example labeled by whether it mentions "ashamed".
  SynthConfig sc;
  sc.num_participants = 8;
  sc.days_per_participant = 60;
  sc.seed = 17;
  sc.effects.diary_vocab_effects = {{"ashamed", -1.0}, {"happy", 1.0}, {"okay", 0.0}, {"tired", 0.0}};
  sc.diary_rate = 0.9;
  sc.word_rate = 0.3;
  sc.second_entry_rate = 0.0;
  const auto cohort = generate(sc);
  const auto& diaries = cohort.dataset.diaries();
  std::vector<std::string> texts;
  for (const auto& e : diaries) texts.push_back(e.text);
  const auto cfg = learning_config();
  TextEncoderConfig tc = cfg.text;
  tc.seed = 3;
  ReferenceTextEncoder encoder(Tokenizer::build(texts, static_cast<std::size_t>(tc.max_tokens)), tc);
  std::vector<DiarySample> train, val;
  for (std::size_t i = 0; i < diaries.size(); ++i) {
    const auto words = Tokenizer::split_words(diaries[i].text);
    const bool planted = std::find(words.begin(), words.end(), "ashamed") != words.end();
    DiarySample ds{diaries[i].participant_id, diaries[i].date, {encoder.tokenizer().tokenize(diaries[i].text)},
                   planted ? 0 : 1};
    (i % 7 == 6 ? val : train).push_back(std::move(ds));
  }
  TrainConfig tr = cfg.train;
  tr.seed = 4;
  const auto s1 = stage1_finetune(encoder, train, val, tr);
  const auto top = attention_keyword_scores(encoder, diaries, 3, 5);
  std::string ranked;
  bool found = false;
  for (const auto& k : top) {
    ranked += (ranked.empty() ? "" : ", ") + k.keyword + " " + fmt("%.3f", k.mean_attention);
    found = found || k.keyword == "ashamed";
  }
  const double acc = s1.report.validation_accuracy.empty() ? 0.0 : s1.report.validation_accuracy.back();
  return {found, "top keywords: " + ranked + "; stage-1 validation accuracy " + fmt("%.3f", acc)};
}

// ---- 7: Shapley direction recovery ---------------------------------------

Outcome shapley_direction() {
  const std::map<std::string, double> planted = {{"deep_sleep_duration", 1.2}, {"sleep_hrv", -1.0},
                                                 {"active_time", 0.9},         {"sleep_heart_rate", -0.9},
                                                 {"walk_steps", 0.8}};
  SynthConfig sc;
  sc.num_participants = 10;
  sc.days_per_participant = 60;
  sc.seed = 19;
  sc.effects.feature_effects = planted;
  sc.effects.noise_std = 0.3;
  const auto cohort = generate(sc);
  const auto windows = labeled_windows(cohort.dataset, Target::kPA);
  const auto cfg = learning_config();
  ModelConfig mc = cfg.model;
  mc.seed = 6;
  TrainConfig tr = cfg.train;
  tr.seed = 7;
  const auto f = train_forecaster(windows, cohort.dataset.schema(), nullptr, mc, tr);

  std::vector<std::vector<FeatureToken>> background;
  for (std::size_t i : select_background(windows.size(), 20, 1)) background.push_back(f.tokens(windows[i]));
  std::map<std::string, std::vector<std::pair<double, double>>> by_feature;  // (value, phi)
  for (std::size_t i : select_background(windows.size(), 40, 2)) {
    const auto attr = shapley_sample(f.model, f.schema, f.tokens(windows[i]), background, {40, i, true}, "s");
    for (const auto& a : attr) by_feature[a.feature_name].emplace_back(a.feature_value, a.shapley_value);
  }
  int agree = 0;
  std::string detail;
  double deep_sleep_high = 0;
  for (const auto& [name, weight] : planted) {
    auto rows = by_feature.at(name);
    std::sort(rows.begin(), rows.end());
    double high = 0;
    const std::size_t half = rows.size() / 2;
    for (std::size_t k = half; k < rows.size(); ++k) high += rows[k].second / static_cast<double>(rows.size() - half);
    if (name == "deep_sleep_duration") deep_sleep_high = high;
    agree += (high > 0) == (weight > 0) ? 1 : 0;
    detail += (detail.empty() ? "" : ", ") + name + " " + fmt("%+.4f", high);
  }
  const double rate = agree / 5.0;
  return {deep_sleep_high > 0 && rate >= 0.9, "sign agreement " + fmt("%.1f", rate) + " (" + detail + ")"};
}

// ---- 8: leakage suite ----------------------------------------------------

Outcome leakage() {
  SynthConfig sc;
  sc.num_participants = 6;
  sc.days_per_participant = 40;
  sc.seed = 23;
  sc.missing_rate = 0.05;
  sc.effects.feature_effects = {{"deep_sleep_duration", 1.0}};
  sc.effects.diary_vocab_effects = {{"happy", 1.0}};
  const auto data = impute_missing(generate(sc).dataset);
  const auto scores = aggregate_reports(data);
  testing_support::LeakageReport report;
  for (Target t : {Target::kPA, Target::kNA}) {
    const auto candidates = candidate_windows(data, scores, t).samples;
    testing_support::check_window_dates(candidates, data, WindowSpec{}, report);
    testing_support::check_window_dates(labeled_windows(data, t), data, WindowSpec{}, report);
    for (Protocol p : {Protocol::kLoso, Protocol::kPersonalized})
      testing_support::check_fold_isolation(candidates, p, t, report);
  }
  std::string detail = std::to_string(report.checks) + " assertions, " + std::to_string(report.violations.size()) +
                       " violations";
  if (!report.violations.empty()) detail += " (first: " + report.violations.front() + ")";
  return {report.violations.empty(), detail};
}

// ---- 9: determinism --------------------------------------------------------

Outcome determinism() {
  auto once = [](int jobs) {
    SynthConfig sc;
    sc.num_participants = 4;
    sc.days_per_participant = 30;
    sc.seed = 29;
    sc.effects.feature_effects = {{"deep_sleep_duration", 1.0}};
    sc.effects.diary_vocab_effects = {{"happy", 1.0}};
    const auto cohort = generate(sc);
    auto cfg = learning_config();
    cfg.model.dropout = 0.1;
    cfg.text.dropout = 0.1;
    cfg.train.stage1_epochs = 2;
    cfg.train.stage2_epochs = 2;
    cfg.train.encoder_lr_stage2 = 1e-4;
    cfg.jobs = jobs;
    const auto data = impute_missing(cohort.dataset);
    return run_experiment_grid(data, aggregate_reports(data), cfg).to_csv();
  };
  const auto a = once(1);
  const auto b = once(1);
  const auto c = once(2);
  return {a == b && a == c, a == b ? (a == c ? "two sequential runs and one threaded run are byte-identical (" +
                                                   std::to_string(a.size()) + " bytes)"
                                             : "threaded run differs")
                                   : "sequential runs differ"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"label protocol", label_protocol},         {"gradient check", gradient_check},
      {"shapley oracle", shapley_oracle},         {"diary-signal recovery", diary_signal},
      {"personalization gap", personalization_gap}, {"attention recovery", attention_recovery},
      {"shapley direction", shapley_direction},   {"leakage suite", leakage},
      {"determinism", determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!selected.empty() && !selected.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] %d %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first, o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
