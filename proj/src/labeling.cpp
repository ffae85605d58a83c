#include "affect/labeling.hpp"

#include <algorithm>
#include <numeric>
#include <tuple>

namespace affect {

std::string_view to_string(Target t) { return t == Target::kPA ? "PA" : "NA"; }

Target parse_target(std::string_view text) {
  const std::string s = trim(text);
  if (s == "PA" || s == "pa") return Target::kPA;
  if (s == "NA" || s == "na") return Target::kNA;
  throw Error("unknown target '" + s + "' (expected PA or NA)");
}

namespace {

double mean_of(const AffectReport& report, const std::vector<std::string>& names) {
  double sum = 0.0;
  for (const auto& n : names) {
    auto it = report.item_scores.find(n);
    if (it == report.item_scores.end())
      throw IncompleteReportError("affect report (" + report.participant_id + ", " +
                                  format_date(report.date) + ") is missing item '" + n + "'");
    sum += it->second;
  }
  return sum / static_cast<double>(names.size());
}

}  // namespace

AffectScore aggregate_panas(const AffectReport& report, const PanasItems& items) {
  if (items.positive.empty() || items.negative.empty())
    throw IncompleteReportError("PANAS item lists must be non-empty");
  return {report.participant_id, report.date, mean_of(report, items.positive),
          mean_of(report, items.negative)};
}

std::vector<AffectScore> aggregate_reports(const CohortDataset& dataset, const PanasItems& items) {
  std::vector<AffectScore> out;
  out.reserve(dataset.reports().size());
  for (const auto& r : dataset.reports()) out.push_back(aggregate_panas(r, items));
  return out;
}

const LabelEntry* LabelTable::find(const std::string& participant, Date date) const {
  for (const auto& e : entries)
    if (e.participant_id == participant && e.date == date) return &e;
  return nullptr;
}

std::optional<int> LabelTable::classify(double score) const {
  if (exclusion_band && score >= exclusion_band->low && score <= exclusion_band->high)
    return std::nullopt;
  return score > median ? 1 : 0;
}

LabelTable build_label_table(std::span<const AffectScore> scores, Target target) {
  const std::size_t n = scores.size();
  if (n == 0) throw DegenerateDistributionError("no affect scores to label");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  // Ties are broken by (participant, date) so the removed ranks are deterministic.
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double va = scores[a].value(target), vb = scores[b].value(target);
    if (va != vb) return va < vb;
    return std::tie(scores[a].participant_id, scores[a].date) <
           std::tie(scores[b].participant_id, scores[b].date);
  });
  auto at = [&](std::size_t rank) { return scores[order[rank]].value(target); };
  if (at(0) == at(n - 1))
    throw DegenerateDistributionError("all " + std::to_string(n) +
                                      " scores are identical; no median split is possible");

  LabelTable table;
  table.target = target;
  table.median = n % 2 == 1 ? at(n / 2) : 0.5 * (at(n / 2 - 1) + at(n / 2));

  // Remove k ranks centred on the median rank; an odd surplus comes off the upper side.
  const std::size_t k = n / 5;  // floor(kExcludedFraction * n)
  std::size_t lo = 0;
  if (k > 0) lo = n % 2 == 0 ? n / 2 - k / 2 : (n - 1) / 2 - (k - 1) / 2;
  const std::size_t hi = lo + k;
  if (k > 0) table.exclusion_band = ExclusionBand{at(lo), at(hi - 1)};

  for (std::size_t rank = 0; rank < n; ++rank) {
    const auto& s = scores[order[rank]];
    const double v = s.value(target);
    if (rank >= lo && rank < hi) {
      table.excluded.push_back({s.participant_id, s.date, v});
    } else {
      table.entries.push_back({s.participant_id, s.date, v, v > table.median ? 1 : 0});
    }
  }
  auto by_key = [](const auto& a, const auto& b) {
    return std::tie(a.participant_id, a.date) < std::tie(b.participant_id, b.date);
  };
  std::sort(table.entries.begin(), table.entries.end(), by_key);
  std::sort(table.excluded.begin(), table.excluded.end(), by_key);
  return table;
}

std::string label_table_to_csv(const LabelTable& table) {
  struct Row {
    std::string pid;
    Date date;
    double score;
    int label;
    bool excluded;
  };
  std::vector<Row> rows;
  for (const auto& e : table.entries) rows.push_back({e.participant_id, e.date, e.score, e.label, false});
  for (const auto& e : table.excluded) rows.push_back({e.participant_id, e.date, e.score, -1, true});
  std::sort(rows.begin(), rows.end(),
            [](const Row& a, const Row& b) { return std::tie(a.pid, a.date) < std::tie(b.pid, b.date); });
  std::string out = "participant_id,date,target,score,label,excluded\n";
  const std::string target(to_string(table.target));
  for (const auto& r : rows) {
    out += csv_escape(r.pid) + "," + format_date(r.date) + "," + target + "," +
           format_double(r.score) + "," + (r.excluded ? std::string() : std::to_string(r.label)) +
           "," + (r.excluded ? "1" : "0") + "\n";
  }
  return out;
}

LabelTable parse_label_table_csv(std::string_view text, const std::string& source) {
  LabelTable table;
  std::vector<double> all;
  std::size_t line_no = 0;
  bool header = true;
  std::optional<Target> target;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto end = std::min(text.find('\n', pos), text.size());
    const auto line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (header) {
      if (cells != std::vector<std::string>{"participant_id", "date", "target", "score", "label", "excluded"})
        throw DataError("unexpected label table header", source, line_no);
      header = false;
      continue;
    }
    if (cells.size() != 6) throw DataError("expected 6 columns", source, line_no);
    const Target t = parse_target(cells[2]);
    if (target && *target != t) throw DataError("mixed targets in one label table", source, line_no, "target");
    target = t;
    const Date date = parse_date(cells[1]);
    const double score = parse_double(cells[3]);
    all.push_back(score);
    if (cells[5] == "1") {
      table.excluded.push_back({cells[0], date, score});
    } else if (cells[5] == "0" && (cells[4] == "0" || cells[4] == "1")) {
      table.entries.push_back({cells[0], date, score, cells[4] == "1" ? 1 : 0});
    } else {
      throw DataError("bad label/excluded value", source, line_no, "label");
    }
  }
  if (all.empty()) throw DataError("label table has no rows", source);
  table.target = *target;
  std::sort(all.begin(), all.end());
  const std::size_t n = all.size();
  table.median = n % 2 == 1 ? all[n / 2] : 0.5 * (all[n / 2 - 1] + all[n / 2]);
  if (!table.excluded.empty()) {
    ExclusionBand band{table.excluded.front().score, table.excluded.front().score};
    for (const auto& e : table.excluded) {
      band.low = std::min(band.low, e.score);
      band.high = std::max(band.high, e.score);
    }
    table.exclusion_band = band;
  }
  return table;
}

namespace {

std::optional<SampleWindow> build_window(const CohortDataset& dataset, const std::string& pid,
                                         Date label_date, WindowSpec spec) {
  const std::size_t width = dataset.schema().size();
  SampleWindow w;
  w.participant_id = pid;
  w.label_date = label_date;
  w.anchor_date = add_days(label_date, -spec.horizon_days);
  w.objective.resize(spec.window_days, static_cast<Eigen::Index>(width));
  w.observed.resize(spec.window_days, static_cast<Eigen::Index>(width));
  const Date first = w.window_start();
  for (int day = 0; day < spec.window_days; ++day) {
    const auto* o = dataset.find_observation(pid, add_days(first, day));
    if (o == nullptr) return std::nullopt;
    for (std::size_t f = 0; f < width; ++f) {
      w.objective(day, static_cast<Eigen::Index>(f)) = o->values[f];
      w.observed(day, static_cast<Eigen::Index>(f)) = o->observed[f];
    }
  }
  w.diary_entries = dataset.diaries_between(pid, first, w.anchor_date);
  return w;
}

}  // namespace

AssembledSamples assemble_samples(const CohortDataset& dataset, const LabelTable& labels,
                                  WindowSpec spec) {
  AssembledSamples out;
  for (const auto& e : labels.entries) {
    auto w = build_window(dataset, e.participant_id, e.date, spec);
    if (!w) {
      ++out.skipped;
      continue;
    }
    w->score = e.score;
    w->label = e.label;
    out.samples.push_back(std::move(*w));
  }
  return out;
}

AssembledSamples candidate_windows(const CohortDataset& dataset,
                                   std::span<const AffectScore> scores, Target target,
                                   WindowSpec spec) {
  AssembledSamples out;
  for (const auto& s : scores) {
    auto w = build_window(dataset, s.participant_id, s.date, spec);
    if (!w) {
      ++out.skipped;
      continue;
    }
    w->score = s.value(target);
    w->label = -1;
    out.samples.push_back(std::move(*w));
  }
  std::sort(out.samples.begin(), out.samples.end(), [](const SampleWindow& a, const SampleWindow& b) {
    return std::tie(a.participant_id, a.anchor_date) < std::tie(b.participant_id, b.anchor_date);
  });
  return out;
}

}  // namespace affect
