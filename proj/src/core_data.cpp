#include "affect/core_data.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <tuple>
#include <unordered_map>

#include "json.hpp"

namespace affect {

std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::kSleep: return "sleep";
    case Modality::kPhysiology: return "physiology";
    case Modality::kActivity: return "activity";
    case Modality::kMetabolic: return "metabolic";
    case Modality::kEnvironment: return "environment";
  }
  return "unknown";
}

Modality parse_modality(std::string_view text) {
  const std::string s = trim(text);
  if (s == "sleep") return Modality::kSleep;
  if (s == "physiology") return Modality::kPhysiology;
  if (s == "activity") return Modality::kActivity;
  if (s == "metabolic") return Modality::kMetabolic;
  if (s == "environment") return Modality::kEnvironment;
  throw DataError("unknown modality '" + s + "'");
}

FeatureSchema::FeatureSchema(std::vector<FeatureSpec> features) : features_(std::move(features)) {
  std::set<std::string> seen;
  for (const auto& f : features_) {
    if (f.name.empty()) throw DataError("feature name must be non-empty");
    if (f.name == "participant_id" || f.name == "date")
      throw DataError("feature name '" + f.name + "' is reserved");
    if (!seen.insert(f.name).second) throw DataError("duplicate feature name '" + f.name + "'");
  }
}

FeatureSchema FeatureSchema::parse(std::string_view text) {
  std::vector<FeatureSpec> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    auto cells = split_csv_line(t);
    if (cells.size() != 3)
      throw DataError("expected name,unit,modality", "schema", lineno);
    try {
      out.push_back({trim(cells[0]), trim(cells[1]), parse_modality(cells[2])});
    } catch (const DataError& e) {
      throw DataError(e.what(), "schema", lineno, "modality");
    }
  }
  return FeatureSchema(std::move(out));
}

FeatureSchema FeatureSchema::load(const std::filesystem::path& path) { return parse(read_file(path)); }

FeatureSchema FeatureSchema::default_schema() {
  return FeatureSchema({
      {"light_sleep_duration", "min", Modality::kSleep},
      {"deep_sleep_duration", "min", Modality::kSleep},
      {"total_sleep_duration", "min", Modality::kSleep},
      {"sleep_heart_rate", "bpm", Modality::kPhysiology},
      {"sleep_hrv", "ms", Modality::kPhysiology},
      {"active_time", "min", Modality::kActivity},
      {"total_movement", "steps", Modality::kActivity},
      {"walk_steps", "steps", Modality::kActivity},
      {"run_steps", "steps", Modality::kActivity},
      {"met", "MET", Modality::kMetabolic},
      {"calorie_intake", "kcal", Modality::kMetabolic},
      {"target_calorie_expenditure", "kcal", Modality::kMetabolic},
      {"atmospheric_pressure", "hPa", Modality::kEnvironment},
  });
}

std::string FeatureSchema::serialize() const {
  std::string out;
  for (const auto& f : features_) {
    out += f.name + "," + f.unit + "," + std::string(to_string(f.modality)) + "\n";
  }
  return out;
}

std::optional<std::size_t> FeatureSchema::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < features_.size(); ++i)
    if (features_[i].name == name) return i;
  return std::nullopt;
}

std::uint64_t FeatureSchema::fingerprint() const { return fnv1a64(serialize()); }

DiaryEntry make_diary_entry(std::string participant_id, Date date, std::string text,
                            std::string timestamp) {
  if (trim(text).empty()) throw DataError("diary text is empty", {}, 0, "text");
  if (participant_id.empty()) throw DataError("empty participant_id", {}, 0, "participant_id");
  return {std::move(participant_id), date, std::move(text), std::move(timestamp)};
}

PanasItems PanasItems::standard() {
  return {{"interested", "excited", "strong", "enthusiastic", "proud", "alert", "inspired",
           "determined", "attentive", "active"},
          {"distressed", "upset", "guilty", "scared", "hostile", "irritable", "ashamed", "nervous",
           "jittery", "afraid"}};
}

std::vector<std::string> PanasItems::all() const {
  auto out = positive;
  out.insert(out.end(), negative.begin(), negative.end());
  return out;
}

bool PanasItems::contains(std::string_view item) const {
  return std::find(positive.begin(), positive.end(), item) != positive.end() ||
         std::find(negative.begin(), negative.end(), item) != negative.end();
}

namespace {

bool same_values(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::isnan(a[i]) && std::isnan(b[i])) continue;
    if (a[i] != b[i]) return false;
  }
  return true;
}

auto diary_key(const DiaryEntry& d) {
  return std::tie(d.participant_id, d.date, d.timestamp, d.text);
}

}  // namespace

CohortDataset::CohortDataset(FeatureSchema schema, std::vector<DailyObservation> observations,
                             std::vector<DiaryEntry> diaries, std::vector<AffectReport> reports)
    : schema_(std::move(schema)),
      observations_(std::move(observations)),
      diaries_(std::move(diaries)),
      reports_(std::move(reports)) {
  auto by_key = [](const auto& a, const auto& b) {
    return std::tie(a.participant_id, a.date) < std::tie(b.participant_id, b.date);
  };
  std::sort(observations_.begin(), observations_.end(), by_key);
  std::sort(reports_.begin(), reports_.end(), by_key);
  std::sort(diaries_.begin(), diaries_.end(),
            [](const DiaryEntry& a, const DiaryEntry& b) { return diary_key(a) < diary_key(b); });

  for (std::size_t i = 0; i < observations_.size(); ++i) {
    const auto& o = observations_[i];
    if (o.values.size() != schema_.size() || o.observed.size() != schema_.size())
      throw DataError("observation width does not match schema", {}, 0, o.participant_id);
    if (i > 0 && observations_[i - 1].participant_id == o.participant_id &&
        observations_[i - 1].date == o.date)
      throw DuplicateRecordError("duplicate observation for (" + o.participant_id + ", " +
                                 format_date(o.date) + ")");
    participant_ids_.insert(o.participant_id);
  }
  for (std::size_t i = 0; i < reports_.size(); ++i) {
    const auto& r = reports_[i];
    if (i > 0 && reports_[i - 1].participant_id == r.participant_id && reports_[i - 1].date == r.date)
      throw DuplicateRecordError("duplicate affect report for (" + r.participant_id + ", " +
                                 format_date(r.date) + ")");
    for (const auto& [item, score] : r.item_scores) {
      if (!(score >= 0.0 && score <= 100.0))
        throw OutOfRangeError("score " + format_double(score) + " outside [0, 100]", {}, 0, item);
    }
    participant_ids_.insert(r.participant_id);
  }
  for (const auto& d : diaries_) {
    if (trim(d.text).empty()) throw DataError("diary text is empty", {}, 0, d.participant_id);
    participant_ids_.insert(d.participant_id);
  }
  index();
}

void CohortDataset::index() {
  observation_index_.clear();
  for (std::size_t i = 0; i < observations_.size(); ++i)
    observation_index_.emplace(std::make_pair(observations_[i].participant_id, observations_[i].date), i);
}

const DailyObservation* CohortDataset::find_observation(const std::string& participant,
                                                        Date date) const {
  auto it = observation_index_.find({participant, date});
  return it == observation_index_.end() ? nullptr : &observations_[it->second];
}

std::vector<DiaryEntry> CohortDataset::diaries_between(const std::string& participant, Date first,
                                                       Date last) const {
  DiaryEntry probe{participant, first, {}, {}};
  auto it = std::lower_bound(diaries_.begin(), diaries_.end(), probe,
                             [](const DiaryEntry& a, const DiaryEntry& b) {
                               return std::tie(a.participant_id, a.date) <
                                      std::tie(b.participant_id, b.date);
                             });
  std::vector<DiaryEntry> out;
  for (; it != diaries_.end() && it->participant_id == participant && it->date <= last; ++it)
    out.push_back(*it);
  return out;
}

bool operator==(const CohortDataset& a, const CohortDataset& b) {
  if (!(a.schema_ == b.schema_) || a.diaries_ != b.diaries_ || a.reports_ != b.reports_ ||
      a.participant_ids_ != b.participant_ids_ || a.observations_.size() != b.observations_.size())
    return false;
  for (std::size_t i = 0; i < a.observations_.size(); ++i) {
    const auto& x = a.observations_[i];
    const auto& y = b.observations_[i];
    if (x.participant_id != y.participant_id || x.date != y.date || x.observed != y.observed ||
        !same_values(x.values, y.values))
      return false;
  }
  return true;
}

namespace {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;  // (line number, cells)
};

CsvTable read_csv(std::string_view text, const std::string& source) {
  CsvTable t;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (t.header.empty()) {
      for (auto& c : cells) c = trim(c);
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size())
      throw DataError("expected " + std::to_string(t.header.size()) + " fields, found " +
                          std::to_string(cells.size()),
                      source, lineno);
    t.rows.emplace_back(lineno, std::move(cells));
  }
  if (t.header.size() < 2 || t.header[0] != "participant_id" || t.header[1] != "date")
    throw DataError("header must start with participant_id,date", source, 1);
  return t;
}

std::string require_participant(const std::string& cell, const std::string& source,
                                 std::size_t line) {
  std::string id = trim(cell);
  if (id.empty()) throw DataError("empty participant_id", source, line, "participant_id");
  return id;
}

Date date_cell(const std::string& cell, const std::string& source, std::size_t line) {
  try {
    return parse_date(cell);
  } catch (const DataError& e) {
    throw DataError(e.what(), source, line, "date");
  }
}

}  // namespace

std::vector<DailyObservation> parse_observations_csv(std::string_view text,
                                                     const FeatureSchema& schema,
                                                     const std::string& source) {
  const CsvTable t = read_csv(text, source);
  std::vector<std::optional<std::size_t>> column_to_feature(t.header.size());
  std::vector<bool> seen(schema.size(), false);
  for (std::size_t c = 2; c < t.header.size(); ++c) {
    auto idx = schema.index_of(t.header[c]);
    if (!idx) throw UnknownColumnError("unknown feature column", source, 1, t.header[c]);
    if (seen[*idx]) throw DataError("duplicate feature column", source, 1, t.header[c]);
    seen[*idx] = true;
    column_to_feature[c] = idx;
  }
  for (std::size_t f = 0; f < schema.size(); ++f)
    if (!seen[f]) throw DataError("missing feature column", source, 1, schema[f].name);

  std::vector<DailyObservation> out;
  out.reserve(t.rows.size());
  std::set<std::pair<std::string, Date>> keys;
  for (const auto& [line, cells] : t.rows) {
    DailyObservation o;
    o.participant_id = require_participant(cells[0], source, line);
    o.date = date_cell(cells[1], source, line);
    if (!keys.emplace(o.participant_id, o.date).second)
      throw DuplicateRecordError("duplicate observation for (" + o.participant_id + ", " +
                                     format_date(o.date) + ")",
                                 source, line);
    o.values.assign(schema.size(), std::numeric_limits<double>::quiet_NaN());
    o.observed.assign(schema.size(), false);
    for (std::size_t c = 2; c < cells.size(); ++c) {
      const std::size_t f = *column_to_feature[c];
      if (trim(cells[c]).empty()) continue;
      double v = 0.0;
      try {
        v = parse_double(cells[c]);
      } catch (const DataError&) {
        throw DataError("invalid number '" + cells[c] + "'", source, line, t.header[c]);
      }
      if (!std::isfinite(v)) throw DataError("non-finite value", source, line, t.header[c]);
      o.values[f] = v;
      o.observed[f] = true;
    }
    out.push_back(std::move(o));
  }
  return out;
}

std::vector<DiaryEntry> parse_diaries_jsonl(std::string_view text, const std::string& source) {
  std::vector<DiaryEntry> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("invalid JSON: ") + e.what(), source, lineno);
    }
    if (!j.is_object()) throw DataError("expected a JSON object", source, lineno);
    for (const char* key : {"participant_id", "date", "text"}) {
      if (!j.contains(key) || !j[key].is_string())
        throw DataError("missing string field", source, lineno, key);
    }
    for (const auto& [key, value] : j.items()) {
      if (key != "participant_id" && key != "date" && key != "text" && key != "timestamp")
        throw UnknownColumnError("unknown field", source, lineno, key);
    }
    const std::string pid = trim(j["participant_id"].get<std::string>());
    if (pid.empty()) throw DataError("empty participant_id", source, lineno, "participant_id");
    const Date date = date_cell(j["date"].get<std::string>(), source, lineno);
    std::string text_value = j["text"].get<std::string>();
    if (trim(text_value).empty()) throw DataError("diary text is empty", source, lineno, "text");
    std::string ts = j.contains("timestamp") ? j["timestamp"].get<std::string>() : std::string{};
    out.push_back({pid, date, std::move(text_value), std::move(ts)});
  }
  return out;
}

std::vector<AffectReport> parse_reports_csv(std::string_view text, const PanasItems& items,
                                            const std::string& source) {
  const CsvTable t = read_csv(text, source);
  std::set<std::string> columns;
  for (std::size_t c = 2; c < t.header.size(); ++c) {
    if (!items.contains(t.header[c]))
      throw UnknownColumnError("unknown affect item column", source, 1, t.header[c]);
    if (!columns.insert(t.header[c]).second)
      throw DataError("duplicate affect item column", source, 1, t.header[c]);
  }
  std::vector<AffectReport> out;
  std::set<std::pair<std::string, Date>> keys;
  for (const auto& [line, cells] : t.rows) {
    AffectReport r;
    r.participant_id = require_participant(cells[0], source, line);
    r.date = date_cell(cells[1], source, line);
    if (!keys.emplace(r.participant_id, r.date).second)
      throw DuplicateRecordError("duplicate affect report for (" + r.participant_id + ", " +
                                     format_date(r.date) + ")",
                                 source, line);
    for (std::size_t c = 2; c < cells.size(); ++c) {
      if (trim(cells[c]).empty()) continue;
      double v = 0.0;
      try {
        v = parse_double(cells[c]);
      } catch (const DataError&) {
        throw DataError("invalid number '" + cells[c] + "'", source, line, t.header[c]);
      }
      if (!(v >= 0.0 && v <= 100.0))
        throw OutOfRangeError("score " + trim(cells[c]) + " outside [0, 100]", source, line,
                              t.header[c]);
      r.item_scores[t.header[c]] = v;
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::string observations_to_csv(const CohortDataset& dataset) {
  std::string out = "participant_id,date";
  for (const auto& f : dataset.schema().features()) out += "," + csv_escape(f.name);
  out += "\n";
  for (const auto& o : dataset.observations()) {
    out += csv_escape(o.participant_id) + "," + format_date(o.date);
    for (std::size_t f = 0; f < o.values.size(); ++f) {
      out += ",";
      if (o.observed[f]) out += format_double(o.values[f]);
    }
    out += "\n";
  }
  return out;
}

std::string diaries_to_jsonl(const CohortDataset& dataset) {
  std::string out;
  for (const auto& d : dataset.diaries()) {
    nlohmann::ordered_json j;
    j["participant_id"] = d.participant_id;
    j["date"] = format_date(d.date);
    j["text"] = d.text;
    if (!d.timestamp.empty()) j["timestamp"] = d.timestamp;
    out += j.dump() + "\n";
  }
  return out;
}

std::string reports_to_csv(const CohortDataset& dataset, const PanasItems& items) {
  const auto names = items.all();
  std::string out = "participant_id,date";
  for (const auto& n : names) out += "," + n;
  out += "\n";
  for (const auto& r : dataset.reports()) {
    out += csv_escape(r.participant_id) + "," + format_date(r.date);
    for (const auto& n : names) {
      out += ",";
      auto it = r.item_scores.find(n);
      if (it != r.item_scores.end()) out += format_double(it->second);
    }
    out += "\n";
  }
  return out;
}

CohortDataset load_cohort(const std::filesystem::path& observations_path,
                          const std::filesystem::path& diaries_path,
                          const std::filesystem::path& reports_path, const FeatureSchema& schema,
                          const PanasItems& items) {
  auto obs = parse_observations_csv(read_file(observations_path), schema,
                                    observations_path.filename().string());
  auto diaries = parse_diaries_jsonl(read_file(diaries_path), diaries_path.filename().string());
  auto reports = parse_reports_csv(read_file(reports_path), items, reports_path.filename().string());
  return CohortDataset(schema, std::move(obs), std::move(diaries), std::move(reports));
}

CohortDataset load_cohort_dir(const std::filesystem::path& dir, const PanasItems& items) {
  return load_cohort(dir / CohortFiles::kObservations, dir / CohortFiles::kDiaries,
                     dir / CohortFiles::kReports, FeatureSchema::load(dir / CohortFiles::kSchema),
                     items);
}

void write_cohort_dir(const CohortDataset& dataset, const std::filesystem::path& dir,
                      const PanasItems& items) {
  write_file_atomic(dir / CohortFiles::kSchema, dataset.schema().serialize());
  write_file_atomic(dir / CohortFiles::kObservations, observations_to_csv(dataset));
  write_file_atomic(dir / CohortFiles::kDiaries, diaries_to_jsonl(dataset));
  write_file_atomic(dir / CohortFiles::kReports, reports_to_csv(dataset, items));
}

CohortDataset impute_missing(const CohortDataset& dataset) {
  const std::size_t width = dataset.schema().size();
  std::vector<double> sum(width, 0.0);
  std::vector<std::size_t> count(width, 0);
  for (const auto& o : dataset.observations())
    for (std::size_t f = 0; f < width; ++f)
      if (o.observed[f]) {
        sum[f] += o.values[f];
        ++count[f];
      }

  std::vector<DailyObservation> out = dataset.observations();
  bool any_missing = false;
  for (const auto& o : out)
    for (std::size_t f = 0; f < width; ++f) any_missing |= !o.observed[f];
  if (!any_missing) return dataset;

  for (std::size_t f = 0; f < width; ++f)
    if (count[f] == 0)
      throw UnimputableFeatureError("feature '" + dataset.schema()[f].name +
                                    "' is unobserved for the entire cohort");

  // Observations are in (participant, date) order, so a single pass carries the
  // last observed value forward within each participant.
  std::vector<std::optional<double>> last(width);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (i == 0 || out[i].participant_id != out[i - 1].participant_id)
      std::fill(last.begin(), last.end(), std::nullopt);
    for (std::size_t f = 0; f < width; ++f) {
      if (out[i].observed[f]) {
        last[f] = out[i].values[f];
      } else {
        out[i].values[f] = last[f] ? *last[f] : sum[f] / static_cast<double>(count[f]);
      }
    }
  }
  return CohortDataset(dataset.schema(), std::move(out), dataset.diaries(), dataset.reports());
}

}  // namespace affect
