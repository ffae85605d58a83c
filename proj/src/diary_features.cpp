#include "affect/diary_features.hpp"

#include <algorithm>
#include <tuple>

namespace affect {

double content_feature(const LinearHead& head, const Eigen::VectorXd& embedding) {
  if (head.weights.size() != embedding.size())
    throw DimensionError("content head expects dimension " + std::to_string(head.weights.size()) +
                         ", embedding has " + std::to_string(embedding.size()));
  return head.weights.dot(embedding) + head.bias;
}

std::vector<std::vector<TokenId>> day_token_sequences(std::span<const DiaryEntry> entries,
                                                      Date window_start, int window_days,
                                                      const Tokenizer& tokenizer) {
  std::vector<std::vector<const DiaryEntry*>> by_day(static_cast<std::size_t>(window_days));
  for (const auto& e : entries) {
    if (!entries.empty() && e.participant_id != entries.front().participant_id)
      throw WindowViolationError("diary window mixes participants '" + entries.front().participant_id +
                                 "' and '" + e.participant_id + "'");
    const int day = days_between(window_start, e.date);
    if (day < 0 || day >= window_days)
      throw WindowViolationError("diary dated " + format_date(e.date) + " lies outside the window starting " +
                                 format_date(window_start));
    by_day[static_cast<std::size_t>(day)].push_back(&e);
  }
  std::vector<std::vector<TokenId>> out(static_cast<std::size_t>(window_days));
  for (std::size_t d = 0; d < by_day.size(); ++d) {
    auto& day = by_day[d];
    if (day.empty()) continue;
    std::sort(day.begin(), day.end(), [](const DiaryEntry* a, const DiaryEntry* b) {
      return std::tie(a->timestamp, a->text) < std::tie(b->timestamp, b->text);
    });
    std::vector<std::string> texts;
    texts.reserve(day.size());
    for (const auto* e : day) texts.push_back(e->text);
    out[d] = tokenizer.tokenize_entries(texts);
  }
  return out;
}

DiaryFeatures diary_window_features(std::span<const DiaryEntry> entries, Date window_start,
                                    int window_days, const TextEncoder& encoder,
                                    const LinearHead& head) {
  const auto days = day_token_sequences(entries, window_start, window_days, encoder.tokenizer());
  DiaryFeatures f;
  f.content.assign(days.size(), kMissingContent);
  f.presence_mask.assign(days.size(), false);
  for (std::size_t d = 0; d < days.size(); ++d) {
    if (days[d].empty()) continue;
    f.content[d] = content_feature(head, encode(encoder, days[d]));
    f.presence_mask[d] = true;
    ++f.submission_frequency;
  }
  return f;
}

}  // namespace affect
