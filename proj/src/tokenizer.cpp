#include "affect/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

#include "affect/common.hpp"

namespace affect {

namespace {

const char* const kSpecialTokens[] = {"[CLS]", "[UNK]", "[SEP]"};

bool is_word_byte(unsigned char c) { return std::isalnum(c) != 0 || c >= 0x80; }

}  // namespace

Tokenizer::Tokenizer(std::size_t max_tokens) : max_tokens_(max_tokens) {
  if (max_tokens < 2) throw Error("tokenizer max_tokens must be at least 2");
  for (const char* s : kSpecialTokens) add(s);
}

void Tokenizer::add(std::string token) {
  ids_.emplace(token, static_cast<TokenId>(tokens_.size()));
  tokens_.push_back(std::move(token));
}

std::vector<std::string> Tokenizer::split_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (is_word_byte(c)) {
      cur.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
    } else if (c == '\'' && !cur.empty() && i + 1 < text.size() &&
               is_word_byte(static_cast<unsigned char>(text[i + 1]))) {
      cur.push_back('\'');  // contractions stay one word
    } else if (std::isspace(c) != 0) {
      flush();
    } else {
      flush();
      out.emplace_back(1, static_cast<char>(c));
    }
  }
  flush();
  return out;
}

Tokenizer Tokenizer::build(std::span<const std::string> texts, std::size_t max_tokens,
                           std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  for (const auto& t : texts)
    for (auto& w : split_words(t)) ++counts[w];
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Tokenizer tok(max_tokens);
  for (auto& [w, c] : ranked)
    if (c >= min_count && !tok.ids_.contains(w)) tok.add(w);
  return tok;
}

TokenId Tokenizer::id_of(std::string_view word) const {
  auto it = ids_.find(std::string(word));
  return it == ids_.end() ? kUnknown : it->second;
}

bool Tokenizer::is_punctuation(TokenId id) const {
  if (is_special(id)) return false;
  const auto& t = token(id);
  return std::none_of(t.begin(), t.end(), [](char c) { return is_word_byte(static_cast<unsigned char>(c)); });
}

std::vector<TokenId> Tokenizer::tokenize(std::string_view text) const {
  std::vector<TokenId> out{kStart};
  for (const auto& w : split_words(text)) {
    if (out.size() >= max_tokens_) break;
    out.push_back(id_of(w));
  }
  return out;
}

std::vector<TokenId> Tokenizer::tokenize_entries(std::span<const std::string> texts) const {
  std::vector<TokenId> out{kStart};
  for (std::size_t i = 0; i < texts.size() && out.size() < max_tokens_; ++i) {
    if (i > 0) out.push_back(kSeparator);
    for (const auto& w : split_words(texts[i])) {
      if (out.size() >= max_tokens_) break;
      out.push_back(id_of(w));
    }
  }
  return out;
}

std::string Tokenizer::serialize() const {
  std::string out;
  for (const auto& t : tokens_) out += t + "\n";
  return out;
}

Tokenizer Tokenizer::parse(std::string_view text, std::size_t max_tokens) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  if (lines.size() < kNumSpecial) throw VocabularyError("vocabulary is missing special tokens");
  for (std::size_t i = 0; i < kNumSpecial; ++i)
    if (lines[i] != kSpecialTokens[i])
      throw VocabularyError("vocabulary line " + std::to_string(i + 1) + " must be " + kSpecialTokens[i]);
  Tokenizer tok(max_tokens);
  for (std::size_t i = kNumSpecial; i < lines.size(); ++i) {
    if (lines[i].empty() || tok.ids_.contains(lines[i]))
      throw VocabularyError("vocabulary line " + std::to_string(i + 1) + " is empty or duplicated");
    tok.add(lines[i]);
  }
  return tok;
}

Tokenizer Tokenizer::load(const std::filesystem::path& path, std::size_t max_tokens) {
  return parse(read_file(path), max_tokens);
}

}  // namespace affect
