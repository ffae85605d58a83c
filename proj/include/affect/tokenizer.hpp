#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace affect {

using TokenId = int;

// Word-level tokenizer: lower-cases, splits on whitespace, and emits each
// punctuation character as its own token. The vocabulary is built from
// training text; ids are line numbers of the vocabulary file.
class Tokenizer {
 public:
  static constexpr TokenId kStart = 0;
  static constexpr TokenId kUnknown = 1;
  static constexpr TokenId kSeparator = 2;
  static constexpr std::size_t kNumSpecial = 3;

  explicit Tokenizer(std::size_t max_tokens = 64);

  // Tokens seen at least `min_count` times, most frequent first (ties lexicographic).
  static Tokenizer build(std::span<const std::string> texts, std::size_t max_tokens,
                         std::size_t min_count = 1);
  static std::vector<std::string> split_words(std::string_view text);

  // [start] w1 w2 ... truncated to max_tokens.
  std::vector<TokenId> tokenize(std::string_view text) const;
  // Several same-day entries joined with separator tokens.
  std::vector<TokenId> tokenize_entries(std::span<const std::string> texts) const;

  std::size_t vocab_size() const { return tokens_.size(); }
  std::size_t max_tokens() const { return max_tokens_; }
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  TokenId id_of(std::string_view word) const;
  bool is_special(TokenId id) const { return id >= 0 && static_cast<std::size_t>(id) < kNumSpecial; }
  bool is_punctuation(TokenId id) const;

  // One token per line, line number == id.
  std::string serialize() const;
  static Tokenizer parse(std::string_view text, std::size_t max_tokens);
  static Tokenizer load(const std::filesystem::path& path, std::size_t max_tokens);

  bool operator==(const Tokenizer& other) const {
    return tokens_ == other.tokens_ && max_tokens_ == other.max_tokens_;
  }

 private:
  void add(std::string token);

  std::size_t max_tokens_;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
};

}  // namespace affect
