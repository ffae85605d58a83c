#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "affect/core_data.hpp"
#include "affect/fusion_model.hpp"
#include "affect/text_encoder.hpp"

namespace affect {

// v(S) for a coalition given as a membership mask.
using ValueFunction = std::function<double(const std::vector<bool>& coalition)>;
// f(x_S, background row b): features in S from the explained sample, the rest
// from background row b.
using HybridFunction = std::function<double(const std::vector<bool>& coalition, std::size_t background)>;

inline constexpr std::size_t kMaxExactFeatures = 15;

// Full subset enumeration. Throws OracleSizeError above kMaxExactFeatures.
std::vector<double> shapley_exact(const ValueFunction& v, std::size_t n);

// Mean over background rows of `f`, i.e. the value function the permutation
// estimator targets.
ValueFunction background_value_function(HybridFunction f, std::size_t num_background);

struct PermutationOptions {
  std::size_t num_permutations = 1000;
  std::uint64_t seed = 0;
  // Pair every permutation with its reverse (same background row).
  bool antithetic = true;
};

// Permutation-sampling estimate. Permutation k uses background row k mod B.
std::vector<double> shapley_permutation(const HybridFunction& f, std::size_t n, std::size_t num_background,
                                        const PermutationOptions& opts);

// Model probability with tokens outside the coalition swapped for the
// background sample's tokens. Token lists must share one layout.
HybridFunction model_hybrid(const FusionModel& model, std::vector<FeatureToken> sample,
                            std::vector<std::vector<FeatureToken>> background);

struct Attribution {
  std::string sample_ref;
  std::string feature_name;
  double feature_value = 0.0;
  double shapley_value = 0.0;
};

// Per-token Shapley values summed over days per feature name. feature_value is
// the mean (standardized) token value over the window.
std::vector<Attribution> shapley_sample(const FusionModel& model, const FeatureSchema& schema,
                                        std::span<const FeatureToken> sample,
                                        std::span<const std::vector<FeatureToken>> background,
                                        const PermutationOptions& opts, const std::string& sample_ref);

// `count` distinct indices out of `available`, seed-deterministic.
std::vector<std::size_t> select_background(std::size_t available, std::size_t count, std::uint64_t seed);

struct KeywordScore {
  std::string keyword;
  double mean_attention = 0.0;
  std::size_t occurrences = 0;
};

// Last-layer attention from the start token averaged over heads, renormalized
// over word positions (start and separator tokens excluded). One entry per
// position after the start token; separators get 0.
std::vector<double> start_token_attention(const TextEncoder& encoder, std::span<const TokenId> tokens);

// Keyword = lower-cased surface word. Punctuation is ignored. Words seen fewer
// than `min_occurrences` times are dropped before ranking.
std::vector<KeywordScore> attention_keyword_scores(const TextEncoder& encoder, std::span<const DiaryEntry> corpus,
                                                   std::size_t top_k, std::size_t min_occurrences = 1);

struct ReportFiles {
  std::filesystem::path attributions_csv;
  std::filesystem::path features_svg;
  std::filesystem::path keywords_csv;  // empty when no keywords were given
  std::filesystem::path keywords_svg;
  std::vector<std::string> warnings;
};

// Feature names in descending mean |shapley_value| (ties by name).
std::vector<std::pair<std::string, double>> feature_importance(std::span<const Attribution> attributions);

ReportFiles export_attribution_report(std::span<const Attribution> attributions,
                                      std::span<const KeywordScore> keywords,
                                      const std::filesystem::path& output_dir);

}  // namespace affect
