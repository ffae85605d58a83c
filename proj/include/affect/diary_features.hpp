#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "affect/core_data.hpp"
#include "affect/text_encoder.hpp"

namespace affect {

// Linear projection of a pooled text embedding to one scalar.
struct LinearHead {
  Eigen::VectorXd weights;
  double bias = 0.0;
};

// head.weights . embedding + head.bias
double content_feature(const LinearHead& head, const Eigen::VectorXd& embedding);

// The two diary features of one window.
struct DiaryFeatures {
  // One scalar per window day; `kMissingContent` where no diary was submitted.
  std::vector<double> content;
  std::vector<bool> presence_mask;
  int submission_frequency = 0;
};

inline constexpr double kMissingContent = 0.0;

// Token sequences per window day (empty where no entry). Same-day entries are
// ordered by (timestamp, text) and joined with separator tokens.
std::vector<std::vector<TokenId>> day_token_sequences(std::span<const DiaryEntry> entries,
                                                      Date window_start, int window_days,
                                                      const Tokenizer& tokenizer);

DiaryFeatures diary_window_features(std::span<const DiaryEntry> entries, Date window_start,
                                    int window_days, const TextEncoder& encoder,
                                    const LinearHead& head);

}  // namespace affect
