#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "affect/core_data.hpp"
#include "affect/diary_features.hpp"
#include "affect/labeling.hpp"
#include "affect/nn.hpp"
#include "affect/transformer.hpp"

namespace affect {

struct ModelConfig {
  int model_dim = 64;
  int num_heads = 4;
  int num_layers = 2;
  int mlp_hidden = 32;
  int ffn_dim = 128;
  double dropout = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

// One scalar feature presented to the fusion encoder. Temporal position is
// carried by feature_id (every feature x day pair has its own id).
struct FeatureToken {
  int feature_id = 0;
  double value = 0.0;
  int day_offset = 0;
  // False for imputed objective values and diary days without a submission.
  bool present = true;

  bool operator==(const FeatureToken&) const = default;
};

// Id space of the fused features: |schema| x window objective slots, then one
// diary-content slot per day, then the submission frequency.
class FusedLayout {
 public:
  FusedLayout(std::size_t num_objective, int window_days);

  std::size_t num_objective() const { return num_objective_; }
  int window_days() const { return window_days_; }
  int size() const;
  int objective_id(std::size_t feature, int day) const;
  int content_id(int day) const;
  int frequency_id() const;
  bool is_diary(int id) const { return id >= content_id(0); }

  static constexpr const char* kContentName = "diary_content";
  static constexpr const char* kFrequencyName = "diary_frequency";
  // Feature name without the day, e.g. "deep_sleep_duration" or "diary_content".
  std::string base_name(int id, const FeatureSchema& schema) const;

 private:
  std::size_t num_objective_;
  int window_days_;
};

// Per-feature z-scoring with statistics from training windows only.
struct FeatureScaler {
  std::vector<double> mean;
  std::vector<double> stddev;

  // Each (participant, date) row contributes once, even when windows overlap.
  static FeatureScaler fit(std::span<const SampleWindow> windows);
  double apply(std::size_t feature, double value) const;
};

// Canonical token order: objective features (feature-major, then day), diary
// content per day, then frequency. `diary == nullptr` drops the diary tokens.
std::vector<FeatureToken> tokenize_features(const SampleWindow& sample, const DiaryFeatures* diary,
                                            const FeatureSchema& schema,
                                            const FeatureScaler* scaler = nullptr);

// Transformer encoder over feature tokens, mean-pooled, then a 2-layer MLP to
// one logit. Optionally owns the diary content head (text embedding -> scalar).
class FusionModel {
 public:
  FusionModel(ModelConfig config, const FeatureSchema& schema, int window_days,
              int text_embedding_dim);

  const ModelConfig& config() const { return config_; }
  const FusedLayout& layout() const { return layout_; }
  std::uint64_t schema_fingerprint() const { return schema_fingerprint_; }
  int text_embedding_dim() const { return text_embedding_dim_; }

  // `value_overrides` replace token values by differentiable scalars (the diary
  // content computed from the text encoder during joint training).
  nn::Var forward(nn::Tape& tape, std::span<const FeatureToken> tokens, const nn::ForwardContext& ctx,
                  std::span<const std::pair<std::size_t, nn::Var>> value_overrides = {},
                  std::vector<nn::Matrix>* last_attention = nullptr) const;
  double logit(std::span<const FeatureToken> tokens) const;

  // Content head applied to a 1 x text_embedding_dim embedding.
  nn::Var content(nn::Tape& tape, nn::Var embedding) const;
  LinearHead content_head() const;
  void set_content_head(const LinearHead& head);

  nn::ParameterRefs parameters() const { return store_.refs(); }
  nn::Parameter& head_output_weight() { return *head_out_.weight; }
  nn::Parameter& head_output_bias() { return *head_out_.bias; }

  void save(const std::filesystem::path& path) const;
  // Refuses a checkpoint written for a different feature schema.
  static FusionModel load(const std::filesystem::path& path, const FeatureSchema& schema);

  static constexpr std::uint32_t kCheckpointVersion = 1;

 private:
  ModelConfig config_;
  FusedLayout layout_;
  std::uint64_t schema_fingerprint_;
  int text_embedding_dim_;
  nn::ParameterStore store_;
  nn::Parameter* feature_embedding_ = nullptr;
  nn::Parameter* value_projection_ = nullptr;
  nn::Parameter* missing_embedding_ = nullptr;
  nn::EncoderStack stack_;
  nn::LinearLayer head_hidden_;
  nn::LinearLayer head_out_;
  nn::LinearLayer content_head_;
};

struct Prediction {
  double probability = 0.5;
  int label = 0;
};

Prediction prediction_from_logit(double logit, double threshold = 0.5);
Prediction predict(const FusionModel& model, std::span<const FeatureToken> tokens, double threshold = 0.5);
Prediction predict(const FusionModel& model, const SampleWindow& sample, const DiaryFeatures* diary,
                   const FeatureSchema& schema, const FeatureScaler* scaler = nullptr,
                   double threshold = 0.5);

}  // namespace affect
