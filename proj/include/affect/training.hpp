#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "affect/diary_features.hpp"
#include "affect/fusion_model.hpp"
#include "affect/labeling.hpp"
#include "affect/nn.hpp"
#include "affect/text_encoder.hpp"

namespace affect {

struct TrainConfig {
  int stage1_epochs = 20;
  int stage2_epochs = 20;
  double stage1_lr = 3e-4;
  double stage2_lr = 1e-3;
  // 0 freezes the encoder in stage 2 (its embeddings are then cached).
  double encoder_lr_stage2 = 1e-5;
  int batch_size = 16;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;
  int early_stop_patience = 5;
  double validation_fraction = 0.15;
  // Stage 2 refuses an encoder that has not been through stage 1 unless cleared
  // (joint-only ablation).
  bool require_stage1 = true;

  void validate() const;
};

// Adam with decoupled weight decay and per-group learning rates.
class AdamW {
 public:
  struct Group {
    nn::ParameterRefs params;
    double lr = 1e-3;
  };

  explicit AdamW(std::vector<Group> groups, double weight_decay = 0.01, double beta1 = 0.9,
                 double beta2 = 0.999, double eps = 1e-8);

  void step();
  void zero_grad();
  int steps() const { return t_; }

 private:
  std::vector<Group> groups_;
  std::vector<std::vector<nn::Matrix>> m_, v_;
  double weight_decay_, beta1_, beta2_, eps_;
  int t_ = 0;
};

// Mean stable BCE over a batch of logits.
double binary_cross_entropy(std::span<const double> logits, std::span<const int> labels);

struct StageReport {
  std::vector<double> train_loss;
  std::vector<double> validation_loss;
  std::vector<double> validation_accuracy;
  int best_epoch = -1;
  bool early_stopped = false;
};

struct TrainReport {
  StageReport stage1;
  StageReport stage2;
  std::uint64_t checksum = 0;
  std::uint64_t seed = 0;

  std::string to_json() const;
};

// Diary tokens of one window, one sequence per day (empty = no entry).
struct DiarySample {
  std::string participant_id;
  Date window_start;
  std::vector<std::vector<TokenId>> days;
  int label = 0;

  bool has_text() const;
};

DiarySample make_diary_sample(const SampleWindow& window, const Tokenizer& tokenizer);

// Chronological hold-out: the last `fraction` of each participant's windows.
struct ValidationSplit {
  std::vector<SampleWindow> train;
  std::vector<SampleWindow> validation;
};
ValidationSplit split_validation(std::span<const SampleWindow> samples, double fraction);

struct Stage1Result {
  LinearHead head;
  StageReport report;
};

// Diary-only fine-tuning of `encoder` with a temporary linear head; the window
// logit is the mean of the head over days that have text. Windows without any
// diary are ignored.
Stage1Result stage1_finetune(TextEncoder& encoder, std::span<const DiarySample> train,
                             std::span<const DiarySample> validation, const TrainConfig& cfg);

// End-to-end training of the fusion model (and the encoder unless
// encoder_lr_stage2 == 0). `encoder == nullptr` trains without diary tokens.
// Parameters of the best validation epoch are restored before returning.
StageReport stage2_joint_train(FusionModel& model, TextEncoder* encoder,
                               std::span<const SampleWindow> train,
                               std::span<const SampleWindow> validation, const FeatureSchema& schema,
                               const FeatureScaler& scaler, const TrainConfig& cfg);

// Everything needed to forecast a window.
struct Forecaster {
  FeatureSchema schema;
  FeatureScaler scaler;
  FusionModel model;
  std::unique_ptr<TextEncoder> encoder;  // null when trained without diary
  TrainReport report;

  bool with_diary() const { return encoder != nullptr; }
  DiaryFeatures diary_features(const SampleWindow& sample) const;
  std::vector<FeatureToken> tokens(const SampleWindow& sample) const;
  Prediction predict(const SampleWindow& sample, double threshold = 0.5) const;
};

// Directory layout: model.affm, scaler.json, schema.txt and, with diary,
// encoder.afte + vocab.txt. Only the reference encoder can be saved.
struct ForecasterFiles {
  static constexpr const char* kModel = "model.affm";
  static constexpr const char* kScaler = "scaler.json";
  static constexpr const char* kSchema = "schema.txt";
  static constexpr const char* kEncoder = "encoder.afte";
  static constexpr const char* kVocab = "vocab.txt";
};
void save_forecaster(const Forecaster& forecaster, const std::filesystem::path& dir);
Forecaster load_forecaster(const std::filesystem::path& dir);

// Validation split, scaler fit, stage 1 (with diary only), content-head
// initialisation from the stage-1 head, then stage 2.
Forecaster train_forecaster(std::span<const SampleWindow> samples, const FeatureSchema& schema,
                            std::unique_ptr<TextEncoder> encoder, const ModelConfig& model_cfg,
                            const TrainConfig& train_cfg);

// Share of fusion attention (last layer, head- and row-averaged) that lands on
// diary tokens.
double diary_attention_mass(const FusionModel& model, std::span<const FeatureToken> tokens);

}  // namespace affect
