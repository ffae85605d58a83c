#include "affect/fusion_model.hpp"

#include <cmath>
#include <set>
#include <sstream>
#include <tuple>

#include "affect/binary_io.hpp"

namespace affect {

void ModelConfig::validate() const {
  if (model_dim <= 0 || num_heads <= 0 || num_layers <= 0 || mlp_hidden <= 0 || ffn_dim <= 0)
    throw Error("model dimensions must be positive");
  if (model_dim % num_heads != 0) throw Error("model_dim must be divisible by num_heads");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw Error("dropout must lie in [0, 1)");
}

FusedLayout::FusedLayout(std::size_t num_objective, int window_days)
    : num_objective_(num_objective), window_days_(window_days) {
  if (window_days <= 0) throw DimensionError("window_days must be positive");
}

int FusedLayout::size() const { return static_cast<int>(num_objective_) * window_days_ + window_days_ + 1; }

int FusedLayout::objective_id(std::size_t feature, int day) const {
  return static_cast<int>(feature) * window_days_ + day;
}

int FusedLayout::content_id(int day) const { return static_cast<int>(num_objective_) * window_days_ + day; }

int FusedLayout::frequency_id() const { return content_id(window_days_); }

std::string FusedLayout::base_name(int id, const FeatureSchema& schema) const {
  if (id < 0 || id >= size()) throw DimensionError("feature id out of range");
  if (id == frequency_id()) return kFrequencyName;
  if (is_diary(id)) return kContentName;
  return schema[static_cast<std::size_t>(id / window_days_)].name;
}

FeatureScaler FeatureScaler::fit(std::span<const SampleWindow> windows) {
  FeatureScaler s;
  if (windows.empty()) return s;
  const auto width = static_cast<std::size_t>(windows.front().objective.cols());
  std::vector<double> sum(width, 0.0), sq(width, 0.0);
  std::vector<std::size_t> n(width, 0);
  std::set<std::pair<std::string, Date>> seen;
  for (const auto& w : windows) {
    const Date first = w.window_start();
    for (Eigen::Index day = 0; day < w.objective.rows(); ++day) {
      if (!seen.emplace(w.participant_id, add_days(first, static_cast<int>(day))).second) continue;
      for (std::size_t f = 0; f < width; ++f) {
        if (!w.observed(day, static_cast<Eigen::Index>(f))) continue;
        const double v = w.objective(day, static_cast<Eigen::Index>(f));
        sum[f] += v;
        sq[f] += v * v;
        ++n[f];
      }
    }
  }
  s.mean.assign(width, 0.0);
  s.stddev.assign(width, 1.0);
  for (std::size_t f = 0; f < width; ++f) {
    if (n[f] == 0) continue;
    const double m = sum[f] / static_cast<double>(n[f]);
    const double var = std::max(0.0, sq[f] / static_cast<double>(n[f]) - m * m);
    s.mean[f] = m;
    s.stddev[f] = var > 1e-12 ? std::sqrt(var) : 1.0;
  }
  return s;
}

double FeatureScaler::apply(std::size_t feature, double value) const {
  if (mean.empty()) return value;
  return (value - mean[feature]) / stddev[feature];
}

std::vector<FeatureToken> tokenize_features(const SampleWindow& sample, const DiaryFeatures* diary,
                                            const FeatureSchema& schema, const FeatureScaler* scaler) {
  const auto width = static_cast<std::size_t>(sample.objective.cols());
  const int days = static_cast<int>(sample.objective.rows());
  if (width != schema.size())
    throw DimensionError("sample has " + std::to_string(width) + " features, schema has " +
                         std::to_string(schema.size()));
  if (scaler != nullptr && !scaler->mean.empty() && scaler->mean.size() != width)
    throw DimensionError("scaler width does not match schema");
  if (diary != nullptr && (diary->content.size() != static_cast<std::size_t>(days) ||
                           diary->presence_mask.size() != static_cast<std::size_t>(days)))
    throw DimensionError("diary features do not cover the sample window");
  const FusedLayout layout(width, days);
  std::vector<FeatureToken> out;
  out.reserve(static_cast<std::size_t>(layout.size()));
  for (std::size_t f = 0; f < width; ++f) {
    for (int d = 0; d < days; ++d) {
      double v = sample.objective(d, static_cast<Eigen::Index>(f));
      if (scaler != nullptr) v = scaler->apply(f, v);
      out.push_back({layout.objective_id(f, d), v, d, sample.observed(d, static_cast<Eigen::Index>(f))});
    }
  }
  if (diary != nullptr) {
    for (int d = 0; d < days; ++d)
      out.push_back({layout.content_id(d), diary->presence_mask[static_cast<std::size_t>(d)]
                                               ? diary->content[static_cast<std::size_t>(d)]
                                               : kMissingContent,
                     d, diary->presence_mask[static_cast<std::size_t>(d)]});
    out.push_back({layout.frequency_id(), static_cast<double>(diary->submission_frequency) / days,
                   days - 1, true});
  }
  return out;
}

FusionModel::FusionModel(ModelConfig config, const FeatureSchema& schema, int window_days,
                         int text_embedding_dim)
    : config_(config),
      layout_(schema.size(), window_days),
      schema_fingerprint_(schema.fingerprint()),
      text_embedding_dim_(text_embedding_dim) {
  config_.validate();
  if (text_embedding_dim < 0) throw DimensionError("text_embedding_dim must be non-negative");
  nn::Rng rng(config_.seed);
  const Eigen::Index d = config_.model_dim;
  feature_embedding_ = &store_.add("fusion.feature_embedding", nn::normal(layout_.size(), d, 0.5, rng));
  value_projection_ = &store_.add("fusion.value_projection", nn::normal(layout_.size(), d, 1.0, rng));
  missing_embedding_ = &store_.add("fusion.missing_embedding", nn::normal(1, d, 0.5, rng));
  stack_ = nn::EncoderStack::create(store_, "fusion.encoder", d, config_.num_heads, config_.num_layers,
                                    config_.ffn_dim, rng);
  head_hidden_ = nn::LinearLayer::create(store_, "fusion.head.hidden", d, config_.mlp_hidden, rng);
  head_out_ = nn::LinearLayer::create(store_, "fusion.head.out", config_.mlp_hidden, 1, rng);
  if (text_embedding_dim_ > 0)
    content_head_ = nn::LinearLayer::create(store_, "fusion.content_head", text_embedding_dim_, 1, rng);
}

nn::Var FusionModel::forward(nn::Tape& tape, std::span<const FeatureToken> tokens,
                             const nn::ForwardContext& ctx,
                             std::span<const std::pair<std::size_t, nn::Var>> value_overrides,
                             std::vector<nn::Matrix>* last_attention) const {
  if (tokens.empty()) throw DimensionError("forward needs at least one token");
  const std::size_t n = tokens.size();
  std::vector<int> ids(n);
  std::vector<std::uint8_t> missing(n);
  nn::Vector values(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    if (tokens[i].feature_id < 0 || tokens[i].feature_id >= layout_.size())
      throw DimensionError("feature id " + std::to_string(tokens[i].feature_id) + " out of range");
    ids[i] = tokens[i].feature_id;
    missing[i] = tokens[i].present ? 0 : 1;
    values(static_cast<Eigen::Index>(i)) = tokens[i].value;
  }
  nn::Var embed = nn::gather_rows(tape, tape.parameter(*feature_embedding_), ids);
  nn::Var proj = nn::gather_rows(tape, tape.parameter(*value_projection_), ids);
  nn::Var vals = nn::assemble_column(tape, values, value_overrides);
  nn::Var x = nn::add(tape, embed, nn::scale_rows(tape, proj, vals));
  x = nn::add_masked_row(tape, x, tape.parameter(*missing_embedding_), missing);
  x = stack_(tape, x, ctx, last_attention);
  nn::Var pooled = nn::mean_rows(tape, x);
  return head_out_(tape, nn::gelu(tape, head_hidden_(tape, pooled)));
}

double FusionModel::logit(std::span<const FeatureToken> tokens) const {
  nn::Tape tape(false);
  return tape.scalar(forward(tape, tokens, nn::ForwardContext{}));
}

nn::Var FusionModel::content(nn::Tape& tape, nn::Var embedding) const {
  if (text_embedding_dim_ == 0) throw DimensionError("model was built without a diary content head");
  return content_head_(tape, embedding);
}

LinearHead FusionModel::content_head() const {
  if (text_embedding_dim_ == 0) throw DimensionError("model was built without a diary content head");
  return {content_head_.weight->value.col(0), content_head_.bias->value(0, 0)};
}

void FusionModel::set_content_head(const LinearHead& head) {
  if (text_embedding_dim_ == 0 || head.weights.size() != text_embedding_dim_)
    throw DimensionError("content head dimension mismatch");
  content_head_.weight->value.col(0) = head.weights;
  content_head_.bias->value(0, 0) = head.bias;
}

void FusionModel::save(const std::filesystem::path& path) const {
  std::ostringstream out(std::ios::binary);
  BinaryWriter w(out);
  out.write("AFFM", 4);
  w.pod(kCheckpointVersion);
  w.pod<std::int32_t>(config_.model_dim);
  w.pod<std::int32_t>(config_.num_heads);
  w.pod<std::int32_t>(config_.num_layers);
  w.pod<std::int32_t>(config_.mlp_hidden);
  w.pod<std::int32_t>(config_.ffn_dim);
  w.pod<double>(config_.dropout);
  w.pod<std::uint64_t>(config_.seed);
  w.pod<std::int32_t>(layout_.window_days());
  w.pod<std::int32_t>(text_embedding_dim_);
  w.pod<std::uint64_t>(schema_fingerprint_);
  w.doubles(nn::flatten(parameters()));
  write_file_atomic(path, out.str());
}

FusionModel FusionModel::load(const std::filesystem::path& path, const FeatureSchema& schema) {
  std::istringstream in(read_file(path), std::ios::binary);
  BinaryReader r(in, path.string());
  r.expect_magic("AFFM");
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw CheckpointError(path.string() + ": unsupported model checkpoint version " + std::to_string(version));
  ModelConfig cfg;
  cfg.model_dim = r.pod<std::int32_t>();
  cfg.num_heads = r.pod<std::int32_t>();
  cfg.num_layers = r.pod<std::int32_t>();
  cfg.mlp_hidden = r.pod<std::int32_t>();
  cfg.ffn_dim = r.pod<std::int32_t>();
  cfg.dropout = r.pod<double>();
  cfg.seed = r.pod<std::uint64_t>();
  const int window_days = r.pod<std::int32_t>();
  const int text_dim = r.pod<std::int32_t>();
  const auto fingerprint = r.pod<std::uint64_t>();
  if (fingerprint != schema.fingerprint())
    throw CheckpointError(path.string() + ": schema fingerprint " + hex64(fingerprint) +
                          " does not match the loaded schema (" + hex64(schema.fingerprint()) + ")");
  const auto params = r.doubles();
  FusionModel model(cfg, schema, window_days, text_dim);
  if (params.size() != nn::parameter_count(model.parameters()))
    throw CheckpointError(path.string() + ": parameter count mismatch");
  nn::unflatten(model.parameters(), params);
  return model;
}

Prediction prediction_from_logit(double logit, double threshold) {
  const double p = nn::sigmoid(logit);
  return {p, p >= threshold ? 1 : 0};
}

Prediction predict(const FusionModel& model, std::span<const FeatureToken> tokens, double threshold) {
  return prediction_from_logit(model.logit(tokens), threshold);
}

Prediction predict(const FusionModel& model, const SampleWindow& sample, const DiaryFeatures* diary,
                   const FeatureSchema& schema, const FeatureScaler* scaler, double threshold) {
  return predict(model, tokenize_features(sample, diary, schema, scaler), threshold);
}

}  // namespace affect
