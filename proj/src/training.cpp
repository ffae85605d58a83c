#include "affect/training.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <tuple>

#include <json.hpp>

namespace affect {

namespace {

using nn::Var;

bool all_finite(const nn::ParameterRefs& params, bool grads) {
  for (const auto* p : params)
    if (!(grads ? p->grad : p->value).allFinite()) return false;
  return true;
}

nn::ParameterRefs concat(nn::ParameterRefs a, const nn::ParameterRefs& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

// Fisher-Yates with an explicit modulus so the order does not depend on the
// standard library's distribution implementation.
void shuffle(std::vector<std::size_t>& idx, nn::Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng() % i]);
}

void check_labels(std::span<const int> labels, const std::string& what) {
  if (labels.empty()) throw DegenerateTrainingError(what + ": no training samples");
  for (int y : labels)
    if (y != 0 && y != 1) throw DegenerateTrainingError(what + ": labels must be 0 or 1");
  if (std::all_of(labels.begin(), labels.end(), [&](int y) { return y == labels.front(); }))
    throw DegenerateTrainingError(what + ": all training labels are identical");
}

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

struct StageHooks {
  std::string name;
  int epochs = 0;
  std::size_t num_train = 0;
  // Forward + backward for the batch; returns the mean batch loss. Gradients
  // are left in the parameters for the caller to check and apply.
  std::function<Var(nn::Tape&, std::span<const std::size_t>, nn::Rng&)> batch_loss;
  std::function<std::optional<EvalResult>()> evaluate;
  nn::ParameterRefs params;
  AdamW* optimizer = nullptr;
};

StageReport run_stage(const StageHooks& h, const TrainConfig& cfg, nn::Rng& rng) {
  StageReport report;
  std::vector<std::size_t> order(h.num_train);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> best_params;
  int since_best = 0;
  for (int epoch = 0; epoch < h.epochs; ++epoch) {
    shuffle(order, rng);
    double total = 0.0;
    std::size_t batch_no = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size), ++batch_no) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::span<const std::size_t> batch(order.data() + start, end - start);
      h.optimizer->zero_grad();
      nn::Tape tape;
      Var loss = h.batch_loss(tape, batch, rng);
      const double value = tape.scalar(loss);
      if (!std::isfinite(value)) throw DivergenceError(h.name, static_cast<std::size_t>(epoch), batch_no);
      tape.backward(loss);
      if (!all_finite(h.params, true)) throw DivergenceError(h.name, static_cast<std::size_t>(epoch), batch_no);
      h.optimizer->step();
      if (!all_finite(h.params, false)) throw DivergenceError(h.name, static_cast<std::size_t>(epoch), batch_no);
      total += value * static_cast<double>(batch.size());
    }
    report.train_loss.push_back(total / static_cast<double>(order.size()));
    const auto eval = h.evaluate();
    if (!eval) {
      report.best_epoch = epoch;
      continue;
    }
    if (!std::isfinite(eval->loss)) throw DivergenceError(h.name, static_cast<std::size_t>(epoch), batch_no);
    report.validation_loss.push_back(eval->loss);
    report.validation_accuracy.push_back(eval->accuracy);
    if (eval->loss < best) {
      best = eval->loss;
      best_params = nn::flatten(h.params);
      report.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.early_stop_patience) {
      report.early_stopped = epoch + 1 < h.epochs;
      break;
    }
  }
  if (!best_params.empty()) nn::unflatten(h.params, best_params);
  return report;
}

nn::ForwardContext train_ctx(double dropout, nn::Rng& rng) { return {true, dropout, &rng}; }

}  // namespace

void TrainConfig::validate() const {
  if (stage1_epochs < 0) throw ConfigError("train.stage1_epochs", "must be non-negative");
  if (stage2_epochs < 0) throw ConfigError("train.stage2_epochs", "must be non-negative");
  if (!(stage1_lr > 0)) throw ConfigError("train.stage1_lr", "must be positive");
  if (!(stage2_lr > 0)) throw ConfigError("train.stage2_lr", "must be positive");
  if (!(encoder_lr_stage2 >= 0)) throw ConfigError("train.encoder_lr_stage2", "must be non-negative");
  if (encoder_lr_stage2 > stage2_lr)
    throw ConfigError("train.encoder_lr_stage2", "must not exceed train.stage2_lr");
  if (batch_size <= 0) throw ConfigError("train.batch_size", "must be positive");
  if (!(weight_decay >= 0)) throw ConfigError("train.weight_decay", "must be non-negative");
  if (early_stop_patience <= 0) throw ConfigError("train.early_stop_patience", "must be positive");
  if (!(validation_fraction >= 0 && validation_fraction < 1))
    throw ConfigError("train.validation_fraction", "must lie in [0, 1)");
}

AdamW::AdamW(std::vector<Group> groups, double weight_decay, double beta1, double beta2, double eps)
    : groups_(std::move(groups)), weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& g : groups_) {
    std::vector<nn::Matrix> m, v;
    for (const auto* p : g.params) {
      m.push_back(nn::Matrix::Zero(p->value.rows(), p->value.cols()));
      v.push_back(nn::Matrix::Zero(p->value.rows(), p->value.cols()));
    }
    m_.push_back(std::move(m));
    v_.push_back(std::move(v));
  }
}

void AdamW::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, t_);
  const double c2 = 1.0 - std::pow(beta2_, t_);
  for (std::size_t g = 0; g < groups_.size(); ++g) {
    const double lr = groups_[g].lr;
    for (std::size_t i = 0; i < groups_[g].params.size(); ++i) {
      auto& p = *groups_[g].params[i];
      auto& m = m_[g][i];
      auto& v = v_[g][i];
      m = beta1_ * m + (1.0 - beta1_) * p.grad;
      v = beta2_ * v + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
      p.value -= lr * weight_decay_ * p.value;
      p.value.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
    }
  }
}

void AdamW::zero_grad() {
  for (auto& g : groups_) nn::zero_grads(g.params);
}

double binary_cross_entropy(std::span<const double> logits, std::span<const int> labels) {
  if (logits.size() != labels.size())
    throw DimensionError("binary_cross_entropy: " + std::to_string(logits.size()) + " logits vs " +
                         std::to_string(labels.size()) + " labels");
  if (logits.empty()) throw DimensionError("binary_cross_entropy: empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw Error("binary_cross_entropy: labels must be 0 or 1");
    total += nn::softplus(logits[i]) - labels[i] * logits[i];
  }
  return total / static_cast<double>(logits.size());
}

std::string TrainReport::to_json() const {
  auto stage = [](const StageReport& s) {
    return nlohmann::ordered_json{{"train_loss", s.train_loss},
                                  {"validation_loss", s.validation_loss},
                                  {"validation_accuracy", s.validation_accuracy},
                                  {"best_epoch", s.best_epoch},
                                  {"early_stopped", s.early_stopped}};
  };
  nlohmann::ordered_json j{{"seed", seed},
                           {"checksum", hex64(checksum)},
                           {"stage1", stage(stage1)},
                           {"stage2", stage(stage2)}};
  return j.dump(2) + "\n";
}

bool DiarySample::has_text() const {
  return std::any_of(days.begin(), days.end(), [](const auto& d) { return !d.empty(); });
}

DiarySample make_diary_sample(const SampleWindow& window, const Tokenizer& tokenizer) {
  return {window.participant_id, window.window_start(),
          day_token_sequences(window.diary_entries, window.window_start(),
                              static_cast<int>(window.objective.rows()), tokenizer),
          window.label};
}

ValidationSplit split_validation(std::span<const SampleWindow> samples, double fraction) {
  std::map<std::string, std::vector<std::size_t>> by_participant;
  for (std::size_t i = 0; i < samples.size(); ++i) by_participant[samples[i].participant_id].push_back(i);
  std::vector<bool> held(samples.size(), false);
  for (auto& [pid, idx] : by_participant) {
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return samples[a].anchor_date < samples[b].anchor_date;
    });
    const auto n_val = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(idx.size())));
    for (std::size_t k = idx.size() - n_val; k < idx.size(); ++k) held[idx[k]] = true;
  }
  ValidationSplit split;
  for (std::size_t i = 0; i < samples.size(); ++i)
    (held[i] ? split.validation : split.train).push_back(samples[i]);
  return split;
}

Stage1Result stage1_finetune(TextEncoder& encoder, std::span<const DiarySample> train,
                             std::span<const DiarySample> validation, const TrainConfig& cfg) {
  cfg.validate();
  std::vector<const DiarySample*> usable, held;
  for (const auto& s : train)
    if (s.has_text()) usable.push_back(&s);
  for (const auto& s : validation)
    if (s.has_text()) held.push_back(&s);
  std::vector<int> labels;
  for (const auto* s : usable) labels.push_back(s->label);
  check_labels(labels, "stage 1");

  nn::Rng rng(derive_seed(cfg.seed, "stage1"));
  nn::ParameterStore head_store;
  const auto head = nn::LinearLayer::create(head_store, "stage1.head",
                                            static_cast<Eigen::Index>(encoder.embedding_dim()), 1, rng);
  auto extract = [&] { return LinearHead{head.weight->value.col(0), head.bias->value(0, 0)}; };
  if (cfg.stage1_epochs == 0) return {extract(), {}};

  auto window_logit = [&](nn::Tape& tape, const DiarySample& s, const nn::ForwardContext& ctx) {
    std::vector<Var> per_day;
    for (const auto& day : s.days)
      if (!day.empty()) per_day.push_back(head(tape, encoder.encode(tape, day, ctx)));
    return nn::mean_scalars(tape, per_day);
  };

  AdamW opt({{encoder.parameters(), cfg.stage1_lr}, {head_store.refs(), cfg.stage1_lr}}, cfg.weight_decay);
  StageHooks hooks;
  hooks.name = "stage1";
  hooks.epochs = cfg.stage1_epochs;
  hooks.num_train = usable.size();
  hooks.params = concat(encoder.parameters(), head_store.refs());
  hooks.optimizer = &opt;
  hooks.batch_loss = [&](nn::Tape& tape, std::span<const std::size_t> batch, nn::Rng& r) {
    const auto ctx = train_ctx(encoder.dropout(), r);
    std::vector<Var> losses;
    for (std::size_t i : batch)
      losses.push_back(nn::bce_with_logits(tape, window_logit(tape, *usable[i], ctx), usable[i]->label));
    return nn::mean_scalars(tape, losses);
  };
  hooks.evaluate = [&]() -> std::optional<EvalResult> {
    if (held.empty()) return std::nullopt;
    std::vector<double> logits;
    std::vector<int> ys;
    std::size_t correct = 0;
    for (const auto* s : held) {
      nn::Tape tape(false);
      const double z = tape.scalar(window_logit(tape, *s, nn::ForwardContext{}));
      logits.push_back(z);
      ys.push_back(s->label);
      correct += (z >= 0.0 ? 1 : 0) == s->label ? 1 : 0;
    }
    return EvalResult{binary_cross_entropy(logits, ys),
                      static_cast<double>(correct) / static_cast<double>(held.size())};
  };
  Stage1Result result;
  result.report = run_stage(hooks, cfg, rng);
  result.head = extract();
  encoder.set_fine_tuned(true);
  return result;
}

namespace {

// Per-window data for stage 2, precomputed once.
struct PreparedWindow {
  std::vector<FeatureToken> tokens;
  // (token index, diary-day index) for each day with text.
  std::vector<std::pair<std::size_t, std::size_t>> diary_days;
  int label = 0;
};

// Windows overlap, so each (participant, day) diary is tokenized once and
// referenced by index.
struct DayTable {
  std::map<std::pair<std::string, Date>, std::size_t> index;
  std::vector<std::vector<TokenId>> tokens;
};

std::vector<PreparedWindow> prepare(std::span<const SampleWindow> samples, const TextEncoder* encoder,
                                    const FeatureSchema& schema, const FeatureScaler& scaler,
                                    DayTable& days) {
  std::vector<PreparedWindow> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    PreparedWindow w;
    w.label = s.label;
    if (encoder == nullptr) {
      w.tokens = tokenize_features(s, nullptr, schema, &scaler);
    } else {
      const auto ds = make_diary_sample(s, encoder->tokenizer());
      DiaryFeatures placeholder;
      placeholder.content.assign(ds.days.size(), kMissingContent);
      placeholder.presence_mask.assign(ds.days.size(), false);
      for (std::size_t d = 0; d < ds.days.size(); ++d) {
        if (ds.days[d].empty()) continue;
        placeholder.presence_mask[d] = true;
        ++placeholder.submission_frequency;
      }
      w.tokens = tokenize_features(s, &placeholder, schema, &scaler);
      const std::size_t first_content = schema.size() * ds.days.size();
      for (std::size_t d = 0; d < ds.days.size(); ++d) {
        if (ds.days[d].empty()) continue;
        const auto key = std::make_pair(s.participant_id, add_days(ds.window_start, static_cast<int>(d)));
        auto [it, inserted] = days.index.emplace(key, days.tokens.size());
        if (inserted) days.tokens.push_back(ds.days[d]);
        w.diary_days.emplace_back(first_content + d, it->second);
      }
    }
    out.push_back(std::move(w));
  }
  return out;
}

}  // namespace

StageReport stage2_joint_train(FusionModel& model, TextEncoder* encoder,
                               std::span<const SampleWindow> train,
                               std::span<const SampleWindow> validation, const FeatureSchema& schema,
                               const FeatureScaler& scaler, const TrainConfig& cfg) {
  cfg.validate();
  if (train.empty()) throw DegenerateTrainingError("stage 2: empty sample set");
  std::vector<int> labels;
  for (const auto& s : train) labels.push_back(s.label);
  check_labels(labels, "stage 2");
  if (encoder != nullptr && cfg.require_stage1 && !encoder->fine_tuned())
    throw Error("stage 2 requires a stage-1 fine-tuned encoder (set train.require_stage1 = false to override)");
  if (encoder != nullptr && static_cast<std::size_t>(model.text_embedding_dim()) != encoder->embedding_dim())
    throw DimensionError("fusion model content head does not match the encoder embedding size");

  DayTable days;
  const auto train_windows = prepare(train, encoder, schema, scaler, days);
  const auto val_windows = prepare(validation, encoder, schema, scaler, days);
  const bool encoder_trainable = encoder != nullptr && cfg.encoder_lr_stage2 > 0.0;

  // Pooled embeddings with the encoder held fixed (1 x dim each).
  auto embed_all = [&] {
    std::vector<nn::Matrix> out;
    out.reserve(days.tokens.size());
    for (const auto& t : days.tokens) out.push_back(encode(*encoder, t).transpose());
    return out;
  };
  std::vector<nn::Matrix> frozen;
  if (encoder != nullptr && !encoder_trainable) frozen = embed_all();

  auto window_logit = [&](nn::Tape& tape, const PreparedWindow& w, const nn::ForwardContext& model_ctx,
                          const nn::ForwardContext& enc_ctx, const std::vector<nn::Matrix>* fixed,
                          std::map<std::size_t, Var>& cache) {
    std::vector<std::pair<std::size_t, Var>> overrides;
    for (const auto& [tok, day] : w.diary_days) {
      auto it = cache.find(day);
      if (it == cache.end()) {
        const Var emb = fixed != nullptr ? tape.constant((*fixed)[day])
                                         : encoder->encode(tape, days.tokens[day], enc_ctx);
        it = cache.emplace(day, model.content(tape, emb)).first;
      }
      overrides.emplace_back(tok, it->second);
    }
    return model.forward(tape, w.tokens, model_ctx, overrides);
  };

  nn::ParameterRefs params = model.parameters();
  std::vector<AdamW::Group> groups{{model.parameters(), cfg.stage2_lr}};
  if (encoder_trainable) {
    params = concat(params, encoder->parameters());
    groups.push_back({encoder->parameters(), cfg.encoder_lr_stage2});
  }
  AdamW opt(std::move(groups), cfg.weight_decay);

  StageHooks hooks;
  hooks.name = "stage2";
  hooks.epochs = cfg.stage2_epochs;
  hooks.num_train = train_windows.size();
  hooks.params = params;
  hooks.optimizer = &opt;
  hooks.batch_loss = [&](nn::Tape& tape, std::span<const std::size_t> batch, nn::Rng& r) {
    const auto model_ctx = train_ctx(model.config().dropout, r);
    const auto enc_ctx = train_ctx(encoder != nullptr ? encoder->dropout() : 0.0, r);
    std::map<std::size_t, Var> cache;
    std::vector<Var> losses;
    for (std::size_t i : batch) {
      const auto& w = train_windows[i];
      losses.push_back(nn::bce_with_logits(
          tape, window_logit(tape, w, model_ctx, enc_ctx, encoder_trainable ? nullptr : &frozen, cache),
          w.label));
    }
    return nn::mean_scalars(tape, losses);
  };
  hooks.evaluate = [&]() -> std::optional<EvalResult> {
    if (val_windows.empty()) return std::nullopt;
    const std::vector<nn::Matrix> fixed = encoder_trainable ? embed_all() : std::vector<nn::Matrix>{};
    std::vector<double> logits;
    std::vector<int> ys;
    std::size_t correct = 0;
    for (const auto& w : val_windows) {
      nn::Tape tape(false);
      std::map<std::size_t, Var> cache;
      const double z = tape.scalar(window_logit(tape, w, nn::ForwardContext{}, nn::ForwardContext{},
                                                encoder_trainable ? &fixed : &frozen, cache));
      logits.push_back(z);
      ys.push_back(w.label);
      correct += (z >= 0.0 ? 1 : 0) == w.label ? 1 : 0;
    }
    return EvalResult{binary_cross_entropy(logits, ys),
                      static_cast<double>(correct) / static_cast<double>(val_windows.size())};
  };
  nn::Rng rng(derive_seed(cfg.seed, "stage2"));
  return run_stage(hooks, cfg, rng);
}

DiaryFeatures Forecaster::diary_features(const SampleWindow& sample) const {
  if (!encoder) throw Error("forecaster was trained without diary features");
  return diary_window_features(sample.diary_entries, sample.window_start(),
                               static_cast<int>(sample.objective.rows()), *encoder, model.content_head());
}

std::vector<FeatureToken> Forecaster::tokens(const SampleWindow& sample) const {
  if (!encoder) return tokenize_features(sample, nullptr, schema, &scaler);
  const auto diary = diary_features(sample);
  return tokenize_features(sample, &diary, schema, &scaler);
}

Prediction Forecaster::predict(const SampleWindow& sample, double threshold) const {
  return affect::predict(model, tokens(sample), threshold);
}

Forecaster train_forecaster(std::span<const SampleWindow> samples, const FeatureSchema& schema,
                            std::unique_ptr<TextEncoder> encoder, const ModelConfig& model_cfg,
                            const TrainConfig& train_cfg) {
  train_cfg.validate();
  if (samples.empty()) throw DegenerateTrainingError("no training samples");
  const int window_days = static_cast<int>(samples.front().objective.rows());
  auto split = split_validation(samples, train_cfg.validation_fraction);
  Forecaster f{schema, FeatureScaler::fit(split.train),
               FusionModel(model_cfg, schema, window_days,
                           encoder ? static_cast<int>(encoder->embedding_dim()) : 0),
               std::move(encoder), {}};
  if (f.encoder) {
    std::vector<DiarySample> train_text, val_text;
    for (const auto& s : split.train) train_text.push_back(make_diary_sample(s, f.encoder->tokenizer()));
    for (const auto& s : split.validation) val_text.push_back(make_diary_sample(s, f.encoder->tokenizer()));
    if (train_cfg.stage1_epochs > 0) {
      auto stage1 = stage1_finetune(*f.encoder, train_text, val_text, train_cfg);
      f.model.set_content_head(stage1.head);
      f.report.stage1 = std::move(stage1.report);
    }
  }
  f.report.stage2 = stage2_joint_train(f.model, f.encoder.get(), split.train, split.validation, schema,
                                       f.scaler, train_cfg);
  auto params = f.model.parameters();
  if (f.encoder) params = concat(params, f.encoder->parameters());
  f.report.checksum = nn::checksum(params);
  f.report.seed = train_cfg.seed;
  return f;
}

void save_forecaster(const Forecaster& f, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  f.model.save(dir / ForecasterFiles::kModel);
  write_file_atomic(dir / ForecasterFiles::kSchema, f.schema.serialize());
  nlohmann::ordered_json scaler{{"mean", f.scaler.mean}, {"stddev", f.scaler.stddev}};
  write_file_atomic(dir / ForecasterFiles::kScaler, scaler.dump(1) + "\n");
  if (!f.encoder) return;
  const auto* ref = dynamic_cast<const ReferenceTextEncoder*>(f.encoder.get());
  if (ref == nullptr) throw CheckpointError("only the reference text encoder can be checkpointed");
  ref->save(dir / ForecasterFiles::kEncoder);
  write_file_atomic(dir / ForecasterFiles::kVocab, ref->tokenizer().serialize());
}

Forecaster load_forecaster(const std::filesystem::path& dir) {
  auto schema = FeatureSchema::load(dir / ForecasterFiles::kSchema);
  FeatureScaler scaler;
  try {
    const auto j = nlohmann::json::parse(read_file(dir / ForecasterFiles::kScaler));
    scaler.mean = j.at("mean").get<std::vector<double>>();
    scaler.stddev = j.at("stddev").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError((dir / ForecasterFiles::kScaler).string() + ": " + e.what());
  }
  auto model = FusionModel::load(dir / ForecasterFiles::kModel, schema);
  std::unique_ptr<TextEncoder> encoder;
  if (std::filesystem::exists(dir / ForecasterFiles::kEncoder)) {
    auto vocab = Tokenizer::load(dir / ForecasterFiles::kVocab, 64);
    encoder = std::make_unique<ReferenceTextEncoder>(
        ReferenceTextEncoder::load(dir / ForecasterFiles::kEncoder, std::move(vocab)));
  }
  return Forecaster{std::move(schema), std::move(scaler), std::move(model), std::move(encoder), {}};
}

double diary_attention_mass(const FusionModel& model, std::span<const FeatureToken> tokens) {
  nn::Tape tape(false);
  std::vector<nn::Matrix> attention;
  model.forward(tape, tokens, nn::ForwardContext{}, {}, &attention);
  double mass = 0.0;
  for (const auto& a : attention)
    for (std::size_t j = 0; j < tokens.size(); ++j)
      if (model.layout().is_diary(tokens[j].feature_id)) mass += a.col(static_cast<Eigen::Index>(j)).mean();
  return attention.empty() ? 0.0 : mass / static_cast<double>(attention.size());
}

}  // namespace affect
