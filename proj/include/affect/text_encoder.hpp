#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "affect/nn.hpp"
#include "affect/tokenizer.hpp"
#include "affect/transformer.hpp"

namespace affect {

// Maps a token sequence to a pooled, differentiable embedding. Implementations
// range from the small reference transformer below to adapters around large
// pre-trained models; the training code only sees this interface.
class TextEncoder {
 public:
  virtual ~TextEncoder() = default;

  virtual std::size_t vocab_size() const = 0;
  virtual std::size_t embedding_dim() const = 0;
  virtual std::size_t max_tokens() const = 0;
  virtual const Tokenizer& tokenizer() const = 0;
  // Dropout applied during training forwards.
  virtual double dropout() const { return 0.0; }

  // Pooled representation (1 x embedding_dim). When `last_attention` is given it
  // receives the per-head attention weights of the final layer.
  virtual nn::Var encode(nn::Tape& tape, std::span<const TokenId> tokens,
                         const nn::ForwardContext& ctx,
                         std::vector<nn::Matrix>* last_attention = nullptr) const = 0;

  virtual nn::ParameterRefs parameters() const = 0;
  virtual std::unique_ptr<TextEncoder> clone() const = 0;

  // Set once stage-1 fine-tuning has run.
  bool fine_tuned() const { return fine_tuned_; }
  void set_fine_tuned(bool v) { fine_tuned_ = v; }

 private:
  bool fine_tuned_ = false;
};

// Inference helper: pooled embedding with dropout disabled.
nn::Vector encode(const TextEncoder& encoder, std::span<const TokenId> tokens);

struct TextEncoderConfig {
  int embedding_dim = 64;
  int num_heads = 4;
  int num_layers = 2;
  int ffn_dim = 128;
  int max_tokens = 64;
  double dropout = 0.1;
  std::uint64_t seed = 0;
};

// Small transformer trained from scratch: token + learned position embeddings,
// pre-norm encoder layers, pooled at the sequence-start position.
class ReferenceTextEncoder final : public TextEncoder {
 public:
  ReferenceTextEncoder(Tokenizer tokenizer, TextEncoderConfig config);

  std::size_t vocab_size() const override { return tokenizer_.vocab_size(); }
  std::size_t embedding_dim() const override { return static_cast<std::size_t>(config_.embedding_dim); }
  std::size_t max_tokens() const override { return static_cast<std::size_t>(config_.max_tokens); }
  const Tokenizer& tokenizer() const override { return tokenizer_; }
  double dropout() const override { return config_.dropout; }
  const TextEncoderConfig& config() const { return config_; }

  nn::Var encode(nn::Tape& tape, std::span<const TokenId> tokens, const nn::ForwardContext& ctx,
                 std::vector<nn::Matrix>* last_attention = nullptr) const override;
  nn::ParameterRefs parameters() const override { return store_.refs(); }
  std::unique_ptr<TextEncoder> clone() const override;

  // Binary checkpoint: magic, version, config, fine-tuned flag, parameters.
  // The vocabulary is stored separately (Tokenizer::serialize).
  void save(const std::filesystem::path& path) const;
  static ReferenceTextEncoder load(const std::filesystem::path& path, Tokenizer tokenizer);

  static constexpr std::uint32_t kCheckpointVersion = 1;

 private:
  Tokenizer tokenizer_;
  TextEncoderConfig config_;
  nn::ParameterStore store_;
  nn::Parameter* token_embedding_ = nullptr;
  nn::Parameter* position_embedding_ = nullptr;
  nn::EncoderStack stack_;
};

}  // namespace affect
