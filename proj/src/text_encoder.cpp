#include "affect/text_encoder.hpp"

#include <fstream>
#include <sstream>

#include "affect/binary_io.hpp"
#include "affect/common.hpp"

namespace affect {

nn::Vector encode(const TextEncoder& encoder, std::span<const TokenId> tokens) {
  nn::Tape tape(false);
  nn::Var pooled = encoder.encode(tape, tokens, nn::ForwardContext{});
  return tape.value(pooled).row(0).transpose();
}

ReferenceTextEncoder::ReferenceTextEncoder(Tokenizer tokenizer, TextEncoderConfig config)
    : tokenizer_(std::move(tokenizer)), config_(config) {
  if (config_.embedding_dim <= 0 || config_.num_heads <= 0 || config_.num_layers <= 0 ||
      config_.ffn_dim <= 0 || config_.max_tokens < 2)
    throw Error("text encoder dimensions must be positive");
  if (config_.embedding_dim % config_.num_heads != 0)
    throw Error("text encoder embedding_dim must be divisible by num_heads");
  if (static_cast<std::size_t>(config_.max_tokens) != tokenizer_.max_tokens())
    throw Error("tokenizer max_tokens does not match encoder max_tokens");
  nn::Rng rng(config_.seed);
  const Eigen::Index d = config_.embedding_dim;
  token_embedding_ = &store_.add("text.token_embedding",
                                 nn::normal(static_cast<Eigen::Index>(tokenizer_.vocab_size()), d, 0.5, rng));
  position_embedding_ = &store_.add("text.position_embedding", nn::normal(config_.max_tokens, d, 0.1, rng));
  stack_ = nn::EncoderStack::create(store_, "text.encoder", d, config_.num_heads, config_.num_layers,
                                    config_.ffn_dim, rng);
}

nn::Var ReferenceTextEncoder::encode(nn::Tape& tape, std::span<const TokenId> tokens,
                                     const nn::ForwardContext& ctx,
                                     std::vector<nn::Matrix>* last_attention) const {
  if (tokens.empty()) throw DimensionError("cannot encode an empty token sequence");
  const std::size_t n = std::min(tokens.size(), max_tokens());
  std::vector<int> ids(tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(n));
  for (int id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_size())
      throw VocabularyError("token id " + std::to_string(id) + " outside vocabulary of size " +
                            std::to_string(vocab_size()));
  std::vector<int> positions(n);
  for (std::size_t i = 0; i < n; ++i) positions[i] = static_cast<int>(i);
  nn::Var x = nn::add(tape, nn::gather_rows(tape, tape.parameter(*token_embedding_), ids),
                      nn::gather_rows(tape, tape.parameter(*position_embedding_), positions));
  x = stack_(tape, x, ctx, last_attention);
  return nn::select_row(tape, x, 0);
}

std::unique_ptr<TextEncoder> ReferenceTextEncoder::clone() const {
  auto copy = std::make_unique<ReferenceTextEncoder>(tokenizer_, config_);
  nn::unflatten(copy->parameters(), nn::flatten(parameters()));
  copy->set_fine_tuned(fine_tuned());
  return copy;
}

void ReferenceTextEncoder::save(const std::filesystem::path& path) const {
  std::ostringstream out(std::ios::binary);
  BinaryWriter w(out);
  out.write("AFTE", 4);
  w.pod(kCheckpointVersion);
  w.pod<std::int32_t>(config_.embedding_dim);
  w.pod<std::int32_t>(config_.num_heads);
  w.pod<std::int32_t>(config_.num_layers);
  w.pod<std::int32_t>(config_.ffn_dim);
  w.pod<std::int32_t>(config_.max_tokens);
  w.pod<double>(config_.dropout);
  w.pod<std::uint64_t>(config_.seed);
  w.pod<std::uint64_t>(tokenizer_.vocab_size());
  w.pod<std::uint64_t>(fnv1a64(tokenizer_.serialize()));
  w.pod<std::uint8_t>(fine_tuned() ? 1 : 0);
  w.doubles(nn::flatten(parameters()));
  write_file_atomic(path, out.str());
}

ReferenceTextEncoder ReferenceTextEncoder::load(const std::filesystem::path& path, Tokenizer tokenizer) {
  std::istringstream in(read_file(path), std::ios::binary);
  BinaryReader r(in, path.string());
  r.expect_magic("AFTE");
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw CheckpointError(path.string() + ": unsupported encoder checkpoint version " + std::to_string(version));
  TextEncoderConfig cfg;
  cfg.embedding_dim = r.pod<std::int32_t>();
  cfg.num_heads = r.pod<std::int32_t>();
  cfg.num_layers = r.pod<std::int32_t>();
  cfg.ffn_dim = r.pod<std::int32_t>();
  cfg.max_tokens = r.pod<std::int32_t>();
  cfg.dropout = r.pod<double>();
  cfg.seed = r.pod<std::uint64_t>();
  const auto vocab = r.pod<std::uint64_t>();
  const auto vocab_hash = r.pod<std::uint64_t>();
  if (vocab != tokenizer.vocab_size() || vocab_hash != fnv1a64(tokenizer.serialize()))
    throw CheckpointError(path.string() + ": vocabulary does not match the checkpoint");
  const bool tuned = r.pod<std::uint8_t>() != 0;
  const auto params = r.doubles();
  if (tokenizer.max_tokens() != static_cast<std::size_t>(cfg.max_tokens))
    tokenizer = Tokenizer::parse(tokenizer.serialize(), static_cast<std::size_t>(cfg.max_tokens));
  ReferenceTextEncoder enc(std::move(tokenizer), cfg);
  if (params.size() != nn::parameter_count(enc.parameters()))
    throw CheckpointError(path.string() + ": parameter count mismatch");
  nn::unflatten(enc.parameters(), params);
  enc.set_fine_tuned(tuned);
  return enc;
}

}  // namespace affect
