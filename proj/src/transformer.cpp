#include "affect/transformer.hpp"

namespace affect::nn {

Parameter& ParameterStore::add(std::string name, Matrix value) {
  params_.push_back(std::make_unique<Parameter>(std::move(name), std::move(value)));
  return *params_.back();
}

ParameterRefs ParameterStore::refs() const {
  ParameterRefs out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

LinearLayer LinearLayer::create(ParameterStore& store, const std::string& name, Eigen::Index in,
                                Eigen::Index out, Rng& rng) {
  LinearLayer l;
  l.weight = &store.add(name + ".weight", xavier_uniform(in, out, rng));
  l.bias = &store.add(name + ".bias", Matrix::Zero(1, out));
  return l;
}

Var LinearLayer::operator()(Tape& t, Var x) const {
  return linear(t, x, t.parameter(*weight), t.parameter(*bias));
}

LayerNorm LayerNorm::create(ParameterStore& store, const std::string& name, Eigen::Index dim) {
  LayerNorm n;
  n.gain = &store.add(name + ".gain", Matrix::Ones(1, dim));
  n.bias = &store.add(name + ".bias", Matrix::Zero(1, dim));
  return n;
}

Var LayerNorm::operator()(Tape& t, Var x) const {
  return layer_norm(t, x, t.parameter(*gain), t.parameter(*bias));
}

EncoderLayer EncoderLayer::create(ParameterStore& store, const std::string& name, Eigen::Index dim,
                                  int heads, Eigen::Index ffn_dim, Rng& rng) {
  EncoderLayer l;
  l.heads = heads;
  l.norm1 = LayerNorm::create(store, name + ".norm1", dim);
  l.query = LinearLayer::create(store, name + ".query", dim, dim, rng);
  l.key = LinearLayer::create(store, name + ".key", dim, dim, rng);
  l.value = LinearLayer::create(store, name + ".value", dim, dim, rng);
  l.output = LinearLayer::create(store, name + ".output", dim, dim, rng);
  l.norm2 = LayerNorm::create(store, name + ".norm2", dim);
  l.ffn_in = LinearLayer::create(store, name + ".ffn_in", dim, ffn_dim, rng);
  l.ffn_out = LinearLayer::create(store, name + ".ffn_out", ffn_dim, dim, rng);
  return l;
}

Var EncoderLayer::operator()(Tape& t, Var x, const ForwardContext& ctx,
                             std::vector<Matrix>* attention) const {
  Var h = norm1(t, x);
  Var a = multi_head_attention(t, query(t, h), key(t, h), value(t, h), heads, attention);
  x = add(t, x, dropout(t, output(t, a), ctx));
  h = norm2(t, x);
  Var f = ffn_out(t, gelu(t, ffn_in(t, h)));
  return add(t, x, dropout(t, f, ctx));
}

EncoderStack EncoderStack::create(ParameterStore& store, const std::string& name, Eigen::Index dim,
                                  int heads, int num_layers, Eigen::Index ffn_dim, Rng& rng) {
  EncoderStack s;
  for (int i = 0; i < num_layers; ++i)
    s.layers.push_back(
        EncoderLayer::create(store, name + ".layer" + std::to_string(i), dim, heads, ffn_dim, rng));
  s.final_norm = LayerNorm::create(store, name + ".final_norm", dim);
  return s;
}

Var EncoderStack::operator()(Tape& t, Var x, const ForwardContext& ctx,
                             std::vector<Matrix>* last_attention) const {
  for (std::size_t i = 0; i < layers.size(); ++i)
    x = layers[i](t, x, ctx, i + 1 == layers.size() ? last_attention : nullptr);
  return final_norm(t, x);
}

}  // namespace affect::nn
