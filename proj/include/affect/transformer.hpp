#pragma once

#include <memory>
#include <string>
#include <vector>

#include "affect/nn.hpp"

namespace affect::nn {

// Owns parameters and hands out stable pointers to them.
class ParameterStore {
 public:
  Parameter& add(std::string name, Matrix value);
  ParameterRefs refs() const;

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

struct LinearLayer {
  Parameter* weight = nullptr;  // in x out
  Parameter* bias = nullptr;    // 1 x out

  static LinearLayer create(ParameterStore& store, const std::string& name, Eigen::Index in,
                            Eigen::Index out, Rng& rng);
  Var operator()(Tape& t, Var x) const;
};

struct LayerNorm {
  Parameter* gain = nullptr;
  Parameter* bias = nullptr;

  static LayerNorm create(ParameterStore& store, const std::string& name, Eigen::Index dim);
  Var operator()(Tape& t, Var x) const;
};

// Pre-norm transformer encoder layer: x + Attn(LN(x)), then x + FFN(LN(x)).
struct EncoderLayer {
  LayerNorm norm1;
  LinearLayer query, key, value, output;
  LayerNorm norm2;
  LinearLayer ffn_in, ffn_out;
  int heads = 1;

  static EncoderLayer create(ParameterStore& store, const std::string& name, Eigen::Index dim,
                             int heads, Eigen::Index ffn_dim, Rng& rng);
  Var operator()(Tape& t, Var x, const ForwardContext& ctx,
                 std::vector<Matrix>* attention = nullptr) const;
};

// A stack of encoder layers followed by a final layer norm.
struct EncoderStack {
  std::vector<EncoderLayer> layers;
  LayerNorm final_norm;

  static EncoderStack create(ParameterStore& store, const std::string& name, Eigen::Index dim,
                             int heads, int num_layers, Eigen::Index ffn_dim, Rng& rng);
  // `last_attention` receives the per-head weights of the final layer.
  Var operator()(Tape& t, Var x, const ForwardContext& ctx,
                 std::vector<Matrix>* last_attention = nullptr) const;
};

}  // namespace affect::nn
