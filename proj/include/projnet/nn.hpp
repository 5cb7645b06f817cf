#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "projnet/graph.hpp"

namespace projnet::nn {

enum class Arch { Identity, MLP, CNN, RNN };
const char* to_string(Arch a);
Arch parse_arch(const std::string& s);

struct Linear {
  std::size_t in, out;
};
struct ReLUBias {
  std::size_t width;
};
struct Conv2d {
  std::size_t in_ch, out_ch;  // 3x3, stride 1, pad 1
};
struct MaxPoolSpatial {};
struct Embedding {
  std::size_t vocab, dim;
};
struct SkipConcat {
  std::size_t parts;
};
struct Quantize {
  std::size_t levels;
  double alpha;
};
using LayerSpec = std::variant<Linear, ReLUBias, Conv2d, MaxPoolSpatial, Embedding, SkipConcat, Quantize>;
std::string describe(const LayerSpec& l);

struct QuantSpec {
  std::size_t levels = 3;
  double alpha = 1.0;
  bool operator==(const QuantSpec&) const = default;
};

// Identity: logits = inputs, no parameters.
// MLP: depth x (Linear, ReLUBias[, Quantize]) then a bias-free Linear readout.
// CNN: depth x (Conv2d, ReLUBias[, Quantize]), spatial max pool, Linear readout.
// RNN: per step, [embedding, h] -> trunk of depth x (Linear, ReLUBias) -> logits
//      head and a state head h = ReLU(W_s a + b_s); h0 = 0.
// With skip, the readout sees the concatenation of every hidden output
// (pooled for the CNN).
struct ModelSpec {
  Arch arch = Arch::MLP;
  Shape input_shape;  // per sample: (d), (H,W,C) or (T)
  std::size_t classes = 2;
  std::size_t hidden = 16;
  std::size_t depth = 1;
  bool skip = false;
  std::optional<QuantSpec> quantize;
  std::size_t embed_dim = 0;  // RNN; vocab = classes

  static ModelSpec identity(std::size_t d);
  static ModelSpec mlp(std::size_t in, std::size_t hidden, std::size_t depth, std::size_t classes,
                       bool skip = false);
  static ModelSpec cnn(std::size_t h, std::size_t w, std::size_t c, std::size_t channels, std::size_t depth,
                       std::size_t classes, bool skip = false);
  static ModelSpec rnn(std::size_t vocab, std::size_t embed_dim, std::size_t hidden, std::size_t depth,
                       std::size_t unroll);

  void validate() const;
  std::size_t unroll() const { return arch == Arch::RNN ? input_shape.at(0) : 1; }
  std::size_t labels_per_sample() const { return unroll(); }
  std::vector<LayerSpec> layers() const;
  std::vector<std::pair<std::string, Shape>> param_shapes() const;

  nlohmann::json to_json() const;
  static ModelSpec from_json(const nlohmann::json& j);
  bool operator==(const ModelSpec&) const = default;
};

ParamTree init_params(const ModelSpec& spec, std::uint64_t seed);

// Dense evaluation. Returns (N, classes), or (N, T, vocab) for the RNN.
Tensor forward_eval(const ModelSpec& spec, const ParamTree& params, const Tensor& inputs);

// Logits as rows: (N * labels_per_sample, classes).
Tensor logit_rows(const ModelSpec& spec, const Tensor& logits);
double accuracy(const Tensor& rows, const std::vector<std::size_t>& labels);
// Mean CE, or mean summed squared margin violation.
double mean_loss(const Tensor& rows, const std::vector<std::size_t>& labels, const TargetSpec& target);

// Builders. Parts are (rows, d_k) tensors jointly read by one weight
// (sum d_k, out); returns (rows, out).
Value build_linear(GraphBuilder& b, const std::vector<Value>& parts, const Value& weight);
// ReLU(x + bias) for x of shape (..., w), bias (w).
Value build_relu_bias(GraphBuilder& b, const Value& x, const Value& bias);
// x (N,H,W,Cin), kernel (9*Cin, Cout) -> (N,H,W,Cout)
Value build_conv2d(GraphBuilder& b, const Value& x, const Value& kernel);
// (N,H,W,C) -> (N,C)
Value build_maxpool_spatial(GraphBuilder& b, const Value& x);
// rows of `table` picked by ids -> (ids.size(), dim)
Value build_embedding(GraphBuilder& b, const Value& table, const std::vector<std::size_t>& ids);
// ids (N,T); returns the T per-step logits (N, vocab)
std::vector<Value> build_rnn(GraphBuilder& b, const ModelSpec& spec, const std::map<std::string, Value>& params,
                             const Tensor& ids);
std::vector<NodeId> attach_loss(GraphBuilder& b, const Value& logits, const std::vector<std::size_t>& labels,
                                const TargetSpec& target);

// Full training graph for one batch. labels: N * labels_per_sample.
Graph trace(const ModelSpec& spec, const ParamTree& params, const Tensor& inputs,
            const std::vector<std::size_t>& labels, const TargetSpec& target);

}  // namespace projnet::nn
