#include "projnet/nn.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "projnet/errors.hpp"

namespace projnet::nn {

const char* to_string(Arch a) {
  switch (a) {
    case Arch::Identity: return "identity";
    case Arch::MLP: return "mlp";
    case Arch::CNN: return "cnn";
    case Arch::RNN: return "rnn";
  }
  return "?";
}

Arch parse_arch(const std::string& s) {
  if (s == "identity") return Arch::Identity;
  if (s == "mlp") return Arch::MLP;
  if (s == "cnn") return Arch::CNN;
  if (s == "rnn") return Arch::RNN;
  throw std::invalid_argument("unknown architecture '" + s + "'");
}

std::string describe(const LayerSpec& l) {
  std::ostringstream os;
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Linear>) os << "Linear(" << v.in << "," << v.out << ")";
        if constexpr (std::is_same_v<T, ReLUBias>) os << "ReLUBias(" << v.width << ")";
        if constexpr (std::is_same_v<T, Conv2d>) os << "Conv2d(" << v.in_ch << "," << v.out_ch << ")";
        if constexpr (std::is_same_v<T, MaxPoolSpatial>) os << "MaxPoolSpatial";
        if constexpr (std::is_same_v<T, Embedding>) os << "Embedding(" << v.vocab << "," << v.dim << ")";
        if constexpr (std::is_same_v<T, SkipConcat>) os << "SkipConcat(" << v.parts << ")";
        if constexpr (std::is_same_v<T, Quantize>) os << "Quantize(" << v.levels << "," << v.alpha << ")";
      },
      l);
  return os.str();
}

ModelSpec ModelSpec::identity(std::size_t d) {
  ModelSpec m;
  m.arch = Arch::Identity;
  m.input_shape = {d};
  m.classes = d;
  m.hidden = 0;
  m.depth = 0;
  return m;
}

ModelSpec ModelSpec::mlp(std::size_t in, std::size_t hidden, std::size_t depth, std::size_t classes, bool skip) {
  ModelSpec m;
  m.arch = Arch::MLP;
  m.input_shape = {in};
  m.hidden = hidden;
  m.depth = depth;
  m.classes = classes;
  m.skip = skip;
  return m;
}

ModelSpec ModelSpec::cnn(std::size_t h, std::size_t w, std::size_t c, std::size_t channels, std::size_t depth,
                         std::size_t classes, bool skip) {
  ModelSpec m;
  m.arch = Arch::CNN;
  m.input_shape = {h, w, c};
  m.hidden = channels;
  m.depth = depth;
  m.classes = classes;
  m.skip = skip;
  return m;
}

ModelSpec ModelSpec::rnn(std::size_t vocab, std::size_t embed_dim, std::size_t hidden, std::size_t depth,
                         std::size_t unroll) {
  ModelSpec m;
  m.arch = Arch::RNN;
  m.input_shape = {unroll};
  m.classes = vocab;
  m.embed_dim = embed_dim;
  m.hidden = hidden;
  m.depth = depth;
  return m;
}

void ModelSpec::validate() const {
  auto fail = [&](const std::string& what) { throw std::invalid_argument(std::string(to_string(arch)) + ": " + what); };
  if (classes == 0) fail("class count must be positive");
  if (quantize && (quantize->levels < 2 || !(quantize->alpha > 0))) fail("quantize needs k >= 2 and alpha > 0");
  switch (arch) {
    case Arch::Identity:
      if (input_shape.size() != 1 || input_shape[0] != classes) fail("input width must equal the class count");
      break;
    case Arch::MLP:
      if (input_shape.size() != 1 || input_shape[0] == 0) fail("input shape must be (d)");
      if (depth > 0 && hidden == 0) fail("hidden width must be positive");
      if (skip && depth == 0) fail("skip needs at least one hidden layer");
      break;
    case Arch::CNN:
      if (input_shape.size() != 3 || numel(input_shape) == 0) fail("input shape must be (H,W,C)");
      if (depth == 0 || hidden == 0) fail("need at least one conv layer with positive channels");
      break;
    case Arch::RNN:
      if (input_shape.size() != 1 || input_shape[0] < 1) fail("unroll length T must be >= 1");
      if (embed_dim == 0 || hidden == 0 || depth == 0) fail("embedding, hidden width and depth must be positive");
      if (skip) fail("skip readout is not defined for the recurrent cell");
      if (quantize) fail("quantize layers are not defined for the recurrent cell");
      break;
  }
}

std::vector<LayerSpec> ModelSpec::layers() const {
  std::vector<LayerSpec> r;
  auto hidden_tail = [&](std::size_t w) {
    r.push_back(ReLUBias{w});
    if (quantize) r.push_back(Quantize{quantize->levels, quantize->alpha});
  };
  switch (arch) {
    case Arch::Identity: break;
    case Arch::MLP: {
      std::size_t in = input_shape[0];
      for (std::size_t l = 0; l < depth; ++l) {
        r.push_back(Linear{in, hidden});
        hidden_tail(hidden);
        in = hidden;
      }
      if (skip) {
        r.push_back(SkipConcat{depth});
        in = hidden * depth;
      }
      r.push_back(Linear{in, classes});
      break;
    }
    case Arch::CNN: {
      std::size_t c = input_shape[2];
      for (std::size_t l = 0; l < depth; ++l) {
        r.push_back(Conv2d{c, hidden});
        hidden_tail(hidden);
        c = hidden;
      }
      r.push_back(MaxPoolSpatial{});
      if (skip) r.push_back(SkipConcat{depth});
      r.push_back(Linear{skip ? hidden * depth : hidden, classes});
      break;
    }
    case Arch::RNN: {
      r.push_back(Embedding{classes, embed_dim});
      std::size_t in = embed_dim + hidden;
      for (std::size_t l = 0; l < depth; ++l) {
        r.push_back(Linear{in, hidden});
        r.push_back(ReLUBias{hidden});
        in = hidden;
      }
      r.push_back(Linear{hidden, classes});
      r.push_back(Linear{hidden, hidden});
      r.push_back(ReLUBias{hidden});
      break;
    }
  }
  return r;
}

std::vector<std::pair<std::string, Shape>> ModelSpec::param_shapes() const {
  std::vector<std::pair<std::string, Shape>> r;
  auto layer = [&](const std::string& prefix, std::size_t l, std::size_t in, std::size_t out) {
    r.push_back({prefix + "." + std::to_string(l) + ".weight", {in, out}});
    r.push_back({prefix + "." + std::to_string(l) + ".bias", {out}});
  };
  switch (arch) {
    case Arch::Identity: break;
    case Arch::MLP: {
      std::size_t in = input_shape[0];
      for (std::size_t l = 0; l < depth; ++l, in = hidden) layer("layers", l, in, hidden);
      r.push_back({"out.weight", {skip ? hidden * depth : in, classes}});
      break;
    }
    case Arch::CNN: {
      std::size_t c = input_shape[2];
      for (std::size_t l = 0; l < depth; ++l, c = hidden) layer("conv", l, 9 * c, hidden);
      r.push_back({"out.weight", {skip ? hidden * depth : hidden, classes}});
      break;
    }
    case Arch::RNN: {
      r.push_back({"embed.weight", {classes, embed_dim}});
      std::size_t in = embed_dim + hidden;
      for (std::size_t l = 0; l < depth; ++l, in = hidden) layer("cell", l, in, hidden);
      r.push_back({"out.weight", {hidden, classes}});
      r.push_back({"state.weight", {hidden, hidden}});
      r.push_back({"state.bias", {hidden}});
      break;
    }
  }
  return r;
}

nlohmann::json ModelSpec::to_json() const {
  nlohmann::json j;
  j["arch"] = to_string(arch);
  j["input_shape"] = input_shape;
  j["classes"] = classes;
  j["hidden"] = hidden;
  j["depth"] = depth;
  j["skip"] = skip;
  j["embed_dim"] = embed_dim;
  if (quantize)
    j["quantize"] = {{"levels", quantize->levels}, {"alpha", quantize->alpha}};
  else
    j["quantize"] = nullptr;
  return j;
}

ModelSpec ModelSpec::from_json(const nlohmann::json& j) {
  ModelSpec m;
  m.arch = parse_arch(j.at("arch").get<std::string>());
  m.input_shape = j.at("input_shape").get<Shape>();
  m.classes = j.at("classes").get<std::size_t>();
  m.hidden = j.at("hidden").get<std::size_t>();
  m.depth = j.at("depth").get<std::size_t>();
  m.skip = j.at("skip").get<bool>();
  m.embed_dim = j.value("embed_dim", std::size_t{0});
  if (j.contains("quantize") && !j["quantize"].is_null())
    m.quantize = QuantSpec{j["quantize"].at("levels").get<std::size_t>(), j["quantize"].at("alpha").get<double>()};
  m.validate();
  return m;
}

ParamTree init_params(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  ParamTree r;
  for (const auto& [name, shape] : spec.param_shapes()) {
    Tensor t(shape, 0.0);
    bool bias = name.size() >= 4 && name.compare(name.size() - 4, 4, "bias") == 0;
    if (!bias) {
      std::size_t fan_in = name == "embed.weight" ? 1 : shape[0];
      double a = std::sqrt(1.0 / static_cast<double>(fan_in));
      for (auto& v : t.values()) {
        double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        v = -a + 2 * a * u;
      }
    }
    r.emplace(name, std::move(t));
  }
  return r;
}

// ---------------------------------------------------------------- builders

Value build_linear(GraphBuilder& b, const std::vector<Value>& parts, const Value& weight) {
  if (parts.empty()) throw ShapeError("linear: no inputs");
  if (weight.shape.size() != 2) throw ShapeError("linear: weight must be (in,out), got " + shape_str(weight.shape));
  std::size_t rows = parts[0].shape.at(0), in = 0, out = weight.shape[1];
  for (const auto& p : parts) {
    if (p.shape.size() != 2 || p.shape[0] != rows)
      throw ShapeError("linear: input " + shape_str(p.shape) + " is not (" + std::to_string(rows) + ",d)");
    in += p.shape[1];
  }
  if (out == 0) throw ShapeError("linear: output width must be positive");
  if (weight.shape[0] != in)
    throw ShapeError("linear: weight " + shape_str(weight.shape) + " does not take " + std::to_string(in) +
                     " inputs");

  Value w = b.transpose(weight, {1, 0});
  w = b.reshape(w, {1, out, in});
  w = b.repeat(w, 0, rows);

  std::vector<Value> xs;
  for (const auto& p : parts) {
    Value x = b.reshape(p, {rows, 1, p.shape[1]});
    xs.push_back(b.repeat(x, 1, out));
  }
  Value x = xs.size() == 1 ? xs[0] : b.concat(xs, 2);
  return b.dot(x, w);
}

Value build_relu_bias(GraphBuilder& b, const Value& x, const Value& bias) {
  if (x.shape.empty()) throw ShapeError("relu_bias: scalar input");
  std::size_t w = x.shape.back();
  if (bias.shape != Shape{w})
    throw ShapeError("relu_bias: bias " + shape_str(bias.shape) + " does not match width " + std::to_string(w));
  std::size_t lead = numel(x.shape) / w;
  Shape s3 = x.shape;
  s3.push_back(1);

  Value bb = b.reshape(bias, {1, w});
  bb = b.repeat(bb, 0, lead);
  bb = b.reshape(bb, s3);
  Value xx = b.reshape(x, s3);
  return b.sum_relu(b.concat({xx, bb}, s3.size() - 1));
}

Value build_conv2d(GraphBuilder& b, const Value& x, const Value& kernel) {
  if (x.shape.size() != 4) throw ShapeError("conv2d: input must be (N,H,W,C), got " + shape_str(x.shape));
  std::size_t N = x.shape[0], H = x.shape[1], W = x.shape[2], C = x.shape[3];
  if (kernel.shape.size() != 2 || kernel.shape[0] != 9 * C)
    throw ShapeError("conv2d: kernel " + shape_str(kernel.shape) + " does not match " + std::to_string(C) +
                     " input channels");
  std::size_t co = kernel.shape[1], pix = N * H * W;
  if (co == 0) throw ShapeError("conv2d: output channels must be positive");

  Value p = b.pad(x, {{0, 0}, {1, 1}, {1, 1}, {0, 0}});
  p = b.conv_patch(p, 3, 3);
  p = b.reshape(p, {pix, 1, 9 * C});
  p = b.repeat(p, 1, co);

  Value k = b.transpose(kernel, {1, 0});
  k = b.reshape(k, {1, co, 9 * C});
  k = b.repeat(k, 0, pix);
  return b.reshape(b.dot(p, k), {N, H, W, co});
}

Value build_maxpool_spatial(GraphBuilder& b, const Value& x) {
  if (x.shape.size() != 4) throw ShapeError("maxpool: input must be (N,H,W,C), got " + shape_str(x.shape));
  std::size_t N = x.shape[0], H = x.shape[1], W = x.shape[2], C = x.shape[3];
  Value t = b.transpose(x, {0, 3, 1, 2});
  return b.max(b.reshape(t, {N, C, H * W}));
}

Value build_embedding(GraphBuilder& b, const Value& table, const std::vector<std::size_t>& ids) {
  if (table.shape.size() != 2) throw ShapeError("embedding: table must be (vocab,dim)");
  return b.index(table, 0, ids);
}

std::vector<Value> build_rnn(GraphBuilder& b, const ModelSpec& spec, const std::map<std::string, Value>& params,
                             const Tensor& ids) {
  if (ids.rank() != 2) throw ShapeError("rnn: ids must be (N,T), got " + shape_str(ids.shape()));
  std::size_t N = ids.dim(0), T = ids.dim(1), H = spec.hidden;
  if (T < 1) throw ShapeError("rnn: T must be >= 1");
  auto P = [&](const std::string& n) -> const Value& { return params.at(n); };

  Value h = b.constant(Tensor({N, H}, 0.0), "h0");
  std::vector<Value> logits;
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<std::size_t> step_ids(N);
    for (std::size_t n = 0; n < N; ++n) {
      double v = ids[n * T + t];
      if (v < 0 || v >= static_cast<double>(spec.classes) || v != std::floor(v))
        throw std::out_of_range("rnn: symbol id out of range");
      step_ids[n] = static_cast<std::size_t>(v);
    }
    Value e = build_embedding(b, P("embed.weight"), step_ids);
    Value a = build_relu_bias(b, build_linear(b, {e, h}, P("cell.0.weight")), P("cell.0.bias"));
    for (std::size_t l = 1; l < spec.depth; ++l) {
      std::string pre = "cell." + std::to_string(l);
      a = build_relu_bias(b, build_linear(b, {a}, P(pre + ".weight")), P(pre + ".bias"));
    }
    logits.push_back(build_linear(b, {a}, P("out.weight")));
    h = build_relu_bias(b, build_linear(b, {a}, P("state.weight")), P("state.bias"));
  }
  return logits;
}

std::vector<NodeId> attach_loss(GraphBuilder& b, const Value& logits, const std::vector<std::size_t>& labels,
                                const TargetSpec& target) {
  return {b.target(logits, target, labels)};
}

Graph trace(const ModelSpec& spec, const ParamTree& params, const Tensor& inputs,
            const std::vector<std::size_t>& labels, const TargetSpec& target) {
  spec.validate();
  Shape want = spec.input_shape;
  want.insert(want.begin(), inputs.rank() ? inputs.dim(0) : 0);
  if (inputs.shape() != want)
    throw ShapeError("trace: inputs " + shape_str(inputs.shape()) + " do not match model input " +
                     shape_str(spec.input_shape));
  std::size_t N = want[0];
  if (labels.size() != N * spec.labels_per_sample())
    throw ShapeError("trace: " + std::to_string(labels.size()) + " labels for a batch of " + std::to_string(N));

  GraphBuilder b;
  std::map<std::string, Value> P;
  for (const auto& [name, shape] : spec.param_shapes()) {
    auto it = params.find(name);
    if (it == params.end()) throw std::invalid_argument("trace: missing parameter '" + name + "'");
    if (it->second.shape() != shape)
      throw ShapeError("trace: parameter '" + name + "' has shape " + shape_str(it->second.shape()) + ", expected " +
                       shape_str(shape));
    P.emplace(name, b.parameter(name, it->second));
  }

  auto hidden_tail = [&](Value h) { return spec.quantize ? b.quantize(h, spec.quantize->levels, spec.quantize->alpha) : h; };

  switch (spec.arch) {
    case Arch::Identity: {
      Value x = b.constant(inputs, "x");
      attach_loss(b, b.identity(x), labels, target);
      break;
    }
    case Arch::MLP: {
      Value h = b.constant(inputs, "x");
      std::vector<Value> hidden;
      for (std::size_t l = 0; l < spec.depth; ++l) {
        std::string pre = "layers." + std::to_string(l);
        h = hidden_tail(build_relu_bias(b, build_linear(b, {h}, P.at(pre + ".weight")), P.at(pre + ".bias")));
        hidden.push_back(h);
      }
      attach_loss(b, build_linear(b, spec.skip ? hidden : std::vector<Value>{h}, P.at("out.weight")), labels, target);
      break;
    }
    case Arch::CNN: {
      Value h = b.constant(inputs, "x");
      std::vector<Value> pooled;
      for (std::size_t l = 0; l < spec.depth; ++l) {
        std::string pre = "conv." + std::to_string(l);
        h = hidden_tail(build_relu_bias(b, build_conv2d(b, h, P.at(pre + ".weight")), P.at(pre + ".bias")));
        if (spec.skip) pooled.push_back(build_maxpool_spatial(b, h));
      }
      if (!spec.skip) pooled.push_back(build_maxpool_spatial(b, h));
      attach_loss(b, build_linear(b, pooled, P.at("out.weight")), labels, target);
      break;
    }
    case Arch::RNN: {
      auto logits = build_rnn(b, spec, P, inputs);
      std::size_t T = spec.unroll();
      for (std::size_t t = 0; t < T; ++t) {
        std::vector<std::size_t> lt(N);
        for (std::size_t n = 0; n < N; ++n) lt[n] = labels[n * T + t];
        attach_loss(b, logits[t], lt, target);
      }
      break;
    }
  }
  return std::move(b).build();
}

}  // namespace projnet::nn
