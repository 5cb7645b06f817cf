#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "projnet/errors.hpp"
#include "projnet/nn.hpp"

namespace projnet::nn {

namespace {

// y (rows, out) = [parts...] (rows, sum d) @ w (sum d, out), summed in input order
Tensor linear(const std::vector<const Tensor*>& parts, const Tensor& w) {
  std::size_t rows = parts[0]->dim(0), out = w.dim(1);
  Tensor y({rows, out}, 0.0);
  std::vector<double> acc(out);
  for (std::size_t r = 0; r < rows; ++r) {
    std::fill(acc.begin(), acc.end(), 0.0);
    std::size_t i = 0;
    for (const Tensor* p : parts) {
      std::size_t d = p->dim(1);
      for (std::size_t j = 0; j < d; ++j, ++i) {
        double x = (*p)[r * d + j];
        const double* wr = w.data() + i * out;
        for (std::size_t o = 0; o < out; ++o) acc[o] += x * wr[o];
      }
    }
    std::copy(acc.begin(), acc.end(), y.data() + r * out);
  }
  return y;
}

void relu_bias(Tensor& x, const Tensor& b, const std::optional<QuantSpec>& q) {
  std::size_t w = b.size();
  for (std::size_t i = 0; i < x.size(); ++i) {
    double v = std::max(0.0, x[i] + b[i % w]);
    x[i] = q ? quantize_value(v, q->levels, q->alpha) : v;
  }
}

Tensor conv3x3(const Tensor& x, const Tensor& k) {
  std::size_t N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3), co = k.dim(1);
  Tensor y({N, H, W, co}, 0.0);
  std::vector<double> acc(co);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t dy = 0; dy < 3; ++dy)
          for (std::size_t dx = 0; dx < 3; ++dx) {
            long yy = static_cast<long>(i + dy) - 1, xx = static_cast<long>(j + dx) - 1;
            bool inside = yy >= 0 && xx >= 0 && yy < static_cast<long>(H) && xx < static_cast<long>(W);
            for (std::size_t c = 0; c < C; ++c) {
              double v = inside ? x[((n * H + yy) * W + xx) * C + c] : 0.0;
              const double* kr = k.data() + ((dy * 3 + dx) * C + c) * co;
              for (std::size_t o = 0; o < co; ++o) acc[o] += v * kr[o];
            }
          }
        std::copy(acc.begin(), acc.end(), y.data() + ((n * H + i) * W + j) * co);
      }
  return y;
}

Tensor maxpool(const Tensor& x) {
  std::size_t N = x.dim(0), HW = x.dim(1) * x.dim(2), C = x.dim(3);
  Tensor y({N, C}, 0.0);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t p = 0; p < HW; ++p) m = std::max(m, x[(n * HW + p) * C + c]);
      y[n * C + c] = m;
    }
  return y;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  std::size_t rows = parts[0].dim(0), w = 0;
  for (const auto& p : parts) w += p.dim(1);
  Tensor y({rows, w}, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double* dst = y.data() + r * w;
    for (const auto& p : parts) dst = std::copy(p.data() + r * p.dim(1), p.data() + (r + 1) * p.dim(1), dst);
  }
  return y;
}

const Tensor& param(const ParamTree& p, const std::string& name, const Shape& shape) {
  auto it = p.find(name);
  if (it == p.end()) throw std::invalid_argument("forward_eval: missing parameter '" + name + "'");
  if (it->second.shape() != shape)
    throw ShapeError("forward_eval: parameter '" + name + "' has shape " + shape_str(it->second.shape()) +
                     ", expected " + shape_str(shape));
  return it->second;
}

}  // namespace

Tensor forward_eval(const ModelSpec& spec, const ParamTree& params, const Tensor& inputs) {
  spec.validate();
  Shape want = spec.input_shape;
  want.insert(want.begin(), inputs.rank() ? inputs.dim(0) : 0);
  if (inputs.shape() != want)
    throw ShapeError("forward_eval: inputs " + shape_str(inputs.shape()) + " do not match model input " +
                     shape_str(spec.input_shape));
  std::map<std::string, const Tensor*> P;
  for (const auto& [name, shape] : spec.param_shapes()) P[name] = &param(params, name, shape);
  std::size_t N = want[0];

  switch (spec.arch) {
    case Arch::Identity: return inputs;
    case Arch::MLP: {
      Tensor h = inputs;
      std::vector<Tensor> hidden;
      for (std::size_t l = 0; l < spec.depth; ++l) {
        std::string pre = "layers." + std::to_string(l);
        h = linear({&h}, *P[pre + ".weight"]);
        relu_bias(h, *P[pre + ".bias"], spec.quantize);
        if (spec.skip) hidden.push_back(h);
      }
      std::vector<const Tensor*> parts;
      if (spec.skip)
        for (const auto& t : hidden) parts.push_back(&t);
      else
        parts.push_back(&h);
      return linear(parts, *P["out.weight"]);
    }
    case Arch::CNN: {
      Tensor h = inputs;
      std::vector<Tensor> pooled;
      for (std::size_t l = 0; l < spec.depth; ++l) {
        std::string pre = "conv." + std::to_string(l);
        h = conv3x3(h, *P[pre + ".weight"]);
        relu_bias(h, *P[pre + ".bias"], spec.quantize);
        if (spec.skip) pooled.push_back(maxpool(h));
      }
      if (!spec.skip) pooled.push_back(maxpool(h));
      Tensor feat = pooled.size() == 1 ? pooled[0] : concat_cols(pooled);
      return linear({&feat}, *P["out.weight"]);
    }
    case Arch::RNN: {
      std::size_t T = spec.unroll(), H = spec.hidden, D = spec.embed_dim, V = spec.classes;
      const Tensor& E = *P["embed.weight"];
      Tensor out({N, T, V}, 0.0);
      Tensor h({N, H}, 0.0);
      for (std::size_t t = 0; t < T; ++t) {
        Tensor e({N, D}, 0.0);
        for (std::size_t n = 0; n < N; ++n) {
          double v = inputs[n * T + t];
          if (v < 0 || v >= static_cast<double>(V) || v != std::floor(v))
            throw std::out_of_range("forward_eval: symbol id out of range");
          std::size_t id = static_cast<std::size_t>(v);
          std::copy(E.data() + id * D, E.data() + (id + 1) * D, e.data() + n * D);
        }
        Tensor a = linear({&e, &h}, *P["cell.0.weight"]);
        relu_bias(a, *P["cell.0.bias"], std::nullopt);
        for (std::size_t l = 1; l < spec.depth; ++l) {
          std::string pre = "cell." + std::to_string(l);
          a = linear({&a}, *P[pre + ".weight"]);
          relu_bias(a, *P[pre + ".bias"], std::nullopt);
        }
        Tensor logits = linear({&a}, *P["out.weight"]);
        for (std::size_t n = 0; n < N; ++n)
          std::copy(logits.data() + n * V, logits.data() + (n + 1) * V, out.data() + (n * T + t) * V);
        h = linear({&a}, *P["state.weight"]);
        relu_bias(h, *P["state.bias"], std::nullopt);
      }
      return out;
    }
  }
  throw std::logic_error("forward_eval: unknown architecture");
}

Tensor logit_rows(const ModelSpec& spec, const Tensor& logits) {
  std::size_t c = spec.classes;
  if (logits.size() % c) throw ShapeError("logit_rows: " + shape_str(logits.shape()) + " is not a multiple of classes");
  return logits.reshaped({logits.size() / c, c});
}

double accuracy(const Tensor& rows, const std::vector<std::size_t>& labels) {
  if (rows.rank() != 2 || rows.dim(0) != labels.size())
    throw ShapeError("accuracy: " + std::to_string(labels.size()) + " labels for logits " + shape_str(rows.shape()));
  if (labels.empty()) return 0.0;
  std::size_t d = rows.dim(1), hit = 0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    const double* x = rows.data() + r * d;
    hit += static_cast<std::size_t>(std::max_element(x, x + d) - x) == labels[r];
  }
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

double mean_loss(const Tensor& rows, const std::vector<std::size_t>& labels, const TargetSpec& target) {
  if (rows.rank() != 2 || rows.dim(0) != labels.size())
    throw ShapeError("mean_loss: " + std::to_string(labels.size()) + " labels for logits " + shape_str(rows.shape()));
  if (labels.empty()) return 0.0;
  std::size_t d = rows.dim(1);
  double total = 0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    const double* x = rows.data() + r * d;
    if (target.kind == TargetKind::Margin) {
      for (std::size_t j = 0; j < d; ++j) {
        double v = j == labels[r] ? std::max(0.0, target.param - x[j]) : std::max(0.0, x[j]);
        total += v * v;
      }
    } else {
      double m = *std::max_element(x, x + d), s = 0;
      for (std::size_t j = 0; j < d; ++j) s += std::exp(x[j] - m);
      total += m + std::log(s) - x[labels[r]];
    }
  }
  return total / static_cast<double>(labels.size());
}

}  // namespace projnet::nn
