#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <vector>

#include "projnet/graph.hpp"

namespace projnet {

// The state vector z: one value per element of every variable edge.
class EdgeState {
 public:
  EdgeState() = default;
  explicit EdgeState(const Graph& g) : data_(g.state_size(), 0.0) {}
  explicit EdgeState(std::size_t n) : data_(n, 0.0) {}

  std::size_t size() const { return data_.size(); }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  void resize(std::size_t n) { data_.resize(n); }

  std::span<double> edge(const Graph& g, EdgeId e) { return {data_.data() + g.edge_offset(e), g.edge_size(e)}; }
  std::span<const double> edge(const Graph& g, EdgeId e) const {
    return {data_.data() + g.edge_offset(e), g.edge_size(e)};
  }
  Tensor edge_tensor(const Graph& g, EdgeId e) const;

  bool all_finite() const;
  bool operator==(const EdgeState& o) const;

 private:
  std::vector<double> data_;
};

// How a projected value p is combined with the state at its position:
//   Assign    out = p
//   Reflect   out = 2p - in
//   Average   out = (out + 2p - in) / 2
//   Residual  accumulate (p - in)^2, write nothing
// Assign and Average count non-finite values written into `residual` instead;
// Reflect only fills scratch and counts nothing.
enum class EmitMode { Assign, Reflect, Average, Residual };

// An all-ones exponent carries into the sign bit when one is added to it.
inline std::size_t count_nonfinite(const double* v, std::size_t len) {
  constexpr std::uint64_t exp = 0x7ff0000000000000ULL, one = 0x0010000000000000ULL;
  std::uint64_t acc = 0;
  for (std::size_t i = 0; i < len; ++i) {
    std::uint64_t b;
    std::memcpy(&b, v + i, 8);
    acc |= (b & exp) + one;
  }
  if (!(acc >> 63)) return 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < len; ++i) n += !std::isfinite(v[i]);
  return n;
}

struct Emitter {
  EmitMode mode = EmitMode::Assign;
  const double* in = nullptr;
  double* out = nullptr;
  double residual = 0;

  void run(std::size_t offset, const double* p, std::size_t len) {
    const double* a = in + offset;
    double* b = out + offset;
    switch (mode) {
      case EmitMode::Assign:
        for (std::size_t i = 0; i < len; ++i) b[i] = p[i];
        break;
      case EmitMode::Reflect:
        for (std::size_t i = 0; i < len; ++i) b[i] = 2 * p[i] - a[i];
        break;
      case EmitMode::Average:
        for (std::size_t i = 0; i < len; ++i) b[i] = 0.5 * (b[i] + 2 * p[i] - a[i]);
        break;
      case EmitMode::Residual: {
        double r = 0;
        for (std::size_t i = 0; i < len; ++i) {
          double d = p[i] - a[i];
          r += d * d;
        }
        residual += r;
        return;
      }
    }
    if (mode != EmitMode::Reflect) residual += static_cast<double>(count_nonfinite(b, len));
  }
};

// Mean and count of all outgoing copies of v's output, read from `state`
// through the transform chains below v.
void gather_outputs(const Graph& g, NodeId v, const double* state, MeanAccumulator& acc);

// Sends v's output value (v's shape) to every outgoing copy.
void scatter_outputs(const Graph& g, NodeId v, const double* value, Emitter& em);

enum class Direction { Incoming, Outgoing };

// Values adjacent to a constraint node with transforms resolved.
// Incoming: one tensor per input slot. Outgoing: the mean over all copies,
// in the node's own shape.
std::vector<Tensor> resolve_through_transforms(const Graph& g, NodeId v, Direction dir, const EdgeState& z);

// Writes one value for v's output to all of its copies.
void write_outputs(const Graph& g, NodeId v, const Tensor& value, EdgeState& z);

// Forward pass: every edge gets the value a standard evaluation produces.
// Throws InitError on a non-finite value.
EdgeState init_state(const Graph& g, const ParamTree& params);
void init_state(const Graph& g, const ParamTree& params, EdgeState& z);

// Consensus mean over each parameter's copies.
ParamTree extract_params(const Graph& g, const EdgeState& z);

// Logits arriving at each target node, in node order.
std::vector<Tensor> target_inputs(const Graph& g, const EdgeState& z);

}  // namespace projnet
