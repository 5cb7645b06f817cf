#include "projnet/edge_state.hpp"

#include <cmath>
#include <algorithm>
#include <cstring>

#include "projnet/errors.hpp"

namespace projnet {

Tensor EdgeState::edge_tensor(const Graph& g, EdgeId e) const {
  auto s = edge(g, e);
  return Tensor(g.edge_shape(e), std::vector<double>(s.begin(), s.end()));
}

bool EdgeState::all_finite() const { return count_nonfinite(data_.data(), data_.size()) == 0; }

bool EdgeState::operator==(const EdgeState& o) const {
  return data_.size() == o.data_.size() &&
         (data_.empty() || std::memcmp(data_.data(), o.data_.data(), data_.size() * sizeof(double)) == 0);
}

namespace {

const Transform& transform_of(const Graph& g, NodeId v) { return std::get<TransformNode>(g.node(v).kind).op; }

void collect_edge(const Graph& g, EdgeId e, const double* state, MeanAccumulator& acc) {
  const Edge& ed = g.edge(e);
  const Node& dst = g.node(ed.dst);
  if (dst.is_constraint()) {
    acc.add_span(state + g.edge_offset(e), g.edge_size(e));
    return;
  }
  const Transform& t = transform_of(g, ed.dst);
  auto outs = g.out_edges(ed.dst);
  if (t.kind() == TransformKind::Reshape) {
    for (auto e2 : outs) collect_edge(g, e2, state, acc);
    return;
  }
  if (outs.size() == 1 && g.is_variable(outs[0])) {
    t.adjoint_mean(ed.slot, state + g.edge_offset(outs[0]), nullptr, acc);
    return;
  }
  MeanAccumulator mid(numel(t.out_shape()));
  for (auto e2 : outs) collect_edge(g, e2, state, mid);
  t.adjoint_mean(ed.slot, mid.mean.data(), mid.count.data(), acc);
}

void distribute_edge(const Graph& g, EdgeId e, const double* value, Emitter& em) {
  const Edge& ed = g.edge(e);
  const Node& dst = g.node(ed.dst);
  if (dst.is_constraint()) {
    em.run(g.edge_offset(e), value, g.edge_size(e));
    return;
  }
  const Transform& t = transform_of(g, ed.dst);
  auto outs = g.out_edges(ed.dst);
  if (t.kind() == TransformKind::Reshape) {
    for (auto e2 : outs) distribute_edge(g, e2, value, em);
    return;
  }
  std::vector<double> scratch;
  if (outs.size() == 1 && g.is_variable(outs[0])) {
    std::size_t base = g.edge_offset(outs[0]);
    t.forward_runs(
        ed.slot, value, [&](std::size_t off, const double* v, std::size_t len) { em.run(base + off, v, len); },
        scratch);
    return;
  }
  if (t.arity() != 1) throw ContractViolation("multi-input transform with fan-out");
  std::vector<double> mid(numel(t.out_shape()), 0.0);
  t.forward_runs(
      ed.slot, value,
      [&](std::size_t off, const double* v, std::size_t len) { std::copy(v, v + len, mid.data() + off); },
      scratch);
  for (auto e2 : outs) distribute_edge(g, e2, mid.data(), em);
}

}  // namespace

void gather_outputs(const Graph& g, NodeId v, const double* state, MeanAccumulator& acc) {
  for (auto e : g.out_edges(v)) collect_edge(g, e, state, acc);
}

void scatter_outputs(const Graph& g, NodeId v, const double* value, Emitter& em) {
  for (auto e : g.out_edges(v)) distribute_edge(g, e, value, em);
}

std::vector<Tensor> resolve_through_transforms(const Graph& g, NodeId v, Direction dir, const EdgeState& z) {
  if (g.node(v).is_transform()) throw ContractViolation("resolve_through_transforms: node is a transform");
  std::vector<Tensor> r;
  if (dir == Direction::Incoming) {
    for (auto e : g.in_edges(v)) r.push_back(z.edge_tensor(g, e));
  } else {
    MeanAccumulator acc(numel(g.node(v).shape));
    gather_outputs(g, v, z.data(), acc);
    r.emplace_back(g.node(v).shape, std::move(acc.mean));
  }
  return r;
}

void write_outputs(const Graph& g, NodeId v, const Tensor& value, EdgeState& z) {
  if (value.size() != numel(g.node(v).shape)) throw ShapeError("write_outputs: value shape mismatch");
  Emitter em{EmitMode::Assign, z.data(), z.data(), 0};
  scatter_outputs(g, v, value.data(), em);
}

void init_state(const Graph& g, const ParamTree& params, EdgeState& z) {
  z.resize(g.state_size());
  Emitter em{EmitMode::Assign, z.data(), z.data(), 0};
  std::vector<double> buf;
  for (NodeId v : g.topo_order()) {
    const Node& n = g.node(v);
    const double* out = nullptr;
    if (auto* c = std::get_if<ConstantNode>(&n.kind)) {
      out = c->value.data();
    } else if (auto* p = std::get_if<ParameterNode>(&n.kind)) {
      auto it = params.find(p->name);
      if (it == params.end()) throw std::invalid_argument("init_state: no value for parameter '" + p->name + "'");
      if (it->second.shape() != n.shape)
        throw ShapeError("init_state: parameter '" + p->name + "' has shape " + shape_str(it->second.shape()) +
                         ", graph expects " + shape_str(n.shape));
      out = it->second.data();
    } else if (auto* pr = std::get_if<PrimitiveNode>(&n.kind)) {
      const PrimSpec& spec = pr->spec;
      std::size_t batch = numel(n.shape), fan = spec.fanin;
      auto ins = g.in_edges(v);
      const double* x = z.data() + g.edge_offset(ins[0]);
      const double* y = spec.slots() > 1 ? z.data() + g.edge_offset(ins[1]) : nullptr;
      buf.assign(batch, 0.0);
      double* o = buf.data();
#pragma omp parallel for schedule(static)
      for (std::size_t i = 0; i < batch; ++i) {
        const double* xi = x + i * fan;
        switch (spec.kind) {
          case PrimKind::Dot: {
            const double* yi = y + i * fan;
            double s = 0;
            for (std::size_t j = 0; j < fan; ++j) s += xi[j] * yi[j];
            o[i] = s;
            break;
          }
          default: o[i] = eval_primitive(spec, std::span<const double>(xi, fan)); break;
        }
      }
      out = buf.data();
    } else {
      continue;
    }
    std::size_t cnt = numel(n.shape);
    for (std::size_t i = 0; i < cnt; ++i)
      if (!std::isfinite(out[i]))
        throw InitError("forward pass produced a non-finite value at node " + std::to_string(v) + " (" +
                        n.kind_name() + ")");
    scatter_outputs(g, v, out, em);
  }
}

EdgeState init_state(const Graph& g, const ParamTree& params) {
  EdgeState z(g);
  init_state(g, params, z);
  return z;
}

ParamTree extract_params(const Graph& g, const EdgeState& z) {
  ParamTree r;
  for (NodeId v = 0; v < g.num_nodes(); ++v) {
    const auto* p = std::get_if<ParameterNode>(&g.node(v).kind);
    if (!p) continue;
    MeanAccumulator acc(p->value.size());
    gather_outputs(g, v, z.data(), acc);
    for (std::size_t i = 0; i < acc.mean.size(); ++i)
      if (acc.count[i] == 0) acc.mean[i] = p->value[i];
    r.emplace(p->name, Tensor(g.node(v).shape, std::move(acc.mean)));
  }
  return r;
}

std::vector<Tensor> target_inputs(const Graph& g, const EdgeState& z) {
  std::vector<Tensor> r;
  for (NodeId v = 0; v < g.num_nodes(); ++v)
    if (std::holds_alternative<TargetNode>(g.node(v).kind)) r.push_back(z.edge_tensor(g, g.in_edges(v)[0]));
  return r;
}

}  // namespace projnet
