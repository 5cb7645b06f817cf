#include "projnet/node_projection.hpp"

#include <algorithm>
#include <stdexcept>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace projnet {

namespace {

constexpr std::size_t kChunk = 256;
constexpr std::size_t kParallelWork = 1 << 15;

bool in_parallel() {
#ifdef _OPENMP
  return omp_in_parallel();
#else
  return false;
#endif
}

std::size_t chunks_of(std::size_t n) { return (n + kChunk - 1) / kChunk; }

void project_primitive_node(const Graph& g, NodeId v, const PrimSpec& spec, const ProjectionOptions& opts,
                            Emitter& em) {
  std::size_t batch = numel(g.node(v).shape), n = spec.fanin;
  bool is_dot = spec.kind == PrimKind::Dot;
  auto ins = g.in_edges(v);
  std::size_t o0 = g.edge_offset(ins[0]);
  std::size_t o1 = is_dot ? g.edge_offset(ins[1]) : 0;

  MeanAccumulator acc(batch);
  gather_outputs(g, v, em.in, acc);

  std::vector<double> pout(batch, 0.0);
  std::size_t nch = chunks_of(batch);
  std::vector<double> partial(nch, 0.0);
  bool par = !in_parallel() && batch * n * spec.slots() >= kParallelWork;

#pragma omp parallel for schedule(dynamic) if (par)
  for (std::size_t c = 0; c < nch; ++c) {
    Emitter local{em.mode, em.in, em.out, 0};
    std::vector<double> xo(n * spec.slots());
    std::vector<std::size_t> order(n);
    std::size_t end = std::min(batch, (c + 1) * kChunk);
    for (std::size_t i = c * kChunk; i < end; ++i) {
      const double* x0 = em.in + o0 + i * n;
      if (acc.count[i] == 0) {
        // no consumers: the output is free and the inputs already lie on the graph
        std::copy(x0, x0 + n, xo.begin());
        if (is_dot) std::copy(em.in + o1 + i * n, em.in + o1 + (i + 1) * n, xo.begin() + n);
      } else {
        double w = opts.weighted_consensus ? acc.count[i] : 1.0;
        if (is_dot) {
          std::span<double> xs(xo);
          pout[i] = proj_dot(std::span<const double>(x0, n), std::span<const double>(em.in + o1 + i * n, n),
                             acc.mean[i], xs.first(n), xs.subspan(n, n), opts.scalar, w);
        } else {
          pout[i] = project_primitive(spec, std::span<const double>(x0, n), acc.mean[i], xo, w, opts.scalar, order);
        }
      }
      local.run(o0 + i * n, xo.data(), n);
      if (is_dot) local.run(o1 + i * n, xo.data() + n, n);
    }
    partial[c] = local.residual;
  }
  for (double r : partial) em.residual += r;
  scatter_outputs(g, v, pout.data(), em);
}

void project_target_node(const Graph& g, NodeId v, const TargetNode& t, const ProjectionOptions& opts,
                         Emitter& em) {
  EdgeId e = g.in_edges(v)[0];
  const Shape& s = g.edge_shape(e);
  std::size_t rows = s[0], d = s[1], base = g.edge_offset(e);
  std::size_t nch = chunks_of(rows);
  std::vector<double> partial(nch, 0.0);
  bool par = !in_parallel() && rows * d >= kParallelWork;

#pragma omp parallel for schedule(dynamic) if (par)
  for (std::size_t c = 0; c < nch; ++c) {
    Emitter local{em.mode, em.in, em.out, 0};
    std::vector<double> p(d);
    std::size_t end = std::min(rows, (c + 1) * kChunk);
    for (std::size_t r = c * kChunk; r < end; ++r) {
      const double* x0 = em.in + base + r * d;
      if (t.spec.kind == TargetKind::Margin) {
        for (std::size_t j = 0; j < d; ++j) p[j] = proj_margin(x0[j], j == t.labels[r] ? 1.0 : 0.0, t.spec.param);
      } else {
        prox_cross_entropy(std::span<const double>(x0, d), t.labels[r], t.spec.param, p, opts.scalar);
      }
      local.run(base + r * d, p.data(), d);
    }
    partial[c] = local.residual;
  }
  for (double r : partial) em.residual += r;
}

std::size_t work_of(const Graph& g, NodeId v) {
  const Node& n = g.node(v);
  if (auto* p = std::get_if<PrimitiveNode>(&n.kind)) return numel(n.shape) * p->spec.fanin * p->spec.slots();
  if (std::holds_alternative<TargetNode>(n.kind)) return numel(n.shape);
  return 0;  // sources stream their copies serially either way
}

}  // namespace

void project_node(const Graph& g, NodeId v, const ProjectionOptions& opts, Emitter& em) {
  const Node& n = g.node(v);
  if (auto* c = std::get_if<ConstantNode>(&n.kind)) {
    scatter_outputs(g, v, c->value.data(), em);
  } else if (std::holds_alternative<ParameterNode>(n.kind)) {
    MeanAccumulator acc(numel(n.shape));
    gather_outputs(g, v, em.in, acc);
    scatter_outputs(g, v, acc.mean.data(), em);
  } else if (auto* p = std::get_if<PrimitiveNode>(&n.kind)) {
    project_primitive_node(g, v, p->spec, opts, em);
  } else if (auto* t = std::get_if<TargetNode>(&n.kind)) {
    project_target_node(g, v, *t, opts, em);
  } else {
    throw std::invalid_argument("project_node: node " + std::to_string(v) + " is a transform");
  }
}

void project_node(const Graph& g, EdgeState& z, NodeId v, const ProjectionOptions& opts) {
  Emitter em{EmitMode::Assign, z.data(), z.data(), 0};
  project_node(g, v, opts, em);
}

double project_nodes(const Graph& g, std::span<const NodeId> nodes, const ProjectionOptions& opts, EmitMode mode,
                     const double* in, double* out) {
  if (mode == EmitMode::Residual) out = const_cast<double*>(in);
  std::vector<double> res(nodes.size(), 0.0);
  std::vector<std::size_t> small, big;
  for (std::size_t i = 0; i < nodes.size(); ++i) (work_of(g, nodes[i]) >= kParallelWork ? big : small).push_back(i);

#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t k = 0; k < small.size(); ++k) {
    Emitter em{mode, in, out, 0};
    project_node(g, nodes[small[k]], opts, em);
    res[small[k]] = em.residual;
  }
  for (std::size_t i : big) {
    Emitter em{mode, in, out, 0};
    project_node(g, nodes[i], opts, em);
    res[i] = em.residual;
  }
  double total = 0;
  for (double r : res) total += r;
  return total;
}

double node_residual(const Graph& g, const EdgeState& z, NodeId v, const ProjectionOptions& opts) {
  Emitter em{EmitMode::Residual, z.data(), const_cast<double*>(z.data()), 0};
  project_node(g, v, opts, em);
  return em.residual;
}

}  // namespace projnet
