#pragma once

#include <span>

#include "projnet/edge_state.hpp"
#include "projnet/graph.hpp"
#include "projnet/projops.hpp"

namespace projnet {

struct ProjectionOptions {
  bool weighted_consensus = false;
  ScalarSolveConfig scalar;
};

// Projects the edges incident to constraint node v. Values are read from
// em.in and combined into em.out according to em.mode; every incident
// position is emitted exactly once.
void project_node(const Graph& g, NodeId v, const ProjectionOptions& opts, Emitter& em);

// In-place projection of one node.
void project_node(const Graph& g, EdgeState& z, NodeId v, const ProjectionOptions& opts = {});

// Applies a set of nodes with pairwise disjoint edges and returns the summed
// emitter tally: squared distance in Residual mode, otherwise the number of
// non-finite values written. Nodes run concurrently and the result does not
// depend on their order.
double project_nodes(const Graph& g, std::span<const NodeId> nodes, const ProjectionOptions& opts, EmitMode mode,
                     const double* in, double* out);

// Squared distance from z to node v's constraint set.
double node_residual(const Graph& g, const EdgeState& z, NodeId v, const ProjectionOptions& opts = {});

}  // namespace projnet
