#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "projnet/projops.hpp"
#include "projnet/tensor.hpp"
#include "projnet/transforms.hpp"

namespace projnet {

using NodeId = std::size_t;
using EdgeId = std::size_t;
using ParamTree = std::map<std::string, Tensor>;

struct ConstantNode {
  Tensor value;
};
struct ParameterNode {
  std::string name;
  Tensor value;  // value at trace time; kept for elements without any use site
};
struct PrimitiveNode {
  PrimSpec spec;
};
struct TransformNode {
  Transform op;
};
// Consumes logits of shape (rows, classes); one class label per row.
struct TargetNode {
  TargetSpec spec;
  std::vector<std::size_t> labels;
};

using NodeKind = std::variant<ConstantNode, ParameterNode, PrimitiveNode, TransformNode, TargetNode>;

enum class Part : std::uint8_t { None, A, B };
inline Part other(Part p) { return p == Part::A ? Part::B : Part::A; }
const char* to_string(Part p);

struct Node {
  NodeKind kind;
  Shape shape;  // output shape; for targets the logit shape
  std::string label;

  bool is_transform() const { return std::holds_alternative<TransformNode>(kind); }
  bool is_constraint() const { return !is_transform(); }
  const char* kind_name() const;
};

struct Edge {
  NodeId src;
  NodeId dst;
  std::size_t slot;
};

class GraphBuilder;

// Immutable computation graph. Edge variables live on "variable" edges,
// those entering a constraint node; edges into transforms carry no state of
// their own and are views of the variables downstream.
class Graph {
 public:
  std::size_t num_nodes() const { return nodes_.size(); }
  std::size_t num_edges() const { return edges_.size(); }
  const Node& node(NodeId v) const { return nodes_.at(v); }
  const Edge& edge(EdgeId e) const { return edges_.at(e); }
  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }

  std::span<const EdgeId> out_edges(NodeId v) const { return out_[v]; }
  // ordered by slot
  std::span<const EdgeId> in_edges(NodeId v) const { return in_[v]; }
  const std::vector<NodeId>& topo_order() const { return topo_; }

  bool is_variable(EdgeId e) const { return nodes_[edges_[e].dst].is_constraint(); }
  const Shape& edge_shape(EdgeId e) const { return nodes_[edges_[e].src].shape; }
  std::size_t edge_offset(EdgeId e) const { return offset_[e]; }
  std::size_t edge_size(EdgeId e) const { return is_variable(e) ? numel(edge_shape(e)) : 0; }
  std::size_t state_size() const { return state_size_; }

  bool partitioned() const { return !part_.empty(); }
  Part part(NodeId v) const { return part_.empty() ? Part::None : part_[v]; }
  std::vector<NodeId> nodes_in(Part p) const;
  std::vector<NodeId> constraint_nodes() const;

  // Constraint nodes reachable through transform chains.
  std::vector<NodeId> upstream_constraints(NodeId v) const;
  std::vector<NodeId> downstream_constraints(NodeId v) const;
  std::vector<NodeId> neighbors(NodeId v) const;

  // Number of outgoing copies of each element of v's output.
  std::vector<double> copy_counts(NodeId v) const;

  std::size_t count_primitives(PrimKind k) const;
  std::size_t count_transforms(TransformKind k) const;
  std::size_t count_identity_insertions() const { return inserted_; }

  // One record per line: nodes (id, kind, shape) then edges (src, dst, slot).
  std::string dump() const;

 private:
  friend class GraphBuilder;
  friend Graph bipartition(const Graph& g);

  void finalize();
  void validate_node(NodeId v) const;

  std::vector<Node> nodes_;
  std::vector<Edge> edges_;
  std::vector<Part> part_;
  std::size_t inserted_ = 0;

  std::vector<std::vector<EdgeId>> out_, in_;
  std::vector<NodeId> topo_;
  std::vector<std::size_t> offset_;
  std::size_t state_size_ = 0;
};

// Handle to a node output while building.
struct Value {
  NodeId node = 0;
  Shape shape;
};

class GraphBuilder {
 public:
  Value constant(Tensor value, std::string label = "");
  // A parameter may be added once; later uses share the node via the Value.
  Value parameter(const std::string& name, Tensor value);

  Value identity(const Value& x);
  // reduce the last axis
  Value sum(const Value& x);
  Value sum_relu(const Value& x);
  Value max(const Value& x);
  Value dot(const Value& x, const Value& y);
  Value quantize(const Value& x, std::size_t k, double alpha);
  Value primitive(const PrimSpec& spec, const std::vector<Value>& inputs);

  Value reshape(const Value& x, Shape s);
  Value transpose(const Value& x, std::vector<std::size_t> perm);
  Value repeat(const Value& x, std::size_t axis, std::size_t k);
  Value index(const Value& x, std::size_t axis, std::vector<std::size_t> ids);
  Value concat(const std::vector<Value>& xs, std::size_t axis);
  Value pad(const Value& x, std::vector<std::pair<std::size_t, std::size_t>> pads);
  Value conv_patch(const Value& x, std::size_t kh, std::size_t kw);

  NodeId target(const Value& logits, const TargetSpec& spec, std::vector<std::size_t> labels);

  std::size_t num_nodes() const { return nodes_.size(); }
  Graph build() &&;

 private:
  NodeId add(NodeKind kind, Shape shape, std::string label);
  void connect(NodeId src, NodeId dst, std::size_t slot) { edges_.push_back({src, dst, slot}); }
  Value transform(Transform t, const std::vector<Value>& inputs);

  std::vector<Node> nodes_;
  std::vector<Edge> edges_;
  std::set<std::string> names_;
};

// Two-colors the constraint nodes (targets get B), inserting identity
// primitives on edges whose endpoints would otherwise share a color.
Graph bipartition(const Graph& g);

// True when no two adjacent constraint nodes share a label.
bool is_bipartite(const Graph& g);

}  // namespace projnet
