#include "projnet/graph.hpp"

#include <algorithm>
#include <queue>
#include <sstream>

#include "projnet/errors.hpp"

namespace projnet {

const char* to_string(Part p) {
  switch (p) {
    case Part::A: return "A";
    case Part::B: return "B";
    default: return "-";
  }
}

const char* Node::kind_name() const {
  switch (kind.index()) {
    case 0: return "constant";
    case 1: return "parameter";
    case 2: return "primitive";
    case 3: return "transform";
    default: return "target";
  }
}

void Graph::validate_node(NodeId v) const {
  const Node& n = nodes_[v];
  auto fail = [&](const std::string& what) {
    throw ShapeError("node " + std::to_string(v) + " (" + n.kind_name() + (n.label.empty() ? "" : " " + n.label) +
                     "): " + what);
  };
  const auto& ins = in_[v];
  for (std::size_t s = 0; s < ins.size(); ++s)
    if (edges_[ins[s]].slot != s) fail("input slots are not 0..k-1");

  if (std::holds_alternative<ConstantNode>(n.kind) || std::holds_alternative<ParameterNode>(n.kind)) {
    if (!ins.empty()) fail("sources take no inputs");
  } else if (auto* p = std::get_if<PrimitiveNode>(&n.kind)) {
    p->spec.validate();
    if (ins.size() != p->spec.slots()) fail("expected " + std::to_string(p->spec.slots()) + " inputs");
    Shape want = n.shape;
    if (p->spec.kind != PrimKind::Identity && p->spec.kind != PrimKind::Quantize) want.push_back(p->spec.fanin);
    for (auto e : ins)
      if (edge_shape(e) != want)
        fail(p->spec.describe() + " input " + shape_str(edge_shape(e)) + ", expected " + shape_str(want));
  } else if (auto* t = std::get_if<TransformNode>(&n.kind)) {
    if (ins.size() != t->op.arity()) fail("expected " + std::to_string(t->op.arity()) + " inputs");
    for (std::size_t s = 0; s < ins.size(); ++s)
      if (edge_shape(ins[s]) != t->op.in_shapes()[s]) fail(t->op.describe() + ": input shape mismatch");
    if (t->op.arity() > 1) {
      const auto& outs = out_[v];
      if (outs.size() != 1 || nodes_[edges_[outs[0]].dst].is_transform())
        fail("a multi-input concat must feed exactly one constraint node");
    }
  } else if (auto* tg = std::get_if<TargetNode>(&n.kind)) {
    tg->spec.validate();
    if (ins.size() != 1) fail("targets take one input");
    if (!out_[v].empty()) fail("targets have no outputs");
    const Shape& s = edge_shape(ins[0]);
    if (s.size() != 2 || s[0] != tg->labels.size())
      fail("logits " + shape_str(s) + " do not match " + std::to_string(tg->labels.size()) + " labels");
    for (auto l : tg->labels)
      if (l >= s[1]) fail("label " + std::to_string(l) + " out of range for " + std::to_string(s[1]) + " classes");
  }
}

void Graph::finalize() {
  std::size_t nv = nodes_.size();
  out_.assign(nv, {});
  in_.assign(nv, {});
  for (EdgeId e = 0; e < edges_.size(); ++e) {
    const Edge& ed = edges_[e];
    if (ed.src >= nv || ed.dst >= nv) throw std::out_of_range("edge endpoint out of range");
    out_[ed.src].push_back(e);
    in_[ed.dst].push_back(e);
  }
  for (auto& ins : in_)
    std::sort(ins.begin(), ins.end(), [&](EdgeId a, EdgeId b) { return edges_[a].slot < edges_[b].slot; });

  // Kahn with a min-heap keeps the order deterministic
  std::vector<std::size_t> indeg(nv, 0);
  for (const auto& ed : edges_) ++indeg[ed.dst];
  std::priority_queue<NodeId, std::vector<NodeId>, std::greater<>> ready;
  for (NodeId v = 0; v < nv; ++v)
    if (indeg[v] == 0) ready.push(v);
  topo_.clear();
  while (!ready.empty()) {
    NodeId v = ready.top();
    ready.pop();
    topo_.push_back(v);
    for (auto e : out_[v])
      if (--indeg[edges_[e].dst] == 0) ready.push(edges_[e].dst);
  }
  if (topo_.size() != nv) throw std::logic_error("graph has a cycle");

  for (NodeId v = 0; v < nv; ++v) validate_node(v);

  offset_.assign(edges_.size(), 0);
  state_size_ = 0;
  for (EdgeId e = 0; e < edges_.size(); ++e) {
    offset_[e] = state_size_;
    state_size_ += edge_size(e);
  }
}

std::vector<NodeId> Graph::nodes_in(Part p) const {
  std::vector<NodeId> r;
  for (NodeId v = 0; v < nodes_.size(); ++v)
    if (nodes_[v].is_constraint() && part(v) == p) r.push_back(v);
  return r;
}

std::vector<NodeId> Graph::constraint_nodes() const {
  std::vector<NodeId> r;
  for (NodeId v = 0; v < nodes_.size(); ++v)
    if (nodes_[v].is_constraint()) r.push_back(v);
  return r;
}

std::vector<NodeId> Graph::upstream_constraints(NodeId v) const {
  std::vector<NodeId> r, stack;
  for (auto e : in_[v]) stack.push_back(edges_[e].src);
  while (!stack.empty()) {
    NodeId u = stack.back();
    stack.pop_back();
    if (nodes_[u].is_constraint())
      r.push_back(u);
    else
      for (auto e : in_[u]) stack.push_back(edges_[e].src);
  }
  std::sort(r.begin(), r.end());
  r.erase(std::unique(r.begin(), r.end()), r.end());
  return r;
}

std::vector<NodeId> Graph::downstream_constraints(NodeId v) const {
  std::vector<NodeId> r, stack;
  for (auto e : out_[v]) stack.push_back(edges_[e].dst);
  while (!stack.empty()) {
    NodeId u = stack.back();
    stack.pop_back();
    if (nodes_[u].is_constraint())
      r.push_back(u);
    else
      for (auto e : out_[u]) stack.push_back(edges_[e].dst);
  }
  std::sort(r.begin(), r.end());
  r.erase(std::unique(r.begin(), r.end()), r.end());
  return r;
}

std::vector<NodeId> Graph::neighbors(NodeId v) const {
  auto r = upstream_constraints(v);
  auto d = downstream_constraints(v);
  r.insert(r.end(), d.begin(), d.end());
  std::sort(r.begin(), r.end());
  r.erase(std::unique(r.begin(), r.end()), r.end());
  return r;
}

namespace {

// counts of copies per element of edge e's source, merged into `count`
void edge_counts(const Graph& g, EdgeId e, std::vector<double>& count) {
  const Node& dst = g.node(g.edge(e).dst);
  if (dst.is_constraint()) {
    for (auto& c : count) c += 1.0;
    return;
  }
  const Transform& t = std::get<TransformNode>(dst.kind).op;
  std::vector<double> mid(numel(t.out_shape()), 0.0);
  for (auto e2 : g.out_edges(g.edge(e).dst)) edge_counts(g, e2, mid);
  t.adjoint_count(g.edge(e).slot, mid.data(), count);
}

}  // namespace

std::vector<double> Graph::copy_counts(NodeId v) const {
  std::vector<double> c(numel(nodes_.at(v).shape), 0.0);
  for (auto e : out_[v]) edge_counts(*this, e, c);
  return c;
}

std::size_t Graph::count_primitives(PrimKind k) const {
  std::size_t c = 0;
  for (const auto& n : nodes_)
    if (auto* p = std::get_if<PrimitiveNode>(&n.kind); p && p->spec.kind == k) ++c;
  return c;
}

std::size_t Graph::count_transforms(TransformKind k) const {
  std::size_t c = 0;
  for (const auto& n : nodes_)
    if (auto* t = std::get_if<TransformNode>(&n.kind); t && t->op.kind() == k) ++c;
  return c;
}

std::string Graph::dump() const {
  std::ostringstream os;
  for (NodeId v = 0; v < nodes_.size(); ++v) {
    const Node& n = nodes_[v];
    os << "node " << v << ' ' << n.kind_name() << ' ';
    std::visit(
        [&](const auto& k) {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, ParameterNode>)
            os << k.name;
          else if constexpr (std::is_same_v<K, PrimitiveNode>)
            os << k.spec.describe();
          else if constexpr (std::is_same_v<K, TransformNode>)
            os << k.op.describe();
          else if constexpr (std::is_same_v<K, TargetNode>)
            os << k.spec.describe();
          else
            os << (n.label.empty() ? "input" : n.label);
        },
        n.kind);
    os << ' ' << shape_str(n.shape);
    if (partitioned() && n.is_constraint()) os << ' ' << to_string(part(v));
    os << '\n';
  }
  for (EdgeId e = 0; e < edges_.size(); ++e)
    os << "edge " << e << ' ' << edges_[e].src << ' ' << edges_[e].dst << ' ' << edges_[e].slot << '\n';
  return os.str();
}

// ---------------------------------------------------------------- builder

NodeId GraphBuilder::add(NodeKind kind, Shape shape, std::string label) {
  nodes_.push_back(Node{std::move(kind), std::move(shape), std::move(label)});
  return nodes_.size() - 1;
}

Value GraphBuilder::constant(Tensor value, std::string label) {
  Shape s = value.shape();
  return {add(ConstantNode{std::move(value)}, s, std::move(label)), s};
}

Value GraphBuilder::parameter(const std::string& name, Tensor value) {
  if (!names_.insert(name).second) throw std::invalid_argument("parameter '" + name + "' added twice");
  Shape s = value.shape();
  return {add(ParameterNode{name, std::move(value)}, s, name), s};
}

Value GraphBuilder::primitive(const PrimSpec& spec, const std::vector<Value>& inputs) {
  spec.validate();
  auto fail = [&](const std::string& what) { throw ShapeError(spec.describe() + ": " + what); };
  if (inputs.size() != spec.slots()) fail("wrong number of inputs");
  Shape out = inputs[0].shape;
  if (spec.kind != PrimKind::Identity && spec.kind != PrimKind::Quantize) {
    if (out.empty() || out.back() != spec.fanin)
      fail("last axis of " + shape_str(out) + " must be " + std::to_string(spec.fanin));
    out.pop_back();
  }
  for (const auto& v : inputs)
    if (v.shape != inputs[0].shape)
      fail("operand shapes " + shape_str(inputs[0].shape) + " and " + shape_str(v.shape) + " differ");
  NodeId id = add(PrimitiveNode{spec}, out, "");
  for (std::size_t s = 0; s < inputs.size(); ++s) connect(inputs[s].node, id, s);
  return {id, out};
}

Value GraphBuilder::identity(const Value& x) { return primitive(PrimSpec::identity(), {x}); }

Value GraphBuilder::sum(const Value& x) {
  if (x.shape.empty()) throw ShapeError("sum: scalar input");
  return primitive(PrimSpec::sum(x.shape.back()), {x});
}

Value GraphBuilder::sum_relu(const Value& x) {
  if (x.shape.empty()) throw ShapeError("sum_relu: scalar input");
  return primitive(PrimSpec::sum_relu(x.shape.back()), {x});
}

Value GraphBuilder::max(const Value& x) {
  if (x.shape.empty()) throw ShapeError("max: scalar input");
  return primitive(PrimSpec::max(x.shape.back()), {x});
}

Value GraphBuilder::dot(const Value& x, const Value& y) {
  if (x.shape.empty()) throw ShapeError("dot: scalar input");
  return primitive(PrimSpec::dot(x.shape.back()), {x, y});
}

Value GraphBuilder::quantize(const Value& x, std::size_t k, double alpha) {
  return primitive(PrimSpec::quantize(k, alpha), {x});
}

Value GraphBuilder::transform(Transform t, const std::vector<Value>& inputs) {
  Shape out = t.out_shape();
  NodeId id = add(TransformNode{std::move(t)}, out, "");
  for (std::size_t s = 0; s < inputs.size(); ++s) connect(inputs[s].node, id, s);
  return {id, out};
}

Value GraphBuilder::reshape(const Value& x, Shape s) { return transform(Transform::reshape(x.shape, std::move(s)), {x}); }

Value GraphBuilder::transpose(const Value& x, std::vector<std::size_t> perm) {
  return transform(Transform::transpose(x.shape, std::move(perm)), {x});
}

Value GraphBuilder::repeat(const Value& x, std::size_t axis, std::size_t k) {
  return transform(Transform::repeat(x.shape, axis, k), {x});
}

Value GraphBuilder::index(const Value& x, std::size_t axis, std::vector<std::size_t> ids) {
  return transform(Transform::index(x.shape, axis, std::move(ids)), {x});
}

Value GraphBuilder::concat(const std::vector<Value>& xs, std::size_t axis) {
  std::vector<Shape> shapes;
  for (const auto& x : xs) shapes.push_back(x.shape);
  return transform(Transform::concat(std::move(shapes), axis), xs);
}

Value GraphBuilder::pad(const Value& x, std::vector<std::pair<std::size_t, std::size_t>> pads) {
  return transform(Transform::pad(x.shape, std::move(pads)), {x});
}

Value GraphBuilder::conv_patch(const Value& x, std::size_t kh, std::size_t kw) {
  return transform(Transform::conv_patch(x.shape, kh, kw), {x});
}

NodeId GraphBuilder::target(const Value& logits, const TargetSpec& spec, std::vector<std::size_t> labels) {
  spec.validate();
  if (logits.shape.size() != 2 || logits.shape[0] != labels.size())
    throw ShapeError("target: logits " + shape_str(logits.shape) + " vs " + std::to_string(labels.size()) +
                     " labels");
  for (auto l : labels)
    if (l >= logits.shape[1]) throw std::out_of_range("target: label " + std::to_string(l) + " out of range");
  NodeId id = add(TargetNode{spec, std::move(labels)}, logits.shape, "");
  connect(logits.node, id, 0);
  return id;
}

Graph GraphBuilder::build() && {
  Graph g;
  g.nodes_ = std::move(nodes_);
  g.edges_ = std::move(edges_);
  g.finalize();
  return g;
}

}  // namespace projnet
