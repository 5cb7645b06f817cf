#include <algorithm>
#include <deque>
#include <stdexcept>

#include "projnet/graph.hpp"

namespace projnet {

namespace {

// Edges on every transform path from u into v, each path listed from u's side.
void paths_into(const Graph& g, NodeId u, EdgeId e, std::vector<EdgeId>& prefix,
                std::vector<std::vector<EdgeId>>& out) {
  const Edge& ed = g.edge(e);
  prefix.push_back(e);
  if (ed.src == u) {
    out.emplace_back(prefix.rbegin(), prefix.rend());
  } else if (g.node(ed.src).is_transform()) {
    for (auto e2 : g.in_edges(ed.src)) paths_into(g, u, e2, prefix, out);
  }
  prefix.pop_back();
}

std::vector<NodeId> edge_upstream(const Graph& g, EdgeId e) {
  NodeId s = g.edge(e).src;
  if (g.node(s).is_constraint()) return {s};
  return g.upstream_constraints(s);
}

std::vector<NodeId> edge_downstream(const Graph& g, EdgeId e) {
  NodeId d = g.edge(e).dst;
  if (g.node(d).is_constraint()) return {d};
  return g.downstream_constraints(d);
}

}  // namespace

bool is_bipartite(const Graph& g) {
  if (!g.partitioned()) return false;
  for (NodeId v : g.constraint_nodes()) {
    if (g.part(v) == Part::None) return false;
    for (NodeId u : g.upstream_constraints(v))
      if (g.part(u) == g.part(v)) return false;
  }
  return true;
}

Graph bipartition(const Graph& g) {
  std::size_t nv = g.num_nodes();
  std::vector<std::vector<NodeId>> adj(nv);
  for (NodeId v : g.constraint_nodes()) adj[v] = g.neighbors(v);

  std::vector<Part> color(nv, Part::None);
  std::vector<std::pair<NodeId, NodeId>> conflicts;
  std::deque<NodeId> queue;
  auto bfs = [&]() {
    while (!queue.empty()) {
      NodeId u = queue.front();
      queue.pop_front();
      for (NodeId w : adj[u]) {
        if (color[w] == Part::None) {
          color[w] = other(color[u]);
          queue.push_back(w);
        } else if (color[w] == color[u] && u < w) {
          conflicts.emplace_back(u, w);
        }
      }
    }
  };
  for (NodeId v = 0; v < nv; ++v)
    if (std::holds_alternative<TargetNode>(g.node(v).kind)) {
      color[v] = Part::B;
      queue.push_back(v);
    }
  bfs();
  for (NodeId v = 0; v < nv; ++v)
    if (g.node(v).is_constraint() && color[v] == Part::None) {
      color[v] = Part::A;
      queue.push_back(v);
      bfs();
    }
  std::sort(conflicts.begin(), conflicts.end());
  conflicts.erase(std::unique(conflicts.begin(), conflicts.end()), conflicts.end());

  Graph r;
  r.nodes_ = g.nodes_;
  r.edges_ = g.edges_;
  r.inserted_ = g.inserted_;
  std::vector<bool> split(g.num_edges(), false);

  for (auto [a, b] : conflicts) {
    auto up = g.upstream_constraints(b);
    auto [u, v] = std::binary_search(up.begin(), up.end(), a) ? std::pair{a, b} : std::pair{b, a};
    Part c = color[u];
    std::vector<std::vector<EdgeId>> paths;
    std::vector<EdgeId> prefix;
    for (auto e : g.in_edges(v)) paths_into(g, u, e, prefix, paths);

    for (const auto& path : paths) {
      if (std::any_of(path.begin(), path.end(), [&](EdgeId e) { return split[e]; })) continue;
      bool done = false;
      for (EdgeId e : path) {
        auto same = [&](NodeId w) { return color[w] == c; };
        auto ups = edge_upstream(g, e), downs = edge_downstream(g, e);
        if (!std::all_of(ups.begin(), ups.end(), same) || !std::all_of(downs.begin(), downs.end(), same)) continue;
        const Edge old = g.edge(e);
        r.nodes_.push_back(Node{PrimitiveNode{PrimSpec::identity()}, g.node(old.src).shape, "inserted"});
        NodeId id = r.nodes_.size() - 1;
        color.push_back(other(c));
        r.edges_[e] = Edge{old.src, id, 0};
        r.edges_.push_back(Edge{id, old.dst, old.slot});
        split[e] = true;
        ++r.inserted_;
        done = true;
        break;
      }
      if (!done) throw std::logic_error("bipartition: no edge on the path can take an identity node");
    }
  }

  r.part_ = color;
  r.finalize();
  if (!is_bipartite(r)) throw std::logic_error("bipartition: repaired graph is still not bipartite");
  return r;
}

}  // namespace projnet
