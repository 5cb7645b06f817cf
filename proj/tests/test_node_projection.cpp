#include <doctest.h>

#include <algorithm>
#include <random>

#include "oracles.hpp"
#include "projnet/edge_state.hpp"
#include "projnet/nn.hpp"
#include "projnet/node_projection.hpp"

using namespace projnet;

namespace {

EdgeId edge_into(const Graph& g, NodeId dst) {
  for (EdgeId e = 0; e < g.num_edges(); ++e)
    if (g.edge(e).dst == dst) return e;
  throw std::logic_error("no edge");
}

}  // namespace

TEST_CASE("parameter node projects to the mean of its copies") {
  GraphBuilder b;
  auto p = b.parameter("p", Tensor::scalar(0));
  for (int i = 0; i < 3; ++i) b.identity(p);
  Graph g = std::move(b).build();
  EdgeState z(g);
  double v = 1;
  for (EdgeId e : g.out_edges(p.node)) z.edge(g, e)[0] = v++;
  CHECK(node_residual(g, z, p.node) == doctest::Approx(2.0));
  project_node(g, z, p.node);
  for (EdgeId e : g.out_edges(p.node)) CHECK(z.edge(g, e)[0] == 2.0);
}

TEST_CASE("constant node restores its value") {
  GraphBuilder b;
  auto c = b.constant(Tensor::scalar(7));
  b.identity(c);
  b.identity(c);
  Graph g = std::move(b).build();
  EdgeState z(g);
  z.edge(g, g.out_edges(c.node)[0])[0] = 0;
  z.edge(g, g.out_edges(c.node)[1])[0] = 1;
  project_node(g, z, c.node);
  for (EdgeId e : g.out_edges(c.node)) CHECK(z.edge(g, e)[0] == 7.0);

  z.edge(g, g.out_edges(c.node)[0])[0] = 9;
  CHECK(node_residual(g, z, c.node) == 4.0);
}

TEST_CASE("sum_relu node matches the scalar projection") {
  GraphBuilder b;
  auto x = b.constant(Tensor::vector({0, 0}));
  auto r = b.sum_relu(x);
  auto out = b.identity(r);
  Graph g = std::move(b).build();
  EdgeState z(g);
  EdgeId in = edge_into(g, r.node), o = edge_into(g, out.node);
  z.edge(g, in)[0] = -1;
  z.edge(g, in)[1] = -1;
  z.edge(g, o)[0] = 1;
  project_node(g, z, r.node);
  CHECK(z.edge(g, in)[0] == -1.0);
  CHECK(z.edge(g, in)[1] == -1.0);
  CHECK(z.edge(g, o)[0] == 0.0);
}

TEST_CASE("target node with margin satisfied is a fixed point") {
  GraphBuilder b;
  auto x = b.constant(Tensor({2, 3}, {2, -1, 0, -0.5, 1.5, -3}));
  NodeId t = b.target(b.identity(x), TargetSpec::margin(1), {0, 1});
  Graph g = std::move(b).build();
  EdgeState z = init_state(g, {});
  EdgeState before = z;
  CHECK(node_residual(g, z, t) == 0.0);
  project_node(g, z, t);
  CHECK(z == before);
}

TEST_CASE("node projections in one partition commute bitwise") {
  auto spec = nn::ModelSpec::mlp(3, 6, 2, 3);
  std::mt19937_64 rng(21);
  Tensor x = oracle::random_tensor({5, 3}, rng);
  Graph g = bipartition(nn::trace(spec, nn::init_params(spec, 1), x, {0, 1, 2, 0, 1}, TargetSpec::cross_entropy(5)));
  EdgeState z0 = init_state(g, nn::init_params(spec, 1));
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (auto& v : z0.values()) v += u(rng);

  for (Part part : {Part::A, Part::B}) {
    auto nodes = g.nodes_in(part);
    EdgeState ref = z0;
    for (NodeId v : nodes) project_node(g, ref, v);
    for (int trial = 0; trial < 4; ++trial) {
      std::shuffle(nodes.begin(), nodes.end(), rng);
      EdgeState z = z0;
      for (NodeId v : nodes) project_node(g, z, v);
      CHECK(z == ref);
    }
    EdgeState par = z0;
    project_nodes(g, nodes, {}, EmitMode::Assign, z0.data(), par.data());
    CHECK(par == ref);
  }
}

TEST_CASE("emitter modes") {
  std::vector<double> in{1, 2}, out{5, 5}, p{3, std::nan("")};
  Emitter a{EmitMode::Assign, in.data(), out.data()};
  a.run(0, p.data(), 2);
  CHECK(out[0] == 3.0);
  CHECK(a.residual == 1.0);

  out = {5, 5};
  p = {3, 4};
  Emitter r{EmitMode::Reflect, in.data(), out.data()};
  r.run(0, p.data(), 2);
  CHECK(out == std::vector{5.0, 6.0});

  out = {5, 5};
  Emitter av{EmitMode::Average, in.data(), out.data()};
  av.run(0, p.data(), 2);
  CHECK(out == std::vector{5.0, 5.5});

  Emitter res{EmitMode::Residual, in.data(), nullptr};
  res.run(0, p.data(), 2);
  CHECK(res.residual == 8.0);

  std::vector<double> bad{1, INFINITY, -INFINITY, std::nan(""), 0, -0.0};
  CHECK(count_nonfinite(bad.data(), bad.size()) == 3);
  CHECK(count_nonfinite(bad.data(), 1) == 0);
}
