#include <doctest.h>

#include <cmath>
#include <deque>
#include <random>

#include "oracles.hpp"
#include "projnet/data.hpp"
#include "projnet/solve.hpp"

using namespace projnet;

namespace {

double dist(const std::vector<double>& z, double x, double y) { return std::hypot(z[0] - x, z[1] - y); }

Dataset two_class_rows(std::size_t n) {
  Dataset d;
  d.classes = 2;
  d.inputs = Tensor({n, 2}, 0.0);
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    d.labels[i] = i % 2;
    d.inputs[2 * i] = d.labels[i] ? 1.0 : -1.0;
    d.inputs[2 * i + 1] = 0.1 * static_cast<double>(i);
  }
  return d;
}

}  // namespace

TEST_CASE("AP and DR reach the intersection of two lines") {
  // x + y = 3 and x - 2y = 0 meet at (2, 1)
  oracle::Lines p({1, 1, 3}, {1, -2, 0});
  std::vector<double> z{-7, 5};
  double prev = INFINITY;
  for (int k = 0; k < 200; ++k) {
    ap_step(p, z);
    double d = dist(z, 2, 1);
    CHECK(d <= prev + 1e-15);
    prev = d;
  }
  CHECK(dist(z, 2, 1) <= 1e-6);

  std::vector<double> w{-7, 5}, work(2), shadow(2);
  for (int k = 0; k < 200; ++k) dr_step(p, w, work, Part::B, shadow);
  CHECK(dist(shadow, 2, 1) <= 1e-6);
}

TEST_CASE("steps fix a point in both sets") {
  oracle::Lines p({1, 1, 3}, {1, -2, 0});
  std::vector<double> z{2, 1}, work(2), shadow(2);
  ap_step(p, z);
  CHECK(z == std::vector{2.0, 1.0});
  dr_step(p, z, work, Part::B, shadow);
  CHECK(z == std::vector{2.0, 1.0});
  CHECK(shadow == std::vector{2.0, 1.0});
}

TEST_CASE("DR drifts between parallel lines") {
  // y = 0 and y = 1 never meet; the iterate moves by the gap each step
  oracle::Lines p({0, 1, 0}, {0, 1, 1});
  std::vector<double> z{0.3, 0.2}, work(2);
  std::vector<double> norms;
  for (int k = 1; k <= 200; ++k) {
    dr_step(p, z, work);
    if (k % 50 == 0) norms.push_back(std::abs(z[1]));
  }
  for (std::size_t i = 1; i < norms.size(); ++i) CHECK(norms[i] - norms[i - 1] == doctest::Approx(50.0));
}

TEST_CASE("a non-finite projection is counted") {
  oracle::Lines p({1, 1, 3}, {1, -2, 0});
  std::vector<double> z{NAN, 0};
  CHECK(ap_step(p, z) > 0);
}

TEST_CASE("one step on a single parameter moves toward the target") {
  // theta (1,2) -> identity -> margin target with label 0, m = 1
  GraphBuilder b;
  auto th = b.parameter("theta", Tensor({1, 2}, 0.0));
  b.target(b.identity(th), TargetSpec::margin(1), {0});
  Graph g = bipartition(std::move(b).build());
  ParamTree p0{{"theta", Tensor({1, 2}, {0.0, 0.0})}};
  EdgeState z = init_state(g, p0);
  CHECK(feasibility_residual(g, z) == doctest::Approx(1.0));
  ap_step(g, z);
  // target moves the logit to (1, 0); the identity node averages with (0, 0)
  auto t = extract_params(g, z).at("theta");
  CHECK(t[0] == doctest::Approx(0.5));
  CHECK(t[1] == 0.0);
  CHECK(feasibility_residual(g, z) < 1.0);
}

TEST_CASE("feasible graph states are fixed by every method") {
  GraphBuilder b;
  auto x = b.constant(Tensor({2, 3}, {2, -1, 0, -0.5, 1.5, -3}));
  auto w = b.parameter("w", Tensor({2, 3}, 0.0));
  auto s = b.sum_relu(b.concat({b.reshape(x, {2, 3, 1}), b.reshape(w, {2, 3, 1})}, 2));
  b.target(s, TargetSpec::margin(1), {0, 1});
  Graph g = bipartition(std::move(b).build());
  EdgeState z = init_state(g, {{"w", Tensor({2, 3}, 0.0)}});
  CHECK(feasibility_residual(g, z) <= 1e-12);
  EdgeState z0 = z, work(g);
  ap_step(g, z);
  CHECK(z == z0);
  dr_step(g, z, work);
  CHECK(z == z0);
  cp_step(g, z, cp_schedule(g));
  CHECK(z == z0);
}

TEST_CASE("cyclic schedule follows BFS depth from the targets") {
  auto spec = nn::ModelSpec::mlp(3, 4, 2, 2);
  std::mt19937_64 rng(3);
  Graph g = nn::trace(spec, nn::init_params(spec, 0), oracle::random_tensor({4, 3}, rng), {0, 1, 1, 0},
                      TargetSpec::cross_entropy(5));
  Schedule s = cp_schedule(g);
  CHECK_NOTHROW(validate_schedule(g, s));

  std::vector<long> depth(g.num_nodes(), -1);
  std::deque<NodeId> q;
  for (NodeId v = 0; v < g.num_nodes(); ++v)
    if (std::holds_alternative<TargetNode>(g.node(v).kind)) {
      depth[v] = 0;
      q.push_back(v);
    }
  while (!q.empty()) {
    NodeId u = q.front();
    q.pop_front();
    for (NodeId w : g.neighbors(u))
      if (depth[w] < 0) {
        depth[w] = depth[u] + 1;
        q.push_back(w);
      }
  }
  long last = 0, deepest = 0;
  for (const auto& grp : s.groups)
    for (NodeId v : grp) {
      CHECK(depth[v] >= last);
      last = depth[v];
      deepest = std::max(deepest, depth[v]);
    }
  // target, readout dot, then (relu, dot) per layer, then inputs/params
  CHECK(deepest == 2 + 2 * static_cast<long>(spec.depth));

  Schedule bad = s;
  bad.groups.push_back(bad.groups.front());
  CHECK_THROWS_AS(validate_schedule(g, bad), std::invalid_argument);
  Schedule adj{{{}}};
  for (const auto& grp : s.groups) adj.groups[0].insert(adj.groups[0].end(), grp.begin(), grp.end());
  CHECK_THROWS_AS(validate_schedule(g, adj), std::invalid_argument);
}

TEST_CASE("one-group schedule equals the partition projection") {
  auto spec = nn::ModelSpec::mlp(2, 3, 1, 2);
  std::mt19937_64 rng(8);
  Graph g = bipartition(nn::trace(spec, nn::init_params(spec, 0), oracle::random_tensor({3, 2}, rng), {0, 1, 1},
                                  TargetSpec::cross_entropy(5)));
  EdgeState z = init_state(g, nn::init_params(spec, 0));
  for (auto& v : z.values()) v += 0.1;
  EdgeState a = z, c = z;
  project_partition(g, a, Part::A);
  cp_step(g, c, Schedule{{g.nodes_in(Part::A)}});
  CHECK(a == c);
}

TEST_CASE("training counts K steps per batch") {
  Dataset d = two_class_rows(12);
  auto spec = nn::ModelSpec::mlp(2, 4, 1, 2);
  for (Method m : {Method::AP, Method::DR, Method::CP}) {
    SolverConfig cfg;
    cfg.method = m;
    cfg.steps_per_batch = 7;
    cfg.batch_size = 4;
    cfg.max_steps = 7 * 5;
    auto r = train(spec, d, cfg, nn::init_params(spec, 0));
    CHECK(r.batches == 5);
    CHECK(r.steps == 35);
    std::size_t prev = 0;
    for (const auto& rec : r.records) {
      CHECK(rec.step > prev);
      CHECK(rec.residual >= 0);
      prev = rec.step;
    }
    CHECK(r.records.back().step == 35);
  }
}

TEST_CASE("training is deterministic and honours the stop hook") {
  Dataset d = make_xor(4, 0, 0);
  auto spec = nn::ModelSpec::mlp(2, 16, 1, 2);
  SolverConfig cfg;
  cfg.max_steps = 150;
  cfg.log_every = 10;
  auto a = train(spec, d, cfg, nn::init_params(spec, 1));
  auto b = train(spec, d, cfg, nn::init_params(spec, 1));
  CHECK(a.records.size() == 15);
  for (const auto& [name, t] : a.params) CHECK(b.params.at(name) == t);
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].residual == b.records[i].residual);
    CHECK(a.records[i].train_loss == b.records[i].train_loss);
  }

  TrainHooks hooks;
  hooks.on_batch_end = [](std::size_t step, const ParamTree&) { return step < 100; };
  auto c = train(spec, d, cfg, nn::init_params(spec, 1), hooks);
  CHECK(c.stopped_early);
  CHECK(c.steps == 100);
}

TEST_CASE("XOR trains to full accuracy with DR") {
  Dataset d = make_xor(4, 0, 0);
  auto spec = nn::ModelSpec::mlp(2, 16, 1, 2);
  SolverConfig cfg;
  cfg.max_steps = 500;
  auto r = train(spec, d, cfg, nn::init_params(spec, 0));
  auto rows = nn::logit_rows(spec, nn::forward_eval(spec, r.params, d.inputs));
  CHECK(nn::accuracy(rows, d.labels) == 1.0);
}

TEST_CASE("solver config validation") {
  SolverConfig c;
  c.steps_per_batch = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  CHECK(parse_method("dr") == Method::DR);
  CHECK(parse_method("CP") == Method::CP);
  CHECK_THROWS(parse_method("sgd"));
}
