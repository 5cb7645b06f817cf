#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "projnet/data.hpp"
#include "projnet/edge_state.hpp"
#include "projnet/errors.hpp"
#include "projnet/nn.hpp"
#include "projnet/solve.hpp"

using namespace projnet;

namespace {

// Forward value of v in the graph built so far.
Tensor value_of(GraphBuilder& b, const Value& v, const ParamTree& params = {}) {
  NodeId probe = b.identity(v).node;
  Graph g = std::move(b).build();
  EdgeState z = init_state(g, params);
  for (EdgeId e = 0; e < g.num_edges(); ++e)
    if (g.edge(e).dst == probe) return z.edge_tensor(g, e);
  throw std::logic_error("probe edge missing");
}

NodeId only_node(const Graph& g, PrimKind k) {
  for (NodeId v = 0; v < g.num_nodes(); ++v)
    if (auto* p = std::get_if<PrimitiveNode>(&g.node(v).kind); p && p->spec.kind == k) return v;
  throw std::logic_error("no such primitive");
}

Tensor random_inputs(const nn::ModelSpec& s, std::size_t N, std::mt19937_64& rng) {
  Shape in = s.input_shape;
  in.insert(in.begin(), N);
  Tensor x = oracle::random_tensor(in, rng);
  if (s.arch == nn::Arch::RNN)
    for (auto& v : x.values()) v = std::floor((v + 1) / 2 * static_cast<double>(s.classes) * 0.999);
  return x;
}

ParamTree random_params(const nn::ModelSpec& s, std::mt19937_64& rng) {
  ParamTree p;
  for (const auto& [name, shape] : s.param_shapes()) p.emplace(name, oracle::random_tensor(shape, rng, -0.8, 0.8));
  return p;
}

}  // namespace

TEST_CASE("linear layer lowers to dot primitives") {
  SUBCASE("smallest case is one Dot(2)") {
    GraphBuilder b;
    auto y = nn::build_linear(b, {b.constant(Tensor({1, 2}, {1, 2}))}, b.parameter("w", Tensor({2, 1}, 0.0)));
    CHECK(y.shape == Shape{1, 1});
    Graph g = std::move(b).build();
    CHECK(g.count_primitives(PrimKind::Dot) == 1);
    NodeId d = only_node(g, PrimKind::Dot);
    CHECK(std::get<PrimitiveNode>(g.node(d).kind).spec.fanin == 2);
    CHECK(numel(g.node(d).shape) == 1);
  }
  SUBCASE("batch 32, 784 -> 16") {
    GraphBuilder b;
    auto y = nn::build_linear(b, {b.constant(Tensor({32, 784}, 0.0))}, b.parameter("hidden.weight", Tensor({784, 16})));
    CHECK(y.shape == Shape{32, 16});
    Graph g = std::move(b).build();
    NodeId d = only_node(g, PrimKind::Dot);
    CHECK(std::get<PrimitiveNode>(g.node(d).kind).spec.fanin == 784);
    for (EdgeId e : g.in_edges(d)) CHECK(g.edge_shape(e) == Shape{32, 16, 784});
    CHECK(g.count_transforms(TransformKind::Reshape) == 2);
    CHECK(g.count_transforms(TransformKind::Repeat) == 2);
    CHECK(g.count_transforms(TransformKind::Transpose) == 1);
  }
  SUBCASE("degenerate shapes") {
    GraphBuilder b;
    auto x = b.constant(Tensor({1, 2}, 0.0));
    CHECK_THROWS_AS(nn::build_linear(b, {x}, b.parameter("w0", Tensor({2, 0}))), ShapeError);
    CHECK_THROWS_AS(nn::build_linear(b, {x}, b.parameter("w3", Tensor({3, 1}))), ShapeError);
  }
  SUBCASE("zero weights give zero output") {
    GraphBuilder b;
    auto y = nn::build_linear(b, {b.constant(Tensor({2, 3}, 1.5))}, b.parameter("w", Tensor({3, 2}, 0.0)));
    CHECK(value_of(b, y, {{"w", Tensor({3, 2}, 0.0)}}) == Tensor({2, 2}, 0.0));
  }
}

TEST_CASE("relu_bias forward values") {
  for (auto [x, want] : {std::pair{-2.0, 0.0}, std::pair{2.0, 3.0}}) {
    GraphBuilder b;
    auto y = nn::build_relu_bias(b, b.constant(Tensor({1, 1}, {x})), b.parameter("b", Tensor({1}, 0.0)));
    CHECK(value_of(b, y, {{"b", Tensor({1}, {1.0})}})[0] == want);
  }
  GraphBuilder b;
  CHECK_THROWS_AS(nn::build_relu_bias(b, b.constant(Tensor({1, 2}, 0.0)), b.parameter("b", Tensor({3}, 0.0))),
                  ShapeError);
}

TEST_CASE("conv2d lowering") {
  SUBCASE("1x1 image sees only the centre tap") {
    GraphBuilder b;
    auto y = nn::build_conv2d(b, b.constant(Tensor({1, 1, 1, 1}, {0.7})), b.parameter("k", Tensor({9, 1}, 0.0)));
    CHECK(value_of(b, y, {{"k", Tensor({9, 1}, 1.0)}})[0] == doctest::Approx(0.7));
  }
  SUBCASE("centre kernel is the identity") {
    std::mt19937_64 rng(2);
    Tensor img = oracle::random_tensor({2, 3, 4, 1}, rng);
    Tensor k({9, 1}, 0.0);
    k[4] = 1;
    GraphBuilder b;
    auto y = nn::build_conv2d(b, b.constant(img), b.parameter("k", Tensor({9, 1}, 0.0)));
    CHECK(value_of(b, y, {{"k", k}}) == img);
  }
  SUBCASE("kernel fan-out on a 4x4 input") {
    std::size_t N = 2, H = 4, W = 4, C = 2, Co = 3;
    GraphBuilder b;
    auto k = b.parameter("k", Tensor({9 * C, Co}, 0.0));
    nn::build_conv2d(b, b.constant(Tensor({N, H, W, C}, 0.0)), k);
    Graph g = std::move(b).build();
    auto counts = g.copy_counts(k.node);
    for (double c : counts) CHECK(c == static_cast<double>(N * H * W));
    // per (tap, in-channel) row, across output channels
    for (std::size_t r = 0; r < 9 * C; ++r) {
      double row = 0;
      for (std::size_t o = 0; o < Co; ++o) row += counts[r * Co + o];
      CHECK(row == static_cast<double>(H * W * Co * N));
    }
  }
  SUBCASE("channel mismatch") {
    GraphBuilder b;
    CHECK_THROWS_AS(
        nn::build_conv2d(b, b.constant(Tensor({1, 2, 2, 2}, 0.0)), b.parameter("k", Tensor({9, 1}, 0.0))),
        ShapeError);
  }
}

TEST_CASE("forward_eval matches a dense reference") {
  std::vector<nn::ModelSpec> specs = {
      nn::ModelSpec::mlp(5, 7, 1, 3),       nn::ModelSpec::mlp(5, 7, 3, 3),
      nn::ModelSpec::mlp(5, 7, 3, 4, true), nn::ModelSpec::cnn(4, 5, 2, 3, 1, 3),
      nn::ModelSpec::cnn(4, 4, 1, 3, 2, 2, true), nn::ModelSpec::rnn(4, 3, 5, 1, 3),
      nn::ModelSpec::rnn(3, 2, 4, 2, 4),
  };
  auto q = nn::ModelSpec::mlp(3, 6, 2, 2);
  q.quantize = nn::QuantSpec{3, 1.0};
  specs.push_back(q);
  std::mt19937_64 rng(7);
  for (const auto& s : specs) {
    CAPTURE(s.to_json().dump());
    for (int trial = 0; trial < 10; ++trial) {
      Tensor x = random_inputs(s, 3, rng);
      ParamTree p = random_params(s, rng);
      Tensor y = nn::forward_eval(s, p, x);
      auto ref = oracle::dense_forward(s, p, x);
      REQUIRE(y.size() == ref.size());
      for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(y[i] - ref[i]) <= 1e-12);

      // the traced graph's forward pass delivers the same logits to its targets
      std::vector<std::size_t> labels(3 * s.labels_per_sample(), 0);
      Graph g = nn::trace(s, p, x, labels, TargetSpec::cross_entropy(5));
      auto logits = target_inputs(g, init_state(g, p));
      std::size_t T = s.unroll(), V = s.classes, at = 0;
      for (std::size_t t = 0; t < logits.size(); ++t)
        for (std::size_t n = 0; n < 3; ++n)
          for (std::size_t v = 0; v < V; ++v) {
            double want = s.arch == nn::Arch::RNN ? y[(n * T + t) * V + v] : y[n * V + v];
            CHECK(std::abs(logits[t][n * V + v] - want) <= 1e-12);
            ++at;
          }
      CHECK(at == y.size());
    }
  }
}

TEST_CASE("forward_eval basics") {
  auto id = nn::ModelSpec::identity(3);
  Tensor x({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(nn::forward_eval(id, {}, x) == x);
  CHECK_THROWS_AS(nn::forward_eval(id, {}, Tensor({2, 4}, 0.0)), ShapeError);

  Tensor rows({2, 3}, {0, 2, 1, 3, 3, 0});
  CHECK(nn::accuracy(rows, {1, 0}) == 1.0);
  CHECK(nn::accuracy(rows, {1, 1}) == 0.5);
  Tensor m({1, 2}, {0.5, 0.25});
  CHECK(nn::mean_loss(m, {0}, TargetSpec::margin(1)) == doctest::Approx(0.25 + 0.0625));
  Tensor c({1, 2}, {0.0, 0.0});
  CHECK(nn::mean_loss(c, {1}, TargetSpec::cross_entropy(5)) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("RNN unroll") {
  auto s = nn::ModelSpec::rnn(2, 2, 3, 1, 1);
  auto p = nn::init_params(s, 0);
  Graph g = nn::trace(s, p, Tensor({2, 1}, {0, 1}), {1, 0}, TargetSpec::cross_entropy(5));
  CHECK(g.count_primitives(PrimKind::Dot) == 3);  // cell, logits head, state head
  std::size_t targets = 0;
  for (const auto& n : g.nodes()) targets += std::holds_alternative<TargetNode>(n.kind);
  CHECK(targets == 1);

  auto s4 = nn::ModelSpec::rnn(2, 2, 3, 1, 4);
  Graph g4 = nn::trace(s4, nn::init_params(s4, 0), Tensor({1, 4}, {0, 1, 0, 1}), {1, 0, 1, 0},
                       TargetSpec::cross_entropy(5));
  targets = 0;
  for (const auto& n : g4.nodes()) targets += std::holds_alternative<TargetNode>(n.kind);
  CHECK(targets == 4);
  CHECK_THROWS_AS(nn::trace(s4, nn::init_params(s4, 0), Tensor({1, 4}, {0, 2, 0, 1}), {1, 0, 1, 0},
                            TargetSpec::cross_entropy(5)),
                  std::out_of_range);
}

TEST_CASE("RNN learns a two-symbol alternation") {
  std::string text;
  for (int i = 0; i < 40; ++i) text += "ab";
  auto corpus = make_char_dataset(text, 4);
  auto s = nn::ModelSpec::rnn(2, 4, 8, 1, 4);
  SolverConfig cfg;
  cfg.max_steps = 500;
  auto r = train(s, corpus.data, cfg, nn::init_params(s, 0));
  auto rows = nn::logit_rows(s, nn::forward_eval(s, r.params, corpus.data.inputs));
  CHECK(nn::accuracy(rows, corpus.data.labels) == 1.0);
}

TEST_CASE("target attachment") {
  GraphBuilder b;
  auto x = b.constant(Tensor({2, 10}, 0.0));
  auto ids = nn::attach_loss(b, x, {3, 9}, TargetSpec::margin(1));
  CHECK(ids.size() == 1);
  Graph g = std::move(b).build();
  CHECK(std::get<TargetNode>(g.node(ids[0]).kind).labels == std::vector<std::size_t>{3, 9});
  GraphBuilder b2;
  CHECK_THROWS_AS(nn::attach_loss(b2, b2.constant(Tensor({1, 10}, 0.0)), {10}, TargetSpec::margin(1)),
                  std::out_of_range);
}

TEST_CASE("parameter initialisation") {
  auto s = nn::ModelSpec::mlp(9, 16, 2, 3);
  auto a = nn::init_params(s, 42), b = nn::init_params(s, 42), c = nn::init_params(s, 43);
  CHECK(a == b);
  CHECK(a != c);
  for (const auto& [name, shape] : s.param_shapes()) {
    const Tensor& t = a.at(name);
    CHECK(t.shape() == shape);
    if (name.ends_with(".bias")) {
      CHECK(t == Tensor(shape, 0.0));
    } else {
      double bound = std::sqrt(1.0 / static_cast<double>(shape[0]));
      for (double v : t.values()) CHECK(std::abs(v) <= bound);
    }
  }
}

TEST_CASE("model spec validation and JSON") {
  auto r = nn::ModelSpec::rnn(5, 3, 8, 2, 6);
  r.skip = true;
  CHECK_THROWS_AS(r.validate(), std::invalid_argument);
  auto c = nn::ModelSpec::cnn(8, 8, 1, 4, 0, 10);
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);

  auto q = nn::ModelSpec::mlp(784, 128, 1, 10, true);
  q.quantize = nn::QuantSpec{3, 1.0};
  CHECK(nn::ModelSpec::from_json(q.to_json()) == q);
  auto rr = nn::ModelSpec::rnn(5, 3, 8, 2, 6);
  CHECK(nn::ModelSpec::from_json(rr.to_json()) == rr);
  CHECK(nn::parse_arch("cnn") == nn::Arch::CNN);
  CHECK_FALSE(q.layers().empty());
}
