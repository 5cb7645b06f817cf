#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "projnet/errors.hpp"
#include "projnet/transforms.hpp"

using namespace projnet;

namespace {

Tensor iota(Shape s) {
  Tensor t(std::move(s), 0.0);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i) + 1;
  return t;
}

// Output of a one-slot transform rebuilt from forward_runs.
Tensor via_runs(const Transform& tr, const Tensor& x) {
  Tensor out(tr.out_shape(), -99.0);
  std::vector<double> scratch;
  tr.forward_runs(0, x.data(), [&](std::size_t off, const double* v, std::size_t n) {
    std::copy(v, v + n, out.data() + off);
  }, scratch);
  return out;
}

}  // namespace

TEST_CASE("reshape round trip") {
  auto tr = Transform::reshape({2, 3}, {6});
  Tensor x = iota({2, 3});
  Tensor y = tr.forward(x);
  CHECK(y.shape() == Shape{6});
  CHECK(tr.inverse(0, y) == x);
  CHECK_THROWS_AS(Transform::reshape({2, 3}, {5}), ShapeError);
}

TEST_CASE("transpose matches index arithmetic") {
  auto tr = Transform::transpose({2, 3, 4}, {2, 0, 1});
  Tensor x = iota({2, 3, 4});
  Tensor y = tr.forward(x);
  REQUIRE(y.shape() == Shape{4, 2, 3});
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t b = 0; b < 3; ++b)
      for (std::size_t c = 0; c < 4; ++c) CHECK(y.at({c, a, b}) == x.at({a, b, c}));
  CHECK(tr.inverse(0, y) == x);
  CHECK(via_runs(tr, x) == y);
  CHECK_THROWS_AS(Transform::transpose({2, 3}, {0, 0}), ShapeError);
}

TEST_CASE("repeat inverse is the mean over replicas") {
  auto tr = Transform::repeat({1}, 0, 3);
  CHECK(tr.forward(Tensor::vector({2.0})).storage() == std::vector<double>{2, 2, 2});
  // replicas (1,2,3) average to 2
  CHECK(tr.inverse(0, Tensor::vector({1.0, 2.0, 3.0}))[0] == doctest::Approx(2.0).epsilon(1e-15));

  auto tr2 = Transform::repeat({2, 1, 3}, 1, 4);
  Tensor x = iota({2, 1, 3});
  Tensor y = tr2.forward(x);
  CHECK(y.shape() == Shape{2, 4, 3});
  CHECK(tr2.inverse(0, y) == x);
  CHECK(via_runs(tr2, x) == y);
  CHECK_THROWS_AS(Transform::repeat({2, 2}, 1, 3), ShapeError);
}

TEST_CASE("concat then split restores both halves") {
  auto tr = Transform::concat({{2}, {3}}, 0);
  Tensor a = Tensor::vector({1, 2}), b = Tensor::vector({3, 4, 5});
  const Tensor* in[] = {&a, &b};
  Tensor y = tr.forward(std::span<const Tensor* const>(in, 2));
  CHECK(y.storage() == std::vector<double>{1, 2, 3, 4, 5});
  CHECK(tr.inverse(0, y) == a);
  CHECK(tr.inverse(1, y) == b);

  auto t2 = Transform::concat({{2, 1}, {2, 2}}, 1);
  Tensor c = iota({2, 1}), d = iota({2, 2});
  const Tensor* in2[] = {&c, &d};
  CHECK(t2.forward(std::span<const Tensor* const>(in2, 2)).storage() == std::vector<double>{1, 1, 2, 2, 3, 4});
}

TEST_CASE("index forward, inverse and contract violation") {
  auto tr = Transform::index({4, 2}, 0, {3, 1, 3});
  Tensor x = iota({4, 2});
  Tensor y = tr.forward(x);
  CHECK(y.storage() == std::vector<double>{7, 8, 3, 4, 7, 8});
  // rows 0 and 2 have no image
  CHECK_THROWS_AS(tr.inverse(0, y), ContractViolation);
  auto full = Transform::index({2, 2}, 0, {1, 0});
  CHECK(full.inverse(0, full.forward(iota({2, 2}))) == iota({2, 2}));
  CHECK_THROWS(Transform::index({2, 2}, 0, {2}));
}

TEST_CASE("pad writes zeros around the input") {
  auto tr = Transform::pad({1, 2, 2, 1}, {{0, 0}, {1, 1}, {1, 1}, {0, 0}});
  Tensor x = iota({1, 2, 2, 1});
  Tensor y = tr.forward(x);
  REQUIRE(y.shape() == Shape{1, 4, 4, 1});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      bool inside = i >= 1 && i <= 2 && j >= 1 && j <= 2;
      CHECK(y.at({0, i, j, 0}) == (inside ? x.at({0, i - 1, j - 1, 0}) : 0.0));
    }
  CHECK(tr.inverse(0, y) == x);
  CHECK(via_runs(tr, x) == y);
}

TEST_CASE("conv_patch gathers (dy,dx,c) windows") {
  auto tr = Transform::conv_patch({1, 3, 4, 2}, 3, 3);
  Tensor x = iota({1, 3, 4, 2});
  Tensor y = tr.forward(x);
  REQUIRE(y.shape() == Shape{1, 1, 2, 18});
  for (std::size_t j = 0; j < 2; ++j)
    for (std::size_t dy = 0; dy < 3; ++dy)
      for (std::size_t dx = 0; dx < 3; ++dx)
        for (std::size_t c = 0; c < 2; ++c) CHECK(y.at({0, 0, j, (dy * 3 + dx) * 2 + c}) == x.at({0, dy, j + dx, c}));
  CHECK(tr.inverse(0, y) == x);
  CHECK(via_runs(tr, x) == y);
}

TEST_CASE("adjoint_mean averages every copy of an input element") {
  std::mt19937_64 rng(7);
  auto tr = Transform::conv_patch({2, 4, 4, 3}, 3, 3);
  Tensor y = oracle::random_tensor(tr.out_shape(), rng);
  MeanAccumulator acc(numel(tr.in_shapes()[0]));
  tr.adjoint_mean(0, y.data(), nullptr, acc);
  std::vector<double> sum(acc.mean.size(), 0.0), cnt(acc.mean.size(), 0.0);
  tr.for_each_pair(0, [&](std::size_t o, std::size_t i) {
    sum[i] += y[o];
    cnt[i] += 1;
  });
  std::vector<double> count(sum.size(), 0.0);
  tr.adjoint_count(0, nullptr, count);
  for (std::size_t i = 0; i < sum.size(); ++i) {
    CHECK(acc.count[i] == cnt[i]);
    CHECK(count[i] == cnt[i]);
    CHECK(acc.mean[i] == doctest::Approx(sum[i] / cnt[i]).epsilon(1e-13));
  }
}

TEST_CASE("mean accumulator keeps equal replicas exact") {
  MeanAccumulator acc(1);
  for (int i = 0; i < 7; ++i) acc.add(0, 0.1, 1);
  CHECK(acc.mean[0] == 0.1);
  CHECK(acc.count[0] == 7);
}
