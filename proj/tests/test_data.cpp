#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "projnet/data.hpp"

using namespace projnet;
namespace fs = std::filesystem;

namespace {

void put32(std::vector<unsigned char>& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<unsigned char>(v >> s));
}

std::string write_bytes(const std::string& name, const std::vector<unsigned char>& b) {
  fs::path dir = fs::temp_directory_path() / "projnet_test_data";
  fs::create_directories(dir);
  std::string p = (dir / name).string();
  std::ofstream(p, std::ios::binary).write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  return p;
}

std::vector<unsigned char> images(std::uint32_t magic, std::uint32_t n, std::size_t drop = 0) {
  std::vector<unsigned char> b;
  put32(b, magic);
  put32(b, n);
  put32(b, 2);
  put32(b, 3);
  for (std::uint32_t i = 0; i < n * 6; ++i) b.push_back(static_cast<unsigned char>(i == 0 ? 255 : i));
  b.resize(b.size() - drop);
  return b;
}

std::vector<unsigned char> labels(std::uint32_t magic, std::uint32_t n) {
  std::vector<unsigned char> b;
  put32(b, magic);
  put32(b, n);
  for (std::uint32_t i = 0; i < n; ++i) b.push_back(static_cast<unsigned char>(i % 10));
  return b;
}

}  // namespace

TEST_CASE("IDX parsing") {
  auto img = write_bytes("img", images(0x803, 4));
  auto lab = write_bytes("lab", labels(0x801, 4));
  Dataset d = load_mnist_idx(img, lab);
  CHECK(d.inputs.shape() == Shape{4, 6});
  CHECK(d.inputs[0] == 1.0);
  CHECK(d.inputs[1] == 1.0 / 255.0);
  CHECK(d.labels == std::vector<std::size_t>{0, 1, 2, 3});
  CHECK(load_mnist_idx(img, lab, true).inputs.shape() == Shape{4, 2, 3, 1});

  CHECK_THROWS_AS(load_mnist_idx(write_bytes("bad_magic", images(0x801, 4)), lab), IdxMagicError);
  CHECK_THROWS_AS(load_mnist_idx(img, write_bytes("bad_lmagic", labels(0x803, 4))), IdxMagicError);
  CHECK_THROWS_AS(load_mnist_idx(write_bytes("short", images(0x803, 4, 5)), lab), IdxTruncatedError);
  CHECK_THROWS_AS(load_mnist_idx(write_bytes("tiny", {0, 0, 8}), lab), IdxTruncatedError);
  CHECK_THROWS_AS(load_mnist_idx(img, write_bytes("lab3", labels(0x801, 3))), IdxCountMismatch);
  CHECK_THROWS(load_mnist_idx(img + ".missing", lab));
}

TEST_CASE("bundled MNIST subset") {
  auto m = load_mnist_dir(PROJNET_MNIST_DIR);
  CHECK(m.train.size() == 8000);
  CHECK(m.test.size() == 2000);
  CHECK(m.train.sample_shape() == Shape{784});
  auto [lo, hi] = std::minmax_element(m.train.inputs.values().begin(), m.train.inputs.values().end());
  CHECK(*lo == 0.0);
  CHECK(*hi == 1.0);
  std::set<std::size_t> classes(m.test.labels.begin(), m.test.labels.end());
  CHECK(classes.size() == 10);
}

TEST_CASE("splits are disjoint and cover the data") {
  Dataset d = make_two_moons(101, 0.1, 3);
  auto s = split_dataset(d, 0.7, 0.2, 0.1, 9);
  std::vector<std::size_t> all;
  for (const auto* v : {&s.train_idx, &s.val_idx, &s.test_idx}) all.insert(all.end(), v->begin(), v->end());
  std::sort(all.begin(), all.end());
  CHECK(all.size() == 101);
  for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i] == i);
  CHECK(s.train.size() == 71);
  CHECK(s.val.size() == 20);
  CHECK(s.train.inputs[0] == d.inputs[2 * s.train_idx[0]]);
  CHECK(s.train.labels[3] == d.labels[s.train_idx[3]]);

  auto s2 = split_dataset(d, 0.9, 0.1, 0.0, 9);
  CHECK(s2.test.size() == 0);
  CHECK(s2.train.size() + s2.val.size() == 101);
  CHECK_THROWS_AS(split_dataset(d, 0.5, 0.2, 0.2, 0), std::invalid_argument);
  CHECK(split_dataset(d, 0.7, 0.2, 0.1, 9).train_idx == s.train_idx);
}

TEST_CASE("synthetic sets") {
  Dataset x = make_xor(8, 0, 0);
  for (std::size_t i = 0; i < 8; ++i) {
    double a = x.inputs[2 * i], b = x.inputs[2 * i + 1];
    CHECK(x.labels[i] == static_cast<std::size_t>((a != b) ? 1 : 0));
  }
  CHECK(make_two_moons(50, 0.2, 1).inputs == make_two_moons(50, 0.2, 1).inputs);

  Dataset bl = make_blobs(200, 2.0, 4);
  std::size_t ones = std::count(bl.labels.begin(), bl.labels.end(), 1u);
  CHECK(ones > 50);
  CHECK(ones < 150);
}

TEST_CASE("character windows") {
  auto c = make_char_dataset("abcab", 2);
  CHECK(c.vocab == "abc");
  CHECK(c.data.inputs.shape() == Shape{2, 2});
  CHECK(c.data.inputs.storage() == std::vector<double>{0, 1, 2, 0});
  CHECK(c.data.labels == std::vector<std::size_t>{1, 2, 0, 1});
  CHECK(c.data.labels_per_sample == 2);
  CHECK_THROWS_AS(make_char_dataset("ab", 2), std::invalid_argument);
}

TEST_CASE("shuffle is a fixed permutation") {
  std::vector<std::size_t> a(10), b;
  for (std::size_t i = 0; i < 10; ++i) a[i] = i;
  b = a;
  std::uint64_t s1 = 5, s2 = 5;
  shuffle_indices(a, s1);
  shuffle_indices(b, s2);
  CHECK(a == b);
  std::uint64_t s = 0;
  CHECK(splitmix64(s) == 0xe220a8397b1dcdafULL);
}
