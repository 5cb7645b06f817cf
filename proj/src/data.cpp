#include "projnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numbers>
#include <set>

namespace projnet {

Dataset Dataset::subset(std::span<const std::size_t> idx) const {
  Shape s = inputs.shape();
  std::size_t row = numel(sample_shape()), n = size();
  s[0] = idx.size();
  Dataset r;
  r.classes = classes;
  r.labels_per_sample = labels_per_sample;
  r.inputs = Tensor(s, 0.0);
  r.labels.reserve(idx.size() * labels_per_sample);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    std::size_t i = idx[k];
    if (i >= n) throw std::out_of_range("subset: index " + std::to_string(i) + " out of range");
    std::copy(inputs.data() + i * row, inputs.data() + (i + 1) * row, r.inputs.data() + k * row);
    auto lb = labels.begin() + static_cast<std::ptrdiff_t>(i * labels_per_sample);
    r.labels.insert(r.labels.end(), lb, lb + static_cast<std::ptrdiff_t>(labels_per_sample));
  }
  return r;
}

// ---------------------------------------------------------------- IDX

namespace {

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IdxError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) |
         std::uint32_t{b[at + 3]};
}

void check_header(const std::vector<unsigned char>& b, const std::string& path, std::uint32_t magic,
                  std::size_t header) {
  if (b.size() < 4) throw IdxTruncatedError("'" + path + "': file too short for an IDX header");
  std::uint32_t got = be32(b, 0);
  if (got != magic) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "magic 0x%08x, expected 0x%08x", got, magic);
    throw IdxMagicError("'" + path + "': " + buf);
  }
  if (b.size() < header) throw IdxTruncatedError("'" + path + "': truncated header");
}

}  // namespace

Dataset load_mnist_idx(const std::string& images, const std::string& labels, bool keep_2d) {
  auto ib = read_file(images);
  check_header(ib, images, 0x00000803, 16);
  std::size_t n = be32(ib, 4), rows = be32(ib, 8), cols = be32(ib, 12);
  if (ib.size() < 16 + n * rows * cols)
    throw IdxTruncatedError("'" + images + "': " + std::to_string(ib.size() - 16) + " pixel bytes for " +
                            std::to_string(n) + " images of " + std::to_string(rows) + "x" + std::to_string(cols));

  auto lb = read_file(labels);
  check_header(lb, labels, 0x00000801, 8);
  std::size_t nl = be32(lb, 4);
  if (lb.size() < 8 + nl) throw IdxTruncatedError("'" + labels + "': truncated label data");
  if (nl != n)
    throw IdxCountMismatch(std::to_string(n) + " images but " + std::to_string(nl) + " labels");

  Dataset d;
  d.classes = 10;
  d.inputs = keep_2d ? Tensor({n, rows, cols, 1}, 0.0) : Tensor({n, rows * cols}, 0.0);
  for (std::size_t i = 0; i < n * rows * cols; ++i) d.inputs[i] = ib[16 + i] / 255.0;
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    d.labels[i] = lb[8 + i];
    if (d.labels[i] > 9) throw IdxError("'" + labels + "': label " + std::to_string(d.labels[i]) + " out of range");
  }
  return d;
}

MnistData load_mnist_dir(const std::string& dir, bool keep_2d) {
  return {load_mnist_idx(dir + "/train-images-idx3-ubyte", dir + "/train-labels-idx1-ubyte", keep_2d),
          load_mnist_idx(dir + "/t10k-images-idx3-ubyte", dir + "/t10k-labels-idx1-ubyte", keep_2d)};
}

// ---------------------------------------------------------------- synthetic

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void shuffle_indices(std::vector<std::size_t>& idx, std::uint64_t& state) {
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[splitmix64(state) % i]);
}

namespace {

double uniform01(std::uint64_t& s) { return static_cast<double>(splitmix64(s) >> 11) * 0x1.0p-53; }

double normal(std::uint64_t& s) {
  double u = 1.0 - uniform01(s), v = uniform01(s);
  return std::sqrt(-2 * std::log(u)) * std::cos(2 * std::numbers::pi * v);
}

Dataset two_d(std::size_t n) {
  Dataset d;
  d.classes = 2;
  d.inputs = Tensor({n, 2}, 0.0);
  d.labels.resize(n);
  return d;
}

}  // namespace

Dataset make_xor(std::size_t n, double noise, std::uint64_t seed) {
  Dataset d = two_d(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t a = i & 1, b = (i >> 1) & 1;
    d.inputs[2 * i] = static_cast<double>(a) + (noise > 0 ? noise * normal(seed) : 0.0);
    d.inputs[2 * i + 1] = static_cast<double>(b) + (noise > 0 ? noise * normal(seed) : 0.0);
    d.labels[i] = a ^ b;
  }
  return d;
}

Dataset make_two_moons(std::size_t n, double noise, std::uint64_t seed) {
  Dataset d = two_d(n);
  for (std::size_t i = 0; i < n; ++i) {
    double t = std::numbers::pi * uniform01(seed);
    bool lower = i & 1;
    double x = lower ? 1 - std::cos(t) : std::cos(t), y = lower ? 0.5 - std::sin(t) : std::sin(t);
    d.inputs[2 * i] = x + noise * normal(seed);
    d.inputs[2 * i + 1] = y + noise * normal(seed);
    d.labels[i] = lower;
  }
  return d;
}

Dataset make_blobs(std::size_t n, double separation, std::uint64_t seed) {
  if (!(separation > 0)) throw std::invalid_argument("make_blobs: separation must be positive");
  Dataset d = two_d(n);
  double ang = 2 * std::numbers::pi * uniform01(seed), ux = std::cos(ang), uy = std::sin(ang);
  for (std::size_t i = 0; i < n; ++i) {
    double side = i & 1 ? 1.0 : -1.0, x, y;
    do {
      x = side * separation * ux + normal(seed);
      y = side * separation * uy + normal(seed);
    } while (side * (x * ux + y * uy) < 0.5);
    d.inputs[2 * i] = x;
    d.inputs[2 * i + 1] = y;
    d.labels[i] = i & 1;
  }
  return d;
}

// ---------------------------------------------------------------- text

CharCorpus make_char_dataset(const std::string& text, std::size_t seq_len) {
  if (seq_len < 1) throw std::invalid_argument("char dataset: sequence length must be >= 1");
  if (text.size() < seq_len + 1)
    throw std::invalid_argument("char dataset: text of " + std::to_string(text.size()) +
                                " characters is shorter than one sequence");
  std::set<char> chars(text.begin(), text.end());
  CharCorpus c;
  c.vocab.assign(chars.begin(), chars.end());
  std::size_t n = (text.size() - 1) / seq_len;
  c.data.classes = c.vocab.size();
  c.data.labels_per_sample = seq_len;
  c.data.inputs = Tensor({n, seq_len}, 0.0);
  c.data.labels.resize(n * seq_len);
  auto id = [&](char ch) { return static_cast<std::size_t>(c.vocab.find(ch)); };
  for (std::size_t i = 0; i < n * seq_len; ++i) {
    c.data.inputs[i] = static_cast<double>(id(text[i]));
    c.data.labels[i] = id(text[i + 1]);
  }
  return c;
}

CharCorpus load_char_text(const std::string& path, std::size_t seq_len) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path + "'");
  std::string text{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
  return make_char_dataset(text, seq_len);
}

// ---------------------------------------------------------------- splits

Splits split_dataset(const Dataset& d, double train, double val, double test, std::uint64_t seed) {
  if (train < 0 || val < 0 || test < 0 || std::abs(train + val + test - 1.0) > 1e-9)
    throw std::invalid_argument("split fractions must be non-negative and sum to 1");
  std::size_t n = d.size();
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  shuffle_indices(idx, seed);
  std::size_t nt = std::min(n, static_cast<std::size_t>(std::llround(train * static_cast<double>(n))));
  std::size_t nv = std::min(n - nt, static_cast<std::size_t>(std::llround(val * static_cast<double>(n))));
  if (test == 0) nv = n - nt;
  Splits s;
  s.train_idx.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(nt));
  s.val_idx.assign(idx.begin() + static_cast<std::ptrdiff_t>(nt), idx.begin() + static_cast<std::ptrdiff_t>(nt + nv));
  s.test_idx.assign(idx.begin() + static_cast<std::ptrdiff_t>(nt + nv), idx.end());
  s.train = d.subset(s.train_idx);
  s.val = d.subset(s.val_idx);
  s.test = d.subset(s.test_idx);
  return s;
}

}  // namespace projnet
