#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "projnet/tensor.hpp"

namespace projnet {

struct Dataset {
  Tensor inputs;                     // (N, sample...)
  std::vector<std::size_t> labels;   // N * labels_per_sample
  std::size_t classes = 0;
  std::size_t labels_per_sample = 1;

  std::size_t size() const { return inputs.rank() ? inputs.dim(0) : 0; }
  Shape sample_shape() const { return Shape(inputs.shape().begin() + 1, inputs.shape().end()); }
  Dataset subset(std::span<const std::size_t> idx) const;
};

struct IdxError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IdxMagicError : IdxError {
  using IdxError::IdxError;
};
struct IdxTruncatedError : IdxError {
  using IdxError::IdxError;
};
struct IdxCountMismatch : IdxError {
  using IdxError::IdxError;
};

// One images/labels pair. Pixels are scaled to [0,1]; images are flattened
// to 784 unless keep_2d, which gives (N,28,28,1).
Dataset load_mnist_idx(const std::string& images, const std::string& labels, bool keep_2d = false);

struct MnistData {
  Dataset train, test;
};
// dir holds train-{images-idx3,labels-idx1}-ubyte and the t10k pair.
MnistData load_mnist_dir(const std::string& dir, bool keep_2d = false);

// Corners of the unit square labelled x1 xor x2, cycled to n points with
// optional Gaussian jitter.
Dataset make_xor(std::size_t n, double noise, std::uint64_t seed);
Dataset make_two_moons(std::size_t n, double noise, std::uint64_t seed);
// Two Gaussian blobs whose centres are 2*separation apart along a random
// direction; points closer than 0.5 to the bisecting line, or past it, are
// re-drawn, so the set is linearly separable with a gap.
Dataset make_blobs(std::size_t n, double separation, std::uint64_t seed);

struct CharCorpus {
  Dataset data;        // inputs (N,T) symbol ids, labels the next symbol per step
  std::string vocab;   // sorted distinct characters
};
CharCorpus make_char_dataset(const std::string& text, std::size_t seq_len);
CharCorpus load_char_text(const std::string& path, std::size_t seq_len);

struct Splits {
  Dataset train, val, test;
  std::vector<std::size_t> train_idx, val_idx, test_idx;
};
// Random disjoint split covering every index; fractions must sum to 1.
Splits split_dataset(const Dataset& d, double train, double val, double test, std::uint64_t seed);

// Fisher-Yates with a fixed generator, identical on every platform.
void shuffle_indices(std::vector<std::size_t>& idx, std::uint64_t& state);
std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace projnet
