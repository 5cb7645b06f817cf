#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "projnet/tensor.hpp"

namespace projnet {

enum class TransformKind { Reshape, Transpose, Repeat, Index, Concat, Pad, ConvPatch };

const char* to_string(TransformKind k);

// Running weighted mean per element. Merging identical values leaves the
// mean bitwise unchanged, so consensus of equal replicas is exact.
struct MeanAccumulator {
  std::vector<double> mean;
  std::vector<double> count;

  MeanAccumulator() = default;
  explicit MeanAccumulator(std::size_t n) : mean(n, 0.0), count(n, 0.0) {}

  void reset(std::size_t n) {
    mean.assign(n, 0.0);
    count.assign(n, 0.0);
  }
  void add(std::size_t i, double v, double c) {
    if (c == 0) return;
    double tot = count[i] + c;
    if (count[i] == 0)
      mean[i] = v;
    else
      mean[i] += (v - mean[i]) * (c / tot);
    count[i] = tot;
  }
  void add_span(const double* v, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) add(i, v[i], 1.0);
  }
};

// Receives a contiguous block of transform output: out[offset .. offset+len) = v.
using RunSink = std::function<void(std::size_t offset, const double* v, std::size_t len)>;

// A value-preserving layout change. Every output element is either a copy
// of exactly one input element (from one slot) or a padding zero.
class Transform {
 public:
  static Transform reshape(const Shape& in, Shape out);
  static Transform transpose(const Shape& in, std::vector<std::size_t> perm);
  // The input must have extent 1 along `axis`; the output has extent k there.
  static Transform repeat(const Shape& in, std::size_t axis, std::size_t k);
  static Transform index(const Shape& in, std::size_t axis, std::vector<std::size_t> ids);
  static Transform concat(std::vector<Shape> ins, std::size_t axis);
  static Transform pad(const Shape& in, std::vector<std::pair<std::size_t, std::size_t>> pads);
  // (N,H,W,C) -> (N,H-kh+1,W-kw+1,kh*kw*C), patch layout (dy,dx,c).
  static Transform conv_patch(const Shape& in, std::size_t kh, std::size_t kw);

  TransformKind kind() const { return kind_; }
  const Shape& out_shape() const { return out_; }
  const std::vector<Shape>& in_shapes() const { return ins_; }
  std::size_t arity() const { return ins_.size(); }
  std::string describe() const;

  // Calls fn(out_index, in_index) for every output element copied from `slot`.
  template <class Fn>
  void for_each_pair(std::size_t slot, Fn&& fn) const;

  Tensor forward(std::span<const Tensor* const> inputs) const;
  Tensor forward(const Tensor& x) const {
    const Tensor* p = &x;
    return forward(std::span<const Tensor* const>(&p, 1));
  }

  // Output contribution of one slot as runs. Positions owned by other slots
  // are not emitted; padding zeros are emitted with slot 0.
  void forward_runs(std::size_t slot, const double* x, const RunSink& sink,
                    std::vector<double>& scratch) const;

  // Merges output values y (weights ycount, or 1 when null) back into
  // per-input-element means.
  void adjoint_mean(std::size_t slot, const double* y, const double* ycount, MeanAccumulator& acc) const;

  // Adds the number of output copies of every input element (ycount as
  // above) into count, which must already hold one entry per input element.
  void adjoint_count(std::size_t slot, const double* ycount, std::vector<double>& count) const;

  // Exact inverse for one slot; repeated elements are averaged.
  // Throws ContractViolation when an input element has no image.
  Tensor inverse(std::size_t slot, const Tensor& y) const;

 private:
  TransformKind kind_ = TransformKind::Reshape;
  std::vector<Shape> ins_;
  Shape out_;
  std::size_t axis_ = 0;
  std::size_t k_ = 0;
  std::size_t kh_ = 0, kw_ = 0;
  std::vector<std::size_t> perm_;
  std::vector<std::size_t> ids_;
  std::vector<std::pair<std::size_t, std::size_t>> pads_;

  // outer/inner extents around axis_ of the output
  std::size_t outer() const;
  std::size_t inner() const;
};

template <class Fn>
void Transform::for_each_pair(std::size_t slot, Fn&& fn) const {
  const Shape& in = ins_.at(slot);
  switch (kind_) {
    case TransformKind::Reshape: {
      std::size_t n = numel(in);
      for (std::size_t i = 0; i < n; ++i) fn(i, i);
      break;
    }
    case TransformKind::Transpose: {
      // walk the input in row-major order, tracking the output offset
      std::size_t r = in.size(), n = numel(in);
      if (n == 0) break;
      Shape ost = strides_of(out_), step(r);
      for (std::size_t d = 0; d < r; ++d) step[perm_[d]] = ost[d];
      std::vector<std::size_t> idx(r, 0);
      std::size_t o = 0;
      for (std::size_t i = 0; i < n; ++i) {
        fn(o, i);
        for (std::size_t d = r; d-- > 0;) {
          if (++idx[d] < in[d]) {
            o += step[d];
            break;
          }
          o -= step[d] * (in[d] - 1);
          idx[d] = 0;
        }
      }
      break;
    }
    case TransformKind::Repeat: {
      std::size_t a_n = outer(), b_n = inner();
      for (std::size_t a = 0; a < a_n; ++a)
        for (std::size_t r = 0; r < k_; ++r)
          for (std::size_t b = 0; b < b_n; ++b) fn((a * k_ + r) * b_n + b, a * b_n + b);
      break;
    }
    case TransformKind::Index: {
      std::size_t a_n = outer(), b_n = inner(), v = in[axis_], l_n = ids_.size();
      for (std::size_t a = 0; a < a_n; ++a)
        for (std::size_t l = 0; l < l_n; ++l)
          for (std::size_t b = 0; b < b_n; ++b) fn((a * l_n + l) * b_n + b, (a * v + ids_[l]) * b_n + b);
      break;
    }
    case TransformKind::Concat: {
      std::size_t a_n = outer(), b_n = inner(), off = 0;
      for (std::size_t s = 0; s < slot; ++s) off += ins_[s][axis_];
      std::size_t len = in[axis_] * b_n, row = out_[axis_] * b_n;
      for (std::size_t a = 0; a < a_n; ++a)
        for (std::size_t j = 0; j < len; ++j) fn(a * row + off * b_n + j, a * len + j);
      break;
    }
    case TransformKind::Pad: {
      std::size_t r = in.size(), n = numel(in);
      if (n == 0) break;
      Shape ost = strides_of(out_);
      std::size_t o = 0;
      for (std::size_t d = 0; d < r; ++d) o += pads_[d].first * ost[d];
      std::vector<std::size_t> idx(r, 0);
      for (std::size_t i = 0; i < n; ++i) {
        fn(o, i);
        for (std::size_t d = r; d-- > 0;) {
          if (++idx[d] < in[d]) {
            o += ost[d];
            break;
          }
          o -= ost[d] * (in[d] - 1);
          idx[d] = 0;
        }
      }
      break;
    }
    case TransformKind::ConvPatch: {
      std::size_t N = in[0], H = in[1], W = in[2], C = in[3];
      std::size_t Ho = out_[1], Wo = out_[2], K = out_[3];
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t i = 0; i < Ho; ++i)
          for (std::size_t j = 0; j < Wo; ++j) {
            std::size_t obase = ((n * Ho + i) * Wo + j) * K;
            for (std::size_t dy = 0; dy < kh_; ++dy)
              for (std::size_t dx = 0; dx < kw_; ++dx) {
                std::size_t ibase = ((n * H + i + dy) * W + j + dx) * C;
                std::size_t pbase = obase + (dy * kw_ + dx) * C;
                for (std::size_t c = 0; c < C; ++c) fn(pbase + c, ibase + c);
              }
          }
      break;
    }
  }
}

}  // namespace projnet
