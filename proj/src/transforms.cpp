#include "projnet/transforms.hpp"

#include <algorithm>
#include <sstream>

#include "projnet/errors.hpp"

namespace projnet {

const char* to_string(TransformKind k) {
  switch (k) {
    case TransformKind::Reshape: return "reshape";
    case TransformKind::Transpose: return "transpose";
    case TransformKind::Repeat: return "repeat";
    case TransformKind::Index: return "index";
    case TransformKind::Concat: return "concat";
    case TransformKind::Pad: return "pad";
    case TransformKind::ConvPatch: return "conv_patch";
  }
  return "?";
}

std::size_t Transform::outer() const {
  std::size_t n = 1;
  for (std::size_t d = 0; d < axis_; ++d) n *= out_[d];
  return n;
}

std::size_t Transform::inner() const {
  std::size_t n = 1;
  for (std::size_t d = axis_ + 1; d < out_.size(); ++d) n *= out_[d];
  return n;
}

Transform Transform::reshape(const Shape& in, Shape out) {
  if (numel(in) != numel(out)) throw ShapeError("reshape " + shape_str(in) + " -> " + shape_str(out));
  Transform t;
  t.kind_ = TransformKind::Reshape;
  t.ins_ = {in};
  t.out_ = std::move(out);
  return t;
}

Transform Transform::transpose(const Shape& in, std::vector<std::size_t> perm) {
  auto sorted = perm;
  std::sort(sorted.begin(), sorted.end());
  bool ok = perm.size() == in.size();
  for (std::size_t i = 0; ok && i < sorted.size(); ++i) ok = sorted[i] == i;
  if (!ok) throw ShapeError("transpose: bad permutation for " + shape_str(in));
  Transform t;
  t.kind_ = TransformKind::Transpose;
  t.ins_ = {in};
  for (auto p : perm) t.out_.push_back(in[p]);
  t.perm_ = std::move(perm);
  return t;
}

Transform Transform::repeat(const Shape& in, std::size_t axis, std::size_t k) {
  if (axis >= in.size() || in[axis] != 1)
    throw ShapeError("repeat: axis " + std::to_string(axis) + " of " + shape_str(in) + " must have extent 1");
  if (k == 0) throw ShapeError("repeat: count must be positive");
  Transform t;
  t.kind_ = TransformKind::Repeat;
  t.ins_ = {in};
  t.out_ = in;
  t.out_[axis] = k;
  t.axis_ = axis;
  t.k_ = k;
  return t;
}

Transform Transform::index(const Shape& in, std::size_t axis, std::vector<std::size_t> ids) {
  if (axis >= in.size()) throw ShapeError("index: axis out of range for " + shape_str(in));
  for (auto i : ids)
    if (i >= in[axis]) throw ShapeError("index: id " + std::to_string(i) + " out of range for " + shape_str(in));
  Transform t;
  t.kind_ = TransformKind::Index;
  t.ins_ = {in};
  t.out_ = in;
  t.out_[axis] = ids.size();
  t.axis_ = axis;
  t.ids_ = std::move(ids);
  return t;
}

Transform Transform::concat(std::vector<Shape> ins, std::size_t axis) {
  if (ins.empty()) throw ShapeError("concat: no inputs");
  const Shape& s0 = ins[0];
  if (axis >= s0.size()) throw ShapeError("concat: axis out of range for " + shape_str(s0));
  std::size_t total = 0;
  for (const auto& s : ins) {
    bool ok = s.size() == s0.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == s0[d];
    if (!ok) throw ShapeError("concat: " + shape_str(s) + " incompatible with " + shape_str(s0));
    total += s[axis];
  }
  Transform t;
  t.kind_ = TransformKind::Concat;
  t.out_ = s0;
  t.out_[axis] = total;
  t.ins_ = std::move(ins);
  t.axis_ = axis;
  return t;
}

Transform Transform::pad(const Shape& in, std::vector<std::pair<std::size_t, std::size_t>> pads) {
  if (pads.size() != in.size()) throw ShapeError("pad: need one (before, after) pair per axis of " + shape_str(in));
  Transform t;
  t.kind_ = TransformKind::Pad;
  t.ins_ = {in};
  for (std::size_t d = 0; d < in.size(); ++d) t.out_.push_back(in[d] + pads[d].first + pads[d].second);
  t.pads_ = std::move(pads);
  return t;
}

Transform Transform::conv_patch(const Shape& in, std::size_t kh, std::size_t kw) {
  if (in.size() != 4) throw ShapeError("conv_patch: expected (N,H,W,C), got " + shape_str(in));
  if (kh == 0 || kw == 0 || in[1] < kh || in[2] < kw)
    throw ShapeError("conv_patch: window larger than input " + shape_str(in));
  Transform t;
  t.kind_ = TransformKind::ConvPatch;
  t.ins_ = {in};
  t.out_ = {in[0], in[1] - kh + 1, in[2] - kw + 1, kh * kw * in[3]};
  t.kh_ = kh;
  t.kw_ = kw;
  return t;
}

std::string Transform::describe() const {
  std::ostringstream os;
  os << to_string(kind_);
  switch (kind_) {
    case TransformKind::Repeat: os << "(axis=" << axis_ << ",k=" << k_ << ")"; break;
    case TransformKind::Index: os << "(axis=" << axis_ << ",n=" << ids_.size() << ")"; break;
    case TransformKind::Concat: os << "(axis=" << axis_ << ",parts=" << ins_.size() << ")"; break;
    case TransformKind::ConvPatch: os << "(" << kh_ << "x" << kw_ << ")"; break;
    case TransformKind::Transpose:
      os << "(";
      for (std::size_t i = 0; i < perm_.size(); ++i) os << (i ? "," : "") << perm_[i];
      os << ")";
      break;
    default: break;
  }
  return os.str();
}

Tensor Transform::forward(std::span<const Tensor* const> inputs) const {
  if (inputs.size() != ins_.size()) throw ShapeError(std::string(to_string(kind_)) + ": wrong input count");
  Tensor out(out_);
  for (std::size_t s = 0; s < ins_.size(); ++s) {
    if (inputs[s]->shape() != ins_[s] && numel(inputs[s]->shape()) != numel(ins_[s]))
      throw ShapeError(std::string(to_string(kind_)) + ": input " + shape_str(inputs[s]->shape()) +
                       " does not match " + shape_str(ins_[s]));
    const double* x = inputs[s]->data();
    double* y = out.data();
    for_each_pair(s, [&](std::size_t o, std::size_t i) { y[o] = x[i]; });
  }
  return out;
}

void Transform::forward_runs(std::size_t slot, const double* x, const RunSink& sink,
                             std::vector<double>& scratch) const {
  switch (kind_) {
    case TransformKind::Reshape:
      sink(0, x, numel(out_));
      return;
    case TransformKind::Repeat: {
      std::size_t a_n = outer(), b_n = inner();
      for (std::size_t a = 0; a < a_n; ++a)
        for (std::size_t r = 0; r < k_; ++r) sink((a * k_ + r) * b_n, x + a * b_n, b_n);
      return;
    }
    case TransformKind::Concat: {
      std::size_t a_n = outer(), b_n = inner(), off = 0;
      for (std::size_t s = 0; s < slot; ++s) off += ins_[s][axis_];
      std::size_t len = ins_[slot][axis_] * b_n, row = out_[axis_] * b_n;
      for (std::size_t a = 0; a < a_n; ++a) sink(a * row + off * b_n, x + a * len, len);
      return;
    }
    default: {
      scratch.assign(numel(out_), 0.0);
      double* y = scratch.data();
      for_each_pair(slot, [&](std::size_t o, std::size_t i) { y[o] = x[i]; });
      sink(0, y, scratch.size());
      return;
    }
  }
}

void Transform::adjoint_mean(std::size_t slot, const double* y, const double* ycount,
                             MeanAccumulator& acc) const {
  if (kind_ == TransformKind::Repeat && ycount == nullptr) {
    // mean over replicas as ref + mean deviation: exact when replicas agree
    std::size_t a_n = outer(), b_n = inner();
    std::vector<double> dev(b_n);
    for (std::size_t a = 0; a < a_n; ++a) {
      const double* ref = y + a * k_ * b_n;
      std::fill(dev.begin(), dev.end(), 0.0);
      for (std::size_t r = 1; r < k_; ++r) {
        const double* row = ref + r * b_n;
        for (std::size_t b = 0; b < b_n; ++b) dev[b] += row[b] - ref[b];
      }
      double k = static_cast<double>(k_);
      for (std::size_t b = 0; b < b_n; ++b) acc.add(a * b_n + b, ref[b] + dev[b] / k, k);
    }
    return;
  }
  if (kind_ == TransformKind::Reshape && ycount == nullptr) {
    acc.add_span(y, numel(out_));
    return;
  }
  if (ycount)
    for_each_pair(slot, [&](std::size_t o, std::size_t i) { acc.add(i, y[o], ycount[o]); });
  else
    for_each_pair(slot, [&](std::size_t o, std::size_t i) { acc.add(i, y[o], 1.0); });
}

void Transform::adjoint_count(std::size_t slot, const double* ycount, std::vector<double>& count) const {
  if (ycount)
    for_each_pair(slot, [&](std::size_t o, std::size_t i) { count[i] += ycount[o]; });
  else
    for_each_pair(slot, [&](std::size_t, std::size_t i) { count[i] += 1.0; });
}

Tensor Transform::inverse(std::size_t slot, const Tensor& y) const {
  if (y.size() != numel(out_))
    throw ShapeError(std::string(to_string(kind_)) + " inverse: got " + shape_str(y.shape()) + ", expected " +
                     shape_str(out_));
  MeanAccumulator acc(numel(ins_.at(slot)));
  adjoint_mean(slot, y.data(), nullptr, acc);
  for (double c : acc.count)
    if (c == 0)
      throw ContractViolation(std::string(to_string(kind_)) + " inverse: input element has no image");
  return Tensor(ins_[slot], std::move(acc.mean));
}

}  // namespace projnet
