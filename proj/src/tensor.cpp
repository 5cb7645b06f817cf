#include "projnet/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "projnet/errors.hpp"

namespace projnet {

std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  if (s.size() == 1) os << ',';
  os << ')';
  return os.str();
}

Shape strides_of(const Shape& s) {
  Shape st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != numel(shape_))
    throw ShapeError("tensor data has " + std::to_string(data_.size()) + " values, shape " +
                     shape_str(shape_) + " needs " + std::to_string(numel(shape_)));
}

Tensor Tensor::vector(std::vector<double> v) {
  Shape s{v.size()};
  return Tensor(std::move(s), std::move(v));
}

std::size_t Tensor::flat(std::initializer_list<std::size_t> idx) const {
  if (idx.size() != shape_.size()) throw ShapeError("index rank mismatch for shape " + shape_str(shape_));
  std::size_t f = 0, d = 0;
  for (auto i : idx) {
    if (i >= shape_[d]) throw std::out_of_range("tensor index out of range");
    f = f * shape_[d++] + i;
  }
  return f;
}

double& Tensor::at(std::initializer_list<std::size_t> idx) { return data_[flat(idx)]; }
double Tensor::at(std::initializer_list<std::size_t> idx) const { return data_[flat(idx)]; }

Tensor Tensor::reshaped(Shape s) const {
  if (numel(s) != data_.size())
    throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(s));
  return Tensor(std::move(s), data_);
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

bool Tensor::operator==(const Tensor& o) const {
  return shape_ == o.shape_ &&
         (data_.empty() || std::memcmp(data_.data(), o.data_.data(), data_.size() * sizeof(double)) == 0);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw ShapeError("max_abs_diff size mismatch");
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace projnet
