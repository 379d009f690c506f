#include "slbr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "slbr/errors.hpp"

namespace slbr {

std::string Shape::str() const {
  return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) +
         "x" + std::to_string(w);
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(shape), data_(shape.size(), fill) {
  require(shape.n > 0 && shape.c > 0 && shape.h > 0 && shape.w > 0,
          "tensor dims must be positive, got " + shape.str());
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(shape), data_(std::move(values)) {
  require(shape.n > 0 && shape.c > 0 && shape.h > 0 && shape.w > 0,
          "tensor dims must be positive, got " + shape.str());
  require(data_.size() == shape.size(), "tensor data size does not match shape " + shape.str());
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::slice_batch(int first, int count) const {
  require(first >= 0 && count > 0 && first + count <= shape_.n, "batch slice out of range");
  Shape s = shape_;
  s.n = count;
  const std::size_t per = static_cast<std::size_t>(shape_.c) * shape_.plane();
  auto begin = data_.begin() + static_cast<std::ptrdiff_t>(first * per);
  return Tensor(s, std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(count * per)));
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double Tensor::min() const {
  return data_.empty() ? std::numeric_limits<double>::quiet_NaN()
                       : *std::min_element(data_.begin(), data_.end());
}

double Tensor::max() const {
  return data_.empty() ? std::numeric_limits<double>::quiet_NaN()
                       : *std::max_element(data_.begin(), data_.end());
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "max_abs_diff shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace slbr
