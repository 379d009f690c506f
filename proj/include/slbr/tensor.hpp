#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace slbr {

// Every tensor is NCHW. Parameters use the same layout: conv weights are
// (out, in, kh, kw), per-channel vectors are (1, C, 1, 1).
struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  std::size_t size() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  double* plane(int n, int c) {
    return data_.data() + (static_cast<std::size_t>(n) * shape_.c + c) * shape_.plane();
  }
  const double* plane(int n, int c) const {
    return data_.data() + (static_cast<std::size_t>(n) * shape_.c + c) * shape_.plane();
  }
  double& at(int n, int c, int y, int x) {
    return plane(n, c)[static_cast<std::size_t>(y) * shape_.w + x];
  }
  double at(int n, int c, int y, int x) const {
    return plane(n, c)[static_cast<std::size_t>(y) * shape_.w + x];
  }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  void fill(double v);
  // Copy of batch entries [first, first + count).
  Tensor slice_batch(int first, int count) const;

  bool all_finite() const;
  double min() const;
  double max() const;

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_{0, 0, 0, 0};
  std::vector<double> data_;
};

double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace slbr
