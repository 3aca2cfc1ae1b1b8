#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace priordepth::nn {

using Shape = std::vector<int>;

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

// Dense row-major double tensor. Double precision throughout: the gradient
// checks and the densification oracle run at 64-bit tolerances.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    for (int d : shape_)
      if (d <= 0) throw std::invalid_argument("Tensor: non-positive dim");
    data_.assign(static_cast<std::size_t>(shape_numel(shape_)), 0.0);
  }
  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<std::int64_t>(data_.size()) != shape_numel(shape_))
      throw std::invalid_argument("Tensor: data size mismatch");
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor full(Shape shape, double v) {
    Tensor t(std::move(shape));
    t.data_.assign(t.data_.size(), v);
    return t;
  }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool defined() const { return !shape_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  // (row, col) for rank-2, (c, h, w) for rank-3.
  double& at(int r, int c) { return data_[static_cast<std::size_t>(r) * dim(1) + c]; }
  double at(int r, int c) const { return data_[static_cast<std::size_t>(r) * dim(1) + c]; }
  double& at(int c, int h, int w) {
    return data_[(static_cast<std::size_t>(c) * dim(1) + h) * dim(2) + w];
  }
  double at(int c, int h, int w) const {
    return data_[(static_cast<std::size_t>(c) * dim(1) + h) * dim(2) + w];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  std::string shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
    os << "]";
    return os.str();
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

}  // namespace priordepth::nn
