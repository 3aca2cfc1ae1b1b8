#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace priordepth {

// Row-major 2-D grid; at(x, y) addresses column x of row y.
template <typename T>
class Image2D {
 public:
  Image2D() = default;
  Image2D(int width, int height, T fill = T{})
      : width_(width),
        height_(height),
        data_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill) {
    if (width <= 0 || height <= 0) throw std::invalid_argument("Image2D: non-positive size");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& at(int x, int y) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  const T& at(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  T* row(int y) { return data_.data() + static_cast<std::size_t>(y) * width_; }
  const T* row(int y) const { return data_.data() + static_cast<std::size_t>(y) * width_; }

  bool same_shape(const Image2D& o) const { return width_ == o.width_ && height_ == o.height_; }
  bool contains(int x, int y) const { return x >= 0 && x < width_ && y >= 0 && y < height_; }

  void fill(T v) { data_.assign(data_.size(), v); }

  bool operator==(const Image2D& o) const {
    return width_ == o.width_ && height_ == o.height_ && data_ == o.data_;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using DepthMap = Image2D<double>;
using MaskMap = Image2D<std::uint8_t>;  // nonzero = valid pixel
using GrayImage = Image2D<std::uint8_t>;

// A pixel is usable as ground truth when marked valid and carrying a
// finite positive depth.
inline bool valid_depth_at(const DepthMap& d, const MaskMap& m, int x, int y) {
  const double v = d.at(x, y);
  return m.at(x, y) != 0 && std::isfinite(v) && v > 0.0;
}

}  // namespace priordepth
