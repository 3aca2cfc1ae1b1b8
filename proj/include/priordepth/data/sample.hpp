#pragma once

#include <string>

#include "priordepth/core/image.hpp"
#include "priordepth/nn/tensor.hpp"
#include "priordepth/prior/types.hpp"

namespace priordepth {

// One training/evaluation unit: RGB in [0,1], metric ground truth, validity
// mask, and the sparse prior in pixel coordinates of the same resolution.
struct DepthSample {
  nn::Tensor image;  // [3, H, W]
  DepthMap gt_depth;
  MaskMap validity;
  SparsePrior prior;
  std::string id;

  int width() const { return gt_depth.width(); }
  int height() const { return gt_depth.height(); }
};

}  // namespace priordepth
