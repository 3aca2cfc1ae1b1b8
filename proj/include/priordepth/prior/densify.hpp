#pragma once

#include "priordepth/core/image.hpp"
#include "priordepth/prior/types.hpp"

namespace priordepth {

// Two-channel dense parameterization of a sparse prior: s1 holds the depth of
// the nearest keypoint, s2 a Gaussian proximity score of the distance to it.
struct PriorMaps {
  DepthMap s1;
  DepthMap s2;
  double sigma = 0.0;  // px

  int width() const { return s1.width(); }
  int height() const { return s1.height(); }
};

struct NearestIndexMap {
  Image2D<std::int32_t> idx;           // nearest keypoint index per pixel
  Image2D<std::int64_t> dist_squared;  // exact integer squared distance
};

// Exact Euclidean nearest keypoint per pixel, computed by a row-wise 1-D pass
// followed by a column-wise lower-envelope pass, both with index propagation.
// Keypoint coordinates are quantized to the nearest pixel; ties in distance go
// to the lowest keypoint index. Throws "empty prior" on an empty point set.
NearestIndexMap nearest_index_map(const std::vector<PriorPoint>& points, int width, int height);

// S1/S2 per the nearest-neighbor depth and Gaussian proximity formulas.
PriorMaps densify(const SparsePrior& prior, int width, int height, double sigma);

// All-zero channels: the no-information encoding used for the 0-prior mode.
PriorMaps zero_prior_maps(int width, int height, double sigma);

// s1 by top-left nearest-neighbor sample per block, s2 by per-block maximum.
// factor must be one of {2,4,8,16} and divide both dimensions.
PriorMaps downsample_prior(const PriorMaps& maps, int factor);

}  // namespace priordepth
