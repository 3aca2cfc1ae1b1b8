#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "priordepth/core/image.hpp"
#include "priordepth/prior/types.hpp"

namespace testsupport {

// O(HWK) reference for the dense prior parameterization: per-pixel argmin over
// quantized sites with the (distance, index) tie-break. Kept independent of
// the two-pass transform it checks.
struct BruteMaps {
  priordepth::DepthMap s1;
  priordepth::DepthMap s2;
  priordepth::Image2D<std::int32_t> idx;
};

inline BruteMaps brute_force_densify(const priordepth::SparsePrior& prior, int width,
                                     int height, double sigma) {
  BruteMaps out{priordepth::DepthMap(width, height),
                priordepth::DepthMap(width, height),
                priordepth::Image2D<std::int32_t>(width, height, -1)};
  const auto quantize = [](double v, int limit) {
    int q = static_cast<int>(std::lround(v));
    return std::min(std::max(q, 0), limit - 1);
  };
  std::vector<std::int64_t> sx(prior.points.size()), sy(prior.points.size());
  for (std::size_t i = 0; i < prior.points.size(); ++i) {
    sx[i] = quantize(prior.points[i].x, width);
    sy[i] = quantize(prior.points[i].y, height);
  }
  const double norm = 1.0 / (sigma * std::sqrt(2.0 * 3.14159265358979323846));
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      std::int64_t best = -1;
      std::int32_t best_idx = -1;
      for (std::size_t i = 0; i < prior.points.size(); ++i) {
        const std::int64_t dx = sx[i] - x, dy = sy[i] - y;
        const std::int64_t d2 = dx * dx + dy * dy;
        if (best < 0 || d2 < best) {
          best = d2;
          best_idx = static_cast<std::int32_t>(i);
        }
      }
      out.idx.at(x, y) = best_idx;
      out.s1.at(x, y) = prior.points[static_cast<std::size_t>(best_idx)].depth;
      out.s2.at(x, y) =
          norm * std::exp(-static_cast<double>(best) / (2.0 * sigma * sigma));
    }
  }
  return out;
}

}  // namespace testsupport
