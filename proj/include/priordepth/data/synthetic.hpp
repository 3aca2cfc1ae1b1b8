#pragma once

#include <cstdint>
#include <vector>

#include "priordepth/data/sample.hpp"

namespace priordepth {

// Desk-scale synthetic scenes: a base plane between 2 and 8 m plus a handful
// of smooth radial bumps, shaded into an RGB proxy whose intensity tracks
// inverse depth under a green-shifted tint. 5% of pixels become holes; the
// prior samples exact ground truth at random valid pixels. Fully
// deterministic per (seed, index).
std::vector<DepthSample> generate_synthetic(std::uint64_t seed, int count, int width,
                                            int height, int n_prior);

}  // namespace priordepth
