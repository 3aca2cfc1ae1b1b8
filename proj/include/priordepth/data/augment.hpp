#pragma once

#include <cstdint>
#include <random>

#include "priordepth/data/sample.hpp"

namespace priordepth {

// Training-time random transforms. Every range must contain 1.0 so the
// identity configuration is reachable; the depth scale is shared between
// ground truth and prior depths, which keeps the prior metrically consistent.
struct AugmentConfig {
  double p_hflip = 0.5;
  double brightness_lo = 0.7, brightness_hi = 1.3;
  double channel_gain_lo = 0.9, channel_gain_hi = 1.1;
  double depth_scale_lo = 0.8, depth_scale_hi = 1.2;
  double p_prior_dropout = 0.1;
  std::uint64_t seed = 0;

  void validate() const;

  static AugmentConfig identity() {
    AugmentConfig c;
    c.p_hflip = 0.0;
    c.brightness_lo = c.brightness_hi = 1.0;
    c.channel_gain_lo = c.channel_gain_hi = 1.0;
    c.depth_scale_lo = c.depth_scale_hi = 1.0;
    c.p_prior_dropout = 0.0;
    return c;
  }
};

DepthSample augment(const DepthSample& sample, const AugmentConfig& cfg, std::mt19937_64& rng);

}  // namespace priordepth
