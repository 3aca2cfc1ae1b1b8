#include "priordepth/data/augment.hpp"

#include <algorithm>
#include <stdexcept>

#include "priordepth/core/rng.hpp"

namespace priordepth {

void AugmentConfig::validate() const {
  const auto contains_one = [](double lo, double hi) { return lo <= 1.0 && 1.0 <= hi; };
  if (p_hflip < 0.0 || p_hflip > 1.0 || p_prior_dropout < 0.0 || p_prior_dropout > 1.0)
    throw std::invalid_argument("augment: probabilities must be in [0,1]");
  if (!contains_one(brightness_lo, brightness_hi) ||
      !contains_one(channel_gain_lo, channel_gain_hi) ||
      !contains_one(depth_scale_lo, depth_scale_hi))
    throw std::invalid_argument("augment: every range must contain 1.0");
}

namespace {

template <typename T>
void mirror_rows(Image2D<T>& img) {
  for (int y = 0; y < img.height(); ++y) {
    T* row = img.row(y);
    std::reverse(row, row + img.width());
  }
}

}  // namespace

DepthSample augment(const DepthSample& sample, const AugmentConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  DepthSample out = sample;
  const int w = sample.width(), h = sample.height();

  if (rand_unit(rng) < cfg.p_hflip) {
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w / 2; ++x)
          std::swap(out.image.at(c, y, x), out.image.at(c, y, w - 1 - x));
    mirror_rows(out.gt_depth);
    mirror_rows(out.validity);
    for (auto& p : out.prior.points) p.x = (w - 1) - p.x;
  }

  const double brightness = rand_uniform(rng, cfg.brightness_lo, cfg.brightness_hi);
  const double gains[3] = {rand_uniform(rng, cfg.channel_gain_lo, cfg.channel_gain_hi),
                           rand_uniform(rng, cfg.channel_gain_lo, cfg.channel_gain_hi),
                           rand_uniform(rng, cfg.channel_gain_lo, cfg.channel_gain_hi)};
  for (int c = 0; c < 3; ++c) {
    const double g = brightness * gains[c];
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        out.image.at(c, y, x) = std::clamp(out.image.at(c, y, x) * g, 0.0, 1.0);
  }

  // one shared factor keeps prior depths consistent with the scaled scene
  const double depth_scale = rand_uniform(rng, cfg.depth_scale_lo, cfg.depth_scale_hi);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out.gt_depth.at(x, y) *= depth_scale;
  for (auto& p : out.prior.points) p.depth *= depth_scale;

  if (rand_unit(rng) < cfg.p_prior_dropout) out.prior.points.clear();
  return out;
}

}  // namespace priordepth
