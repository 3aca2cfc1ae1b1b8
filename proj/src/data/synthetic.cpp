#include "priordepth/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "priordepth/core/rng.hpp"

namespace priordepth {

namespace {

struct Bump {
  double cx, cy, radius, amplitude;
};

// coarse value-noise grid sampled bilinearly
struct ShadeField {
  int gw, gh;
  std::vector<double> values;
  double at(double u, double v) const {  // u, v in [0,1]
    const double gx = u * (gw - 1), gy = v * (gh - 1);
    const int x0 = std::min(static_cast<int>(gx), gw - 2);
    const int y0 = std::min(static_cast<int>(gy), gh - 2);
    const double tx = gx - x0, ty = gy - y0;
    const auto g = [&](int x, int y) { return values[static_cast<std::size_t>(y) * gw + x]; };
    return (1 - ty) * ((1 - tx) * g(x0, y0) + tx * g(x0 + 1, y0)) +
           ty * ((1 - tx) * g(x0, y0 + 1) + tx * g(x0 + 1, y0 + 1));
  }
};

DepthSample make_sample(std::uint64_t seed, int index, int width, int height, int n_prior) {
  auto rng = make_rng(seed, static_cast<std::uint64_t>(index));
  DepthSample s;
  char id[16];
  std::snprintf(id, sizeof(id), "%06d", index);
  s.id = id;
  s.gt_depth = DepthMap(width, height);
  s.validity = MaskMap(width, height, 1);
  s.image = nn::Tensor({3, height, width});

  const double base = rand_uniform(rng, 2.0, 8.0);
  const int n_bumps = rand_int(rng, 3, 8);
  std::vector<Bump> bumps(static_cast<std::size_t>(n_bumps));
  for (auto& b : bumps) {
    b.cx = rand_uniform(rng, 0.0, width - 1.0);
    b.cy = rand_uniform(rng, 0.0, height - 1.0);
    b.radius = rand_uniform(rng, 0.10, 0.30) * std::max(width, height);
    b.amplitude = rand_uniform(rng, -2.0, 2.0);
  }
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      double d = base;
      for (const auto& b : bumps) {
        const double r2 = (x - b.cx) * (x - b.cx) + (y - b.cy) * (y - b.cy);
        d += b.amplitude * std::exp(-r2 / (2.0 * b.radius * b.radius));
      }
      s.gt_depth.at(x, y) = std::max(d, 0.3);
    }

  ShadeField shade;
  shade.gw = 7;
  shade.gh = 5;
  shade.values.resize(static_cast<std::size_t>(shade.gw) * shade.gh);
  for (auto& v : shade.values) v = rand_uniform(rng, 0.55, 1.0);

  double inv_lo = std::numeric_limits<double>::infinity(), inv_hi = 0.0;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double inv = 1.0 / s.gt_depth.at(x, y);
      inv_lo = std::min(inv_lo, inv);
      inv_hi = std::max(inv_hi, inv);
    }
  const double inv_span = inv_hi > inv_lo ? inv_hi - inv_lo : 1.0;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double invn = (1.0 / s.gt_depth.at(x, y) - inv_lo) / inv_span;
      const double sh =
          shade.at(x / std::max(1.0, width - 1.0), y / std::max(1.0, height - 1.0));
      const double lum = invn * sh;
      s.image.at(0, y, x) = std::clamp(0.45 * lum + 0.03, 0.0, 1.0);
      s.image.at(1, y, x) = std::clamp(0.85 * lum + 0.08, 0.0, 1.0);
      s.image.at(2, y, x) = std::clamp(0.65 * lum + 0.05, 0.0, 1.0);
    }

  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      if (rand_unit(rng) < 0.05) s.validity.at(x, y) = 0;

  std::vector<std::size_t> valid_pixels;
  valid_pixels.reserve(s.validity.size());
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      if (s.validity.at(x, y))
        valid_pixels.push_back(static_cast<std::size_t>(y) * width + x);
  const auto picks =
      sample_indices(rng, valid_pixels.size(),
                     std::min<std::size_t>(valid_pixels.size(), static_cast<std::size_t>(n_prior)));
  s.prior.source_image_id = s.id;
  for (auto p : picks) {
    const int x = static_cast<int>(valid_pixels[p] % width);
    const int y = static_cast<int>(valid_pixels[p] / width);
    s.prior.points.push_back(
        {static_cast<double>(x), static_cast<double>(y), s.gt_depth.at(x, y)});
  }
  return s;
}

}  // namespace

std::vector<DepthSample> generate_synthetic(std::uint64_t seed, int count, int width,
                                            int height, int n_prior) {
  if (count < 1) throw std::invalid_argument("generate_synthetic: count must be >= 1");
  if (width < 8 || height < 8)
    throw std::invalid_argument("generate_synthetic: size too small");
  if (n_prior < 0) throw std::invalid_argument("generate_synthetic: n_prior must be >= 0");
  std::vector<DepthSample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(make_sample(seed, i, width, height, n_prior));
  return out;
}

}  // namespace priordepth
