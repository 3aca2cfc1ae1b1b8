#include "priordepth/prior/densify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace priordepth {

namespace {

constexpr double kTwoPi = 6.28318530717958647692;

int quantize(double v, int limit) {
  int q = static_cast<int>(std::lround(v));
  if (q < 0) q = 0;
  if (q > limit - 1) q = limit - 1;
  return q;
}

// Boundary abscissa between the column parabolas of rows a < b with squared
// row distances ga2, gb2: s = (b^2 + gb2 - a^2 - ga2) / (2(b - a)).
struct Boundary {
  std::int64_t num;
  std::int64_t den;  // > 0
};

bool boundary_less_than_int(const Boundary& z, std::int64_t y) { return z.num < y * z.den; }
bool boundary_equals_int(const Boundary& z, std::int64_t y) { return z.num == y * z.den; }
bool boundary_less_than(const Boundary& a, const Boundary& b) {
  return a.num * b.den < b.num * a.den;
}

}  // namespace

NearestIndexMap nearest_index_map(const std::vector<PriorPoint>& points, int width, int height) {
  if (points.empty()) throw std::invalid_argument("empty prior");
  const int w = width, h = height;

  // Seed grid: lowest keypoint index per occupied pixel.
  Image2D<std::int32_t> seed(w, h, -1);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const int x = quantize(points[i].x, w);
    const int y = quantize(points[i].y, h);
    if (seed.at(x, y) < 0) seed.at(x, y) = static_cast<std::int32_t>(i);
  }

  // Pass 1: per row, nearest occupied pixel along the row, minimizing
  // (|dx|, keypoint index) lexicographically.
  const std::int32_t kNone = -1;
  Image2D<std::int32_t> row_site(w, h, kNone);
  Image2D<std::int32_t> row_dist(w, h, 0);
  for (int y = 0; y < h; ++y) {
    int last_pos = -1;
    std::int32_t last_idx = kNone;
    for (int x = 0; x < w; ++x) {
      if (seed.at(x, y) >= 0) {
        last_pos = x;
        last_idx = seed.at(x, y);
      }
      row_site.at(x, y) = last_idx;
      row_dist.at(x, y) = last_idx == kNone ? 0 : x - last_pos;
    }
    int next_pos = -1;
    std::int32_t next_idx = kNone;
    for (int x = w - 1; x >= 0; --x) {
      if (seed.at(x, y) >= 0) {
        next_pos = x;
        next_idx = seed.at(x, y);
      }
      if (next_idx == kNone) continue;
      const int dr = next_pos - x;
      const std::int32_t cur = row_site.at(x, y);
      if (cur == kNone || dr < row_dist.at(x, y) ||
          (dr == row_dist.at(x, y) && next_idx < cur)) {
        row_site.at(x, y) = next_idx;
        row_dist.at(x, y) = dr;
      }
    }
  }

  NearestIndexMap out;
  out.idx = Image2D<std::int32_t>(w, h, 0);
  out.dist_squared = Image2D<std::int64_t>(w, h, 0);

  // Pass 2: per column, lower envelope of parabolas rooted at rows that carry
  // a site, keeping parabolas that are minimal only at a single point so that
  // exact distance ties can still be broken by keypoint index.
  std::vector<int> hull_row(h);
  std::vector<Boundary> z(h, Boundary{0, 1});  // z[0] is conceptually -inf, never read
  const auto sq = [](std::int64_t v) { return v * v; };
  for (int x = 0; x < w; ++x) {
    int k = -1;
    for (int y = 0; y < h; ++y) {
      if (row_site.at(x, y) == kNone) continue;
      const std::int64_t g2 = sq(row_dist.at(x, y));
      Boundary s{0, 1};
      while (k >= 0) {
        const int a = hull_row[k];
        s.den = 2 * static_cast<std::int64_t>(y - a);
        s.num = sq(y) + g2 - sq(a) - sq(row_dist.at(x, a));
        // pop only strictly dominated parabolas; one that stays minimal at a
        // single boundary point is kept so its index can still win a tie there
        if (k > 0 && boundary_less_than(s, z[k])) {
          --k;
          continue;
        }
        break;
      }
      ++k;
      hull_row[k] = y;
      z[k] = s;
    }
    if (k < 0) throw std::logic_error("nearest_index_map: column without sites");

    const int top = k;
    int ptr = 0;
    for (int y = 0; y < h; ++y) {
      while (ptr < top && boundary_less_than_int(z[ptr + 1], y)) ++ptr;
      int best_row = hull_row[ptr];
      std::int64_t gg = static_cast<std::int64_t>(row_dist.at(x, best_row)) * row_dist.at(x, best_row);
      std::int64_t best_d2 = static_cast<std::int64_t>(y - best_row) * (y - best_row) + gg;
      std::int32_t best_idx = row_site.at(x, best_row);
      for (int t = ptr + 1; t <= top && boundary_equals_int(z[t], y); ++t) {
        const int r = hull_row[t];
        const std::int32_t cand = row_site.at(x, r);
        if (cand < best_idx) best_idx = cand;
      }
      out.idx.at(x, y) = best_idx;
      out.dist_squared.at(x, y) = best_d2;
    }
  }
  return out;
}

PriorMaps densify(const SparsePrior& prior, int width, int height, double sigma) {
  if (sigma <= 0.0) throw std::invalid_argument("densify: sigma must be positive");
  if (prior.empty()) throw std::invalid_argument("empty prior");
  const NearestIndexMap nn = nearest_index_map(prior.points, width, height);
  PriorMaps maps;
  maps.s1 = DepthMap(width, height, 0.0);
  maps.s2 = DepthMap(width, height, 0.0);
  maps.sigma = sigma;
  const double norm = 1.0 / (sigma * std::sqrt(kTwoPi));
  const double inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::int32_t i = nn.idx.at(x, y);
      maps.s1.at(x, y) = prior.points[static_cast<std::size_t>(i)].depth;
      maps.s2.at(x, y) =
          norm * std::exp(-static_cast<double>(nn.dist_squared.at(x, y)) * inv_two_sigma2);
    }
  }
  return maps;
}

PriorMaps zero_prior_maps(int width, int height, double sigma) {
  PriorMaps maps;
  maps.s1 = DepthMap(width, height, 0.0);
  maps.s2 = DepthMap(width, height, 0.0);
  maps.sigma = sigma;
  return maps;
}

PriorMaps downsample_prior(const PriorMaps& maps, int factor) {
  if (factor != 2 && factor != 4 && factor != 8 && factor != 16)
    throw std::invalid_argument("downsample_prior: factor must be one of {2,4,8,16}");
  const int w = maps.width(), h = maps.height();
  if (w % factor != 0 || h % factor != 0)
    throw std::invalid_argument("downsample_prior: factor must divide both dimensions");
  const int ow = w / factor, oh = h / factor;
  PriorMaps out;
  out.s1 = DepthMap(ow, oh, 0.0);
  out.s2 = DepthMap(ow, oh, 0.0);
  out.sigma = maps.sigma;
  for (int by = 0; by < oh; ++by) {
    for (int bx = 0; bx < ow; ++bx) {
      out.s1.at(bx, by) = maps.s1.at(bx * factor, by * factor);
      double mx = -std::numeric_limits<double>::infinity();
      for (int dy = 0; dy < factor; ++dy)
        for (int dx = 0; dx < factor; ++dx)
          mx = std::max(mx, maps.s2.at(bx * factor + dx, by * factor + dy));
      out.s2.at(bx, by) = mx;
    }
  }
  return out;
}

}  // namespace priordepth
