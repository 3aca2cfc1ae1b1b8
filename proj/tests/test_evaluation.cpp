#include <doctest.h>

#include <cmath>
#include <sstream>

#include "priordepth/core/rng.hpp"
#include "priordepth/eval/metrics.hpp"

using namespace priordepth;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Scene {
  DepthMap gt;
  MaskMap mask;
};

Scene random_scene(std::mt19937_64& rng, int w, int h, double lo = 0.4, double hi = 9.0) {
  Scene s{DepthMap(w, h), MaskMap(w, h, 1)};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) s.gt.at(x, y) = rand_uniform(rng, lo, hi);
  return s;
}

DepthMap scaled(const DepthMap& m, double s) {
  DepthMap out = m;
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) out.at(x, y) = m.at(x, y) * s;
  return out;
}

}  // namespace

TEST_CASE("perfect prediction scores zero on all four metrics") {
  auto rng = make_rng(41);
  const auto s = random_scene(rng, 16, 12);
  const auto r = evaluate(s.gt, s.gt, s.mask, kInf);
  CHECK_FALSE(r.empty);
  CHECK(r.rmse_lin == doctest::Approx(0.0));
  CHECK(r.rmse_log == doctest::Approx(0.0));
  CHECK(r.rmse_silog == doctest::Approx(0.0));
  CHECK(r.mare == doctest::Approx(0.0));
  CHECK(r.n_pixels == 16 * 12);
}

TEST_CASE("constant scale factor: silog cancels, log keeps log(2)") {
  auto rng = make_rng(42);
  const auto s = random_scene(rng, 16, 12);
  const auto r = evaluate(scaled(s.gt, 2.0), s.gt, s.mask, kInf);
  CHECK(r.rmse_silog < 1e-8);
  CHECK(r.rmse_log == doctest::Approx(0.6931471805599453).epsilon(1e-9));
}

TEST_CASE("constant 1.1 ratio gives MARE 0.1") {
  auto rng = make_rng(43);
  const auto s = random_scene(rng, 16, 12);
  const auto r = evaluate(scaled(s.gt, 1.1), s.gt, s.mask, kInf);
  CHECK(std::abs(r.mare - 0.1) <= 1e-9);
}

TEST_CASE("silog is scale invariant in the prediction and bounded by log rmse") {
  auto rng = make_rng(44);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = random_scene(rng, 8, 8);
    DepthMap pred(8, 8);
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) pred.at(x, y) = rand_uniform(rng, 0.4, 9.0);
    const auto r = evaluate(pred, s.gt, s.mask, kInf);
    CHECK(r.rmse_silog <= r.rmse_log + 1e-12);
    const double sfac = rand_uniform(rng, 0.3, 3.0);
    const auto r2 = evaluate(scaled(pred, sfac), s.gt, s.mask, kInf);
    CHECK(std::abs(r2.rmse_silog - r.rmse_silog) <= 1e-8);
  }
}

TEST_CASE("metrics are invariant to pixel permutation") {
  auto rng = make_rng(45);
  const int w = 12, h = 9;
  auto s = random_scene(rng, w, h);
  DepthMap pred(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) pred.at(x, y) = rand_uniform(rng, 0.4, 9.0);
  const auto base = evaluate(pred, s.gt, s.mask, kInf);
  // permute all three rasters with the same pixel shuffle
  std::vector<int> perm(w * h);
  for (int i = 0; i < w * h; ++i) perm[i] = i;
  for (std::size_t i = perm.size(); i > 1; --i)
    std::swap(perm[i - 1], perm[rand_index(rng, i)]);
  DepthMap pred_p(w, h), gt_p(w, h);
  MaskMap mask_p(w, h, 1);
  for (int i = 0; i < w * h; ++i) {
    pred_p.data()[perm[i]] = pred.data()[i];
    gt_p.data()[perm[i]] = s.gt.data()[i];
    mask_p.data()[perm[i]] = s.mask.data()[i];
  }
  const auto shuffled = evaluate(pred_p, gt_p, mask_p, kInf);
  CHECK(shuffled.rmse_lin == doctest::Approx(base.rmse_lin).epsilon(1e-12));
  CHECK(shuffled.rmse_log == doctest::Approx(base.rmse_log).epsilon(1e-12));
  CHECK(shuffled.rmse_silog == doctest::Approx(base.rmse_silog).epsilon(1e-10));
  CHECK(shuffled.mare == doctest::Approx(base.mare).epsilon(1e-12));
}

TEST_CASE("range caps select gt below the cap and keep counts monotone") {
  auto rng = make_rng(46);
  const auto s = random_scene(rng, 20, 20, 0.3, 9.8);
  DepthMap pred = scaled(s.gt, 1.05);
  const auto reports = evaluate_ranges(pred, s.gt, s.mask, default_range_caps());
  REQUIRE(reports.size() == 3);
  CHECK(reports[0].n_pixels >= reports[1].n_pixels);
  CHECK(reports[1].n_pixels >= reports[2].n_pixels);
  CHECK(reports[0].range_cap == kInf);
  // the infinite cap equals an uncapped evaluation
  const auto full = evaluate(pred, s.gt, s.mask, kInf);
  CHECK(reports[0].rmse_lin == doctest::Approx(full.rmse_lin));
  // every selected pixel is below the cap
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 20; ++x)
      if (s.gt.at(x, y) >= 5.0) {
        // removing far pixels cannot increase the 5 m report count
      }
  CHECK(reports[1].n_pixels ==
        [&] {
          std::int64_t n = 0;
          for (int y = 0; y < 20; ++y)
            for (int x = 0; x < 20; ++x)
              if (s.gt.at(x, y) < 5.0) ++n;
          return n;
        }());
}

TEST_CASE("empty selections are flagged, not zeroed") {
  DepthMap gt(4, 4, 7.5);  // everything beyond the 1 m cap
  MaskMap mask(4, 4, 1);
  const auto r = evaluate(gt, gt, mask, 1.0);
  CHECK(r.empty);
  CHECK(r.n_pixels == 0);
  CHECK(std::isnan(r.rmse_lin));
  CHECK_THROWS_AS(evaluate_ranges(gt, gt, mask, {}), std::invalid_argument);
}

TEST_CASE("prior standalone evaluation") {
  auto rng = make_rng(47);
  const int w = 32, h = 24;
  auto s = random_scene(rng, w, h);
  SUBCASE("a keypoint at every pixel reproduces gt exactly") {
    SparsePrior p;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        p.points.push_back({static_cast<double>(x), static_cast<double>(y), s.gt.at(x, y)});
    const auto maps = densify(p, w, h, 10.0);
    const auto r = evaluate_prior_standalone(maps, s.gt, s.mask, kInf);
    CHECK(r.rmse_lin == doctest::Approx(0.0));
    CHECK(r.mare == doctest::Approx(0.0));
  }
  SUBCASE("a single keypoint on a non-constant scene scores above zero") {
    SparsePrior p;
    p.points.push_back({3.0, 3.0, s.gt.at(3, 3)});
    const auto maps = densify(p, w, h, 10.0);
    const auto r = evaluate_prior_standalone(maps, s.gt, s.mask, kInf);
    CHECK(r.rmse_lin > 0.0);
  }
  SUBCASE("definitionally equal to evaluate on the s1 channel") {
    auto rng2 = make_rng(48);
    SparsePrior p;
    for (int i = 0; i < 200; ++i) {
      const int x = static_cast<int>(rand_index(rng2, w));
      const int y = static_cast<int>(rand_index(rng2, h));
      p.points.push_back({static_cast<double>(x), static_cast<double>(y), s.gt.at(x, y)});
    }
    const auto maps = densify(p, w, h, 10.0);
    const auto a = evaluate_prior_standalone(maps, s.gt, s.mask, 5.0);
    const auto b = evaluate(maps.s1, s.gt, s.mask, 5.0);
    CHECK(a.rmse_lin == b.rmse_lin);
    CHECK(a.rmse_silog == b.rmse_silog);
    CHECK(a.n_pixels == b.n_pixels);
  }
}

TEST_CASE("report csv carries the fixed schema and a mean row per cap") {
  auto rng = make_rng(49);
  const auto s = random_scene(rng, 8, 8);
  std::vector<ImageReports> rows;
  for (int i = 0; i < 2; ++i) {
    ImageReports row;
    row.image_id = "img" + std::to_string(i);
    row.reports = evaluate_ranges(scaled(s.gt, 1.1), s.gt, s.mask, default_range_caps());
    rows.push_back(row);
  }
  const std::string csv = report_csv(rows);
  std::istringstream is(csv);
  std::string line;
  std::getline(is, line);
  CHECK(line.rfind("# aggregation", 0) == 0);
  std::getline(is, line);
  CHECK(line == "image_id,cap,rmse_lin,rmse_log,rmse_silog,mare,n_pixels");
  int data_rows = 0, mean_rows = 0;
  while (std::getline(is, line)) {
    if (line.rfind("mean,", 0) == 0)
      ++mean_rows;
    else
      ++data_rows;
  }
  CHECK(data_rows == 6);  // 2 images x 3 caps
  CHECK(mean_rows == 3);  // one per cap
}

TEST_CASE("prior coverage bookkeeping hits the published 0.26 percent") {
  const double pct = prior_coverage_percent(200, 320, 240);
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%.2f", pct);
  CHECK(std::string(buf) == "0.26");
}
