#include <doctest.h>

#include <Eigen/Geometry>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "priordepth/core/errors.hpp"
#include "priordepth/core/rng.hpp"
#include "priordepth/prior/extraction.hpp"
#include "priordepth/prior/prior_io.hpp"

using namespace priordepth;

namespace {

// Synthetic two-view geometry with a known fundamental matrix.
struct TwoView {
  Eigen::Matrix3d f;
  std::vector<PointPair> pairs;
};

TwoView synthesize_two_view(std::mt19937_64& rng, int n) {
  Eigen::Matrix3d k;
  k << 400.0, 0.0, 160.0, 0.0, 400.0, 120.0, 0.0, 0.0, 1.0;
  const Eigen::Vector3d axis =
      Eigen::Vector3d(rand_uniform(rng, -1, 1), rand_uniform(rng, -1, 1),
                      rand_uniform(rng, -1, 1))
          .normalized();
  const Eigen::Matrix3d r = Eigen::AngleAxisd(rand_uniform(rng, 0.05, 0.15), axis).matrix();
  Eigen::Vector3d t(rand_uniform(rng, 0.2, 0.5), rand_uniform(rng, -0.2, 0.2),
                    rand_uniform(rng, -0.1, 0.1));
  Eigen::Matrix3d tx;
  tx << 0, -t.z(), t.y(), t.z(), 0, -t.x(), -t.y(), t.x(), 0;
  TwoView out;
  out.f = k.inverse().transpose() * tx * r * k.inverse();
  out.f /= out.f.norm();
  while (static_cast<int>(out.pairs.size()) < n) {
    const Eigen::Vector3d x(rand_uniform(rng, -2.0, 2.0), rand_uniform(rng, -1.5, 1.5),
                            rand_uniform(rng, 4.0, 10.0));
    const Eigen::Vector3d x2cam = r * x + t;
    if (x2cam.z() <= 0.1) continue;
    const Eigen::Vector3d p1h = k * x;
    const Eigen::Vector3d p2h = k * x2cam;
    out.pairs.push_back(
        {Eigen::Vector2d(p1h.x() / p1h.z(), p1h.y() / p1h.z()),
         Eigen::Vector2d(p2h.x() / p2h.z(), p2h.y() / p2h.z())});
  }
  return out;
}

// Stub detector for interface-level tests.
class StubDetector final : public FeatureDetector {
 public:
  explicit StubDetector(std::vector<Keypoint> kps) : kps_(std::move(kps)) {}
  std::vector<Keypoint> detect(const GrayImage&) const override { return kps_; }

 private:
  std::vector<Keypoint> kps_;
};

std::vector<std::vector<float>> descs(std::initializer_list<std::vector<float>> lists) {
  return {lists};
}

}  // namespace

TEST_CASE("match_bidirectional keeps mutual nearest neighbors only") {
  SUBCASE("identical descriptor lists match by identity") {
    const auto d = descs({{0.f, 1.f}, {2.f, 0.f}, {5.f, 5.f}, {-3.f, 2.f}});
    const auto m = match_bidirectional(d, d);
    REQUIRE(m.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(m[i].index_a == static_cast<int>(i));
      CHECK(m[i].index_b == static_cast<int>(i));
      CHECK(m[i].distance == 0.0);
    }
  }
  SUBCASE("one-sided nearest fails the mutual test") {
    const auto a = descs({{0.f}, {10.f}});
    const auto b = descs({{0.1f}});
    const auto m = match_bidirectional(a, b);
    REQUIRE(m.size() == 1);
    CHECK(m[0].index_a == 0);
    CHECK(m[0].index_b == 0);
  }
  SUBCASE("either side empty yields no matches") {
    CHECK(match_bidirectional(descs({{1.f}}), {}).empty());
    CHECK(match_bidirectional({}, descs({{1.f}})).empty());
  }
  SUBCASE("mismatched descriptor lengths are rejected") {
    CHECK_THROWS_AS(match_bidirectional(descs({{1.f, 2.f}}), descs({{1.f}})),
                    std::invalid_argument);
  }
  SUBCASE("matching is symmetric under swapping the inputs") {
    auto rng = make_rng(61);
    std::vector<std::vector<float>> a(12, std::vector<float>(8)), b(9, std::vector<float>(8));
    for (auto& d : a)
      for (auto& v : d) v = static_cast<float>(rand_uniform(rng, -1, 1));
    for (auto& d : b)
      for (auto& v : d) v = static_cast<float>(rand_uniform(rng, -1, 1));
    const auto fwd = match_bidirectional(a, b);
    auto rev = match_bidirectional(b, a);
    REQUIRE(fwd.size() == rev.size());
    for (auto& m : rev) std::swap(m.index_a, m.index_b);
    auto key = [](const Match& m) { return m.index_a * 1000 + m.index_b; };
    auto sorted_fwd = fwd, sorted_rev = rev;
    std::sort(sorted_fwd.begin(), sorted_fwd.end(),
              [&](const Match& x, const Match& y) { return key(x) < key(y); });
    std::sort(sorted_rev.begin(), sorted_rev.end(),
              [&](const Match& x, const Match& y) { return key(x) < key(y); });
    for (std::size_t i = 0; i < fwd.size(); ++i) {
      CHECK(sorted_fwd[i].index_a == sorted_rev[i].index_a);
      CHECK(sorted_fwd[i].index_b == sorted_rev[i].index_b);
    }
  }
}

TEST_CASE("estimate_fundamental recovers noiseless two-view geometry") {
  auto rng = make_rng(62);
  const auto view = synthesize_two_view(rng, 50);
  const auto f = estimate_fundamental(view.pairs, 500, 1.0, 9);
  double worst = 0.0;
  for (const auto& p : view.pairs)
    worst = std::max(worst, symmetric_epipolar_distance(p.first, p.second, f.m));
  CHECK(worst < 1e-6);
  CHECK(std::abs(f.m.norm() - 1.0) <= 1e-12);
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(f.m);
  CHECK(svd.singularValues()(2) <= 1e-12);
}

TEST_CASE("estimate_fundamental rejects thin inputs and finds the planted consensus") {
  auto rng = make_rng(63);
  SUBCASE("fewer than 8 matches is an error") {
    auto view = synthesize_two_view(rng, 7);
    CHECK_THROWS_WITH_AS(estimate_fundamental(view.pairs, 100, 1.0, 1),
                         "insufficient correspondences", std::invalid_argument);
  }
  SUBCASE("40 inliers and 10 planted outliers") {
    auto view = synthesize_two_view(rng, 40);
    std::vector<PointPair> pairs = view.pairs;
    int added = 0;
    while (added < 10) {
      PointPair p{Eigen::Vector2d(rand_uniform(rng, 0, 320), rand_uniform(rng, 0, 240)),
                  Eigen::Vector2d(rand_uniform(rng, 0, 320), rand_uniform(rng, 0, 240))};
      // keep only clear outliers so the expected consensus is unambiguous
      if (symmetric_epipolar_distance(p.first, p.second, view.f) < 5.0) continue;
      pairs.push_back(p);
      ++added;
    }
    const auto f = estimate_fundamental(pairs, 1000, 1.0, 4);
    const auto kept = epipolar_filter(pairs, f, 1.0);
    CHECK(kept.size() == 40);
    for (std::size_t i = 0; i < 40; ++i)
      CHECK(symmetric_epipolar_distance(pairs[i].first, pairs[i].second, f.m) <= 1.0);
  }
  SUBCASE("deterministic for a fixed seed") {
    auto view = synthesize_two_view(rng, 30);
    const auto a = estimate_fundamental(view.pairs, 200, 1.0, 77);
    const auto b = estimate_fundamental(view.pairs, 200, 1.0, 77);
    CHECK((a.m - b.m).norm() == 0.0);
  }
}

TEST_CASE("epipolar_filter applies the symmetric point-line distance") {
  auto rng = make_rng(64);
  const auto view = synthesize_two_view(rng, 20);
  FundamentalMatrix f;
  f.m = view.f;
  SUBCASE("exact correspondences all pass") {
    CHECK(epipolar_filter(view.pairs, f, 1e-6).size() == view.pairs.size());
  }
  SUBCASE("a 10 px orthogonal perturbation is rejected at 2 px tolerance") {
    auto pairs = view.pairs;
    const Eigen::Vector3d x1(pairs[0].first.x(), pairs[0].first.y(), 1.0);
    const Eigen::Vector3d l2 = view.f * x1;
    const Eigen::Vector2d normal =
        Eigen::Vector2d(l2.x(), l2.y()) / std::hypot(l2.x(), l2.y());
    pairs[0].second += 10.0 * normal;
    const auto kept = epipolar_filter(pairs, f, 2.0);
    CHECK(kept.size() == pairs.size() - 1);
    for (const auto& p : kept) CHECK((p.second - pairs[0].second).norm() > 1.0);
  }
  SUBCASE("infinite tolerance keeps the input unchanged") {
    auto pairs = view.pairs;
    pairs[3].second += Eigen::Vector2d(500.0, -300.0);
    const auto kept =
        epipolar_filter(pairs, f, std::numeric_limits<double>::infinity());
    CHECK(kept.size() == pairs.size());
  }
  SUBCASE("tighter tolerances keep subsets") {
    auto pairs = view.pairs;
    for (std::size_t i = 0; i < pairs.size(); ++i)
      pairs[i].second += Eigen::Vector2d(0.0, 0.05 * static_cast<double>(i));
    const auto loose = epipolar_filter(pairs, f, 0.4);
    const auto tight = epipolar_filter(pairs, f, 0.1);
    CHECK(tight.size() <= loose.size());
    for (const auto& p : tight) {
      bool found = false;
      for (const auto& q : loose) found = found || ((p.first - q.first).norm() == 0.0 && (p.second - q.second).norm() == 0.0);
      CHECK(found);
    }
  }
  SUBCASE("rescaling F leaves the filter output unchanged") {
    auto pairs = view.pairs;
    pairs[1].second += Eigen::Vector2d(0.0, 3.0);
    FundamentalMatrix scaled;
    scaled.m = -7.25 * view.f;
    const auto a = epipolar_filter(pairs, f, 2.0);
    const auto b = epipolar_filter(pairs, scaled, 2.0);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK((a[i].first - b[i].first).norm() == 0.0);
  }
}

TEST_CASE("sample_prior_depths reads nearest-pixel ground truth") {
  DepthMap depth(8, 6, 0.0);
  MaskMap mask(8, 6, 1);
  depth.at(3, 3) = 2.5;
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 8; ++x)
      if (depth.at(x, y) == 0.0) depth.at(x, y) = 1.0;
  SUBCASE("fractional coordinates round to the nearest pixel") {
    const auto prior = sample_prior_depths({Eigen::Vector2d(3.4, 2.6)}, depth, mask);
    REQUIRE(prior.size() == 1);
    CHECK(prior.points[0].x == doctest::Approx(3.4));
    CHECK(prior.points[0].y == doctest::Approx(2.6));
    CHECK(prior.points[0].depth == 2.5);
  }
  SUBCASE("keypoints over holes are dropped") {
    mask.at(3, 3) = 0;
    const auto prior = sample_prior_depths({Eigen::Vector2d(3.4, 2.6)}, depth, mask);
    CHECK(prior.empty());
  }
  SUBCASE("cardinality: 200 keypoints with 40 holes keeps 160") {
    auto rng = make_rng(65);
    DepthMap big(64, 48, 3.0);
    MaskMap ok(64, 48, 1);
    std::vector<Eigen::Vector2d> kps;
    for (int i = 0; i < 200; ++i) {
      const int x = static_cast<int>(i % 40) + 10;
      const int y = static_cast<int>(i / 40) * 8 + 2;
      kps.emplace_back(x, y);
    }
    for (int i = 0; i < 40; ++i) ok.at(kps[static_cast<std::size_t>(i * 5)].x(),
                                       kps[static_cast<std::size_t>(i * 5)].y()) = 0;
    const auto prior = sample_prior_depths(kps, big, ok);
    CHECK(prior.size() == 160);
  }
}

TEST_CASE("subsample_prior draws a uniform subset deterministically") {
  SparsePrior prior;
  for (int i = 0; i < 500; ++i)
    prior.points.push_back({static_cast<double>(i), 1.0, 1.0 + i});
  SUBCASE("paper operating point: 500 -> 200") {
    const auto sub = subsample_prior(prior, 200, 3);
    CHECK(sub.size() == 200);
  }
  SUBCASE("requesting more than available returns the full set") {
    SparsePrior small;
    for (int i = 0; i < 50; ++i) small.points.push_back({1.0 * i, 2.0, 3.0 + i});
    const auto sub = subsample_prior(small, 200, 3);
    REQUIRE(sub.size() == 50);
    for (int i = 0; i < 50; ++i) CHECK(sub.points[static_cast<std::size_t>(i)].depth == 3.0 + i);
  }
  SUBCASE("n = 0 empties the prior") { CHECK(subsample_prior(prior, 0, 3).empty()); }
  SUBCASE("same seed, same subset; different seed, different subset") {
    const auto a = subsample_prior(prior, 100, 9);
    const auto b = subsample_prior(prior, 100, 9);
    const auto c = subsample_prior(prior, 100, 10);
    REQUIRE(a.size() == b.size());
    bool same_ac = a.size() == c.size();
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a.points[i].x == b.points[i].x);
      if (same_ac) same_ac = a.points[i].x == c.points[i].x;
    }
    CHECK_FALSE(same_ac);
  }
}

TEST_CASE("detect_keypoints buckets by grid cell and keeps the strongest") {
  std::vector<Keypoint> stub_kps;
  // two cells of a 1x2 grid over a 40x20 image; responses descending by index
  for (int i = 0; i < 6; ++i) {
    Keypoint k;
    k.x = i < 3 ? 5.0 + i : 25.0 + i;  // first three land left, rest right
    k.y = 10.0;
    k.response = 10.0 - i;
    k.descriptor = {static_cast<float>(i)};
    stub_kps.push_back(k);
  }
  const StubDetector det(stub_kps);
  GrayImage img(40, 20, 0);
  SUBCASE("per-cell cap applies independently") {
    const auto kept = detect_keypoints(det, img, 1, 2, 2);
    REQUIRE(kept.size() == 4);
    int left = 0, right = 0;
    for (const auto& k : kept) (k.x < 20.0 ? left : right)++;
    CHECK(left == 2);
    CHECK(right == 2);
  }
  SUBCASE("cardinality bound rows*cols*per_cell") {
    CHECK(detect_keypoints(det, img, 2, 2, 5).size() <= 20);
    CHECK(detect_keypoints(det, img, 1, 1, 1).size() == 1);
  }
  SUBCASE("grid preconditions") {
    CHECK_THROWS_AS(detect_keypoints(det, img, 0, 2, 1), std::invalid_argument);
    CHECK_THROWS_AS(detect_keypoints(det, img, 1, 1, 0), std::invalid_argument);
  }
}

TEST_CASE("SIFT detector behavior on synthetic images") {
  SUBCASE("constant image yields no keypoints") {
    const SiftDetector det;
    GrayImage flat(64, 48, 77);
    CHECK(detect_keypoints(det, flat, 2, 2, 5).empty());
  }
  SUBCASE("a bright 3x3 blob is localized within a pixel") {
    DetectorConfig cfg;
    cfg.contrast_threshold = 0.005;
    cfg.edge_threshold = 50.0;
    cfg.base_sigma = 0.8;
    const SiftDetector det(cfg);
    GrayImage img(64, 48, 0);
    for (int y = 23; y <= 25; ++y)
      for (int x = 31; x <= 33; ++x) img.at(x, y) = 255;
    const auto kps = detect_keypoints(det, img, 1, 1, 1);
    REQUIRE(kps.size() == 1);
    CHECK(std::hypot(kps[0].x - 32.0, kps[0].y - 24.0) <= 1.0);
  }
  SUBCASE("detection is deterministic") {
    auto rng = make_rng(66);
    GrayImage img(96, 64, 0);
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 96; ++x)
        img.at(x, y) = static_cast<std::uint8_t>(rand_index(rng, 256));
    const SiftDetector det;
    const auto a = det.detect(img);
    const auto b = det.detect(img);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].x == b[i].x);
      CHECK(a[i].y == b[i].y);
      CHECK(a[i].descriptor == b[i].descriptor);
    }
  }
}

TEST_CASE("prior csv round-trips and rejects malformed input") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "priordepth_prior_io";
  fs::create_directories(dir);
  SUBCASE("round trip") {
    SparsePrior prior;
    prior.points.push_back({3.25, 4.5, static_cast<double>(static_cast<float>(2.71828))});
    prior.points.push_back({10.0, 20.0, 1.5});
    write_prior_csv(dir / "a.csv", prior);
    const auto back = read_prior_csv(dir / "a.csv");
    REQUIRE(back.size() == 2);
    CHECK(back.points[0].x == 3.25);
    CHECK(back.points[0].depth == prior.points[0].depth);
    CHECK(back.points[1].depth == 1.5);
  }
  SUBCASE("empty prior round-trips as a header-only file") {
    write_prior_csv(dir / "empty.csv", SparsePrior{});
    CHECK(read_prior_csv(dir / "empty.csv").empty());
  }
  SUBCASE("malformed lines name the file and line") {
    {
      std::ofstream os(dir / "bad.csv");
      os << "x,y,depth\n1,2,3\nnot-a-number,5,6\n";
    }
    CHECK_THROWS_WITH_AS(read_prior_csv(dir / "bad.csv"),
                         doctest::Contains("bad.csv: line 3"), DataError);
    {
      std::ofstream os(dir / "bad2.csv");
      os << "x,y,depth\n1,2\n";
    }
    CHECK_THROWS_WITH_AS(read_prior_csv(dir / "bad2.csv"),
                         doctest::Contains("line 2"), DataError);
    {
      std::ofstream os(dir / "bad3.csv");
      os << "wrong,header,here\n";
    }
    CHECK_THROWS_AS(read_prior_csv(dir / "bad3.csv"), DataError);
    {
      std::ofstream os(dir / "bad4.csv");
      os << "x,y,depth\n1,2,-3\n";
    }
    CHECK_THROWS_WITH_AS(read_prior_csv(dir / "bad4.csv"),
                         doctest::Contains("finite and positive"), DataError);
  }
  fs::remove_all(dir);
}
