#include "priordepth/prior/extraction.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "priordepth/core/rng.hpp"

namespace priordepth {

std::vector<Keypoint> detect_keypoints(const FeatureDetector& detector, const GrayImage& image,
                                       int grid_rows, int grid_cols, int per_cell) {
  if (grid_rows < 1 || grid_cols < 1)
    throw std::invalid_argument("detect_keypoints: grid dims must be >= 1");
  if (per_cell < 1) throw std::invalid_argument("detect_keypoints: per_cell must be >= 1");
  const auto detections = detector.detect(image);
  // bucket by equal-sized patch, then keep the per_cell strongest per bucket
  std::vector<std::vector<int>> cells(static_cast<std::size_t>(grid_rows) * grid_cols);
  for (std::size_t i = 0; i < detections.size(); ++i) {
    int cx = static_cast<int>(detections[i].x * grid_cols / image.width());
    int cy = static_cast<int>(detections[i].y * grid_rows / image.height());
    cx = std::clamp(cx, 0, grid_cols - 1);
    cy = std::clamp(cy, 0, grid_rows - 1);
    cells[static_cast<std::size_t>(cy) * grid_cols + cx].push_back(static_cast<int>(i));
  }
  std::vector<Keypoint> out;
  for (auto& cell : cells) {
    std::sort(cell.begin(), cell.end(), [&](int a, int b) {
      const auto& ka = detections[static_cast<std::size_t>(a)];
      const auto& kb = detections[static_cast<std::size_t>(b)];
      if (ka.response != kb.response) return ka.response > kb.response;
      if (ka.y != kb.y) return ka.y < kb.y;
      return ka.x < kb.x;
    });
    const std::size_t keep = std::min<std::size_t>(cell.size(), per_cell);
    for (std::size_t i = 0; i < keep; ++i)
      out.push_back(detections[static_cast<std::size_t>(cell[i])]);
  }
  std::sort(out.begin(), out.end(), [](const Keypoint& a, const Keypoint& b) {
    if (a.response != b.response) return a.response > b.response;
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
  });
  return out;
}

namespace {

double sq_descriptor_distance(const std::vector<float>& a, const std::vector<float>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc;
}

}  // namespace

std::vector<Match> match_bidirectional(const std::vector<std::vector<float>>& desc_a,
                                       const std::vector<std::vector<float>>& desc_b) {
  std::vector<Match> out;
  if (desc_a.empty() || desc_b.empty()) return out;
  const std::size_t dim = desc_a[0].size();
  for (const auto& d : desc_a)
    if (d.size() != dim) throw std::invalid_argument("match: descriptor lengths differ");
  for (const auto& d : desc_b)
    if (d.size() != dim) throw std::invalid_argument("match: descriptor lengths differ");

  std::vector<int> best_b(desc_a.size());
  std::vector<double> best_b_dist(desc_a.size());
  for (std::size_t i = 0; i < desc_a.size(); ++i) {
    int arg = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < desc_b.size(); ++j) {
      const double d = sq_descriptor_distance(desc_a[i], desc_b[j]);
      if (d < best) {
        best = d;
        arg = static_cast<int>(j);
      }
    }
    best_b[i] = arg;
    best_b_dist[i] = best;
  }
  std::vector<int> best_a(desc_b.size());
  for (std::size_t j = 0; j < desc_b.size(); ++j) {
    int arg = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < desc_a.size(); ++i) {
      const double d = sq_descriptor_distance(desc_a[i], desc_b[j]);
      if (d < best) {
        best = d;
        arg = static_cast<int>(i);
      }
    }
    best_a[j] = arg;
  }
  for (std::size_t i = 0; i < desc_a.size(); ++i) {
    const int j = best_b[i];
    if (best_a[static_cast<std::size_t>(j)] == static_cast<int>(i))
      out.push_back({static_cast<int>(i), j, best_b_dist[i]});
  }
  return out;
}

std::vector<Match> match_bidirectional(const std::vector<Keypoint>& a,
                                       const std::vector<Keypoint>& b) {
  std::vector<std::vector<float>> da(a.size()), db(b.size());
  for (std::size_t i = 0; i < a.size(); ++i) da[i] = a[i].descriptor;
  for (std::size_t i = 0; i < b.size(); ++i) db[i] = b[i].descriptor;
  return match_bidirectional(da, db);
}

double symmetric_epipolar_distance(const Eigen::Vector2d& p1, const Eigen::Vector2d& p2,
                                   const Eigen::Matrix3d& f) {
  const Eigen::Vector3d x1(p1.x(), p1.y(), 1.0);
  const Eigen::Vector3d x2(p2.x(), p2.y(), 1.0);
  const Eigen::Vector3d l2 = f * x1;   // epipolar line of p1 in image 2
  const Eigen::Vector3d l1 = f.transpose() * x2;
  const auto line_dist = [](const Eigen::Vector3d& x, const Eigen::Vector3d& l) {
    const double denom = std::hypot(l.x(), l.y());
    if (denom == 0.0) return std::numeric_limits<double>::infinity();
    return std::abs(x.dot(l)) / denom;
  };
  return 0.5 * (line_dist(x2, l2) + line_dist(x1, l1));
}

namespace {

Eigen::Matrix3d normalizing_transform(const std::vector<Eigen::Vector2d>& pts) {
  Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
  for (const auto& p : pts) centroid += p;
  centroid /= static_cast<double>(pts.size());
  double mean_dist = 0.0;
  for (const auto& p : pts) mean_dist += (p - centroid).norm();
  mean_dist /= static_cast<double>(pts.size());
  const double scale = mean_dist > 0.0 ? std::sqrt(2.0) / mean_dist : 1.0;
  Eigen::Matrix3d t = Eigen::Matrix3d::Identity();
  t(0, 0) = scale;
  t(1, 1) = scale;
  t(0, 2) = -scale * centroid.x();
  t(1, 2) = -scale * centroid.y();
  return t;
}

// Normalized 8-point least squares over all given pairs, rank-2 and unit
// Frobenius norm enforced, sign fixed by the largest-magnitude entry.
Eigen::Matrix3d eight_point(const std::vector<PointPair>& pairs) {
  std::vector<Eigen::Vector2d> p1(pairs.size()), p2(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    p1[i] = pairs[i].first;
    p2[i] = pairs[i].second;
  }
  const Eigen::Matrix3d t1 = normalizing_transform(p1);
  const Eigen::Matrix3d t2 = normalizing_transform(p2);
  Eigen::MatrixXd a(pairs.size(), 9);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const Eigen::Vector3d x1 = t1 * Eigen::Vector3d(p1[i].x(), p1[i].y(), 1.0);
    const Eigen::Vector3d x2 = t2 * Eigen::Vector3d(p2[i].x(), p2[i].y(), 1.0);
    a.row(static_cast<Eigen::Index>(i)) << x2.x() * x1.x(), x2.x() * x1.y(), x2.x(),
        x2.y() * x1.x(), x2.y() * x1.y(), x2.y(), x1.x(), x1.y(), 1.0;
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd fvec = svd.matrixV().col(8);
  Eigen::Matrix3d fn;
  fn << fvec(0), fvec(1), fvec(2), fvec(3), fvec(4), fvec(5), fvec(6), fvec(7), fvec(8);
  Eigen::JacobiSVD<Eigen::Matrix3d> fsvd(fn, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Vector3d sing = fsvd.singularValues();
  sing(2) = 0.0;
  fn = fsvd.matrixU() * sing.asDiagonal() * fsvd.matrixV().transpose();
  Eigen::Matrix3d f = t2.transpose() * fn * t1;
  const double norm = f.norm();
  if (norm == 0.0) throw std::runtime_error("degenerate geometry");
  f /= norm;
  Eigen::Index mr = 0, mc = 0;
  f.cwiseAbs().maxCoeff(&mr, &mc);
  if (f(mr, mc) < 0.0) f = -f;
  return f;
}

}  // namespace

FundamentalMatrix estimate_fundamental(const std::vector<PointPair>& matches, int ransac_iters,
                                       double inlier_tol_px, std::uint64_t seed) {
  if (matches.size() < 8) throw std::invalid_argument("insufficient correspondences");
  auto rng = make_rng(seed, 0xF0);
  std::vector<std::size_t> best_inliers;
  for (int it = 0; it < ransac_iters; ++it) {
    const auto pick = sample_indices(rng, matches.size(), 8);
    std::vector<PointPair> subset;
    subset.reserve(8);
    for (auto i : pick) subset.push_back(matches[i]);
    Eigen::Matrix3d f;
    try {
      f = eight_point(subset);
    } catch (const std::runtime_error&) {
      continue;
    }
    std::vector<std::size_t> inliers;
    for (std::size_t i = 0; i < matches.size(); ++i)
      if (symmetric_epipolar_distance(matches[i].first, matches[i].second, f) <=
          inlier_tol_px)
        inliers.push_back(i);
    if (inliers.size() > best_inliers.size()) best_inliers = std::move(inliers);
  }
  if (best_inliers.size() < 8) throw std::runtime_error("degenerate geometry");
  std::vector<PointPair> consensus;
  consensus.reserve(best_inliers.size());
  for (auto i : best_inliers) consensus.push_back(matches[i]);
  FundamentalMatrix out;
  out.m = eight_point(consensus);
  return out;
}

std::vector<PointPair> epipolar_filter(const std::vector<PointPair>& matches,
                                       const FundamentalMatrix& f, double tol_px) {
  if (!(tol_px > 0.0)) throw std::invalid_argument("epipolar_filter: tol must be positive");
  std::vector<PointPair> out;
  out.reserve(matches.size());
  for (const auto& m : matches)
    if (symmetric_epipolar_distance(m.first, m.second, f.m) <= tol_px) out.push_back(m);
  return out;
}

SparsePrior sample_prior_depths(const std::vector<Eigen::Vector2d>& keypoints,
                                const DepthMap& depth, const MaskMap& validity) {
  if (depth.width() != validity.width() || depth.height() != validity.height())
    throw std::invalid_argument("sample_prior_depths: depth/mask shape mismatch");
  SparsePrior prior;
  for (const auto& kp : keypoints) {
    const int x = std::clamp(static_cast<int>(std::lround(kp.x())), 0, depth.width() - 1);
    const int y = std::clamp(static_cast<int>(std::lround(kp.y())), 0, depth.height() - 1);
    if (!valid_depth_at(depth, validity, x, y)) continue;
    prior.points.push_back({kp.x(), kp.y(), depth.at(x, y)});
  }
  return prior;
}

SparsePrior subsample_prior(const SparsePrior& prior, int n, std::uint64_t seed) {
  if (n < 0) throw std::invalid_argument("subsample_prior: n must be >= 0");
  SparsePrior out;
  out.source_image_id = prior.source_image_id;
  if (static_cast<std::size_t>(n) >= prior.points.size()) {
    out.points = prior.points;
    return out;
  }
  auto rng = make_rng(seed, 0x5B);
  auto picks = sample_indices(rng, prior.points.size(), static_cast<std::size_t>(n));
  std::sort(picks.begin(), picks.end());
  out.points.reserve(picks.size());
  for (auto i : picks) out.points.push_back(prior.points[i]);
  return out;
}

}  // namespace priordepth
