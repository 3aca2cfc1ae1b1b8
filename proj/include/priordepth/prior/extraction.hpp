#pragma once

#include <cstdint>
#include <vector>

#include "priordepth/core/image.hpp"
#include "priordepth/prior/detector.hpp"
#include "priordepth/prior/types.hpp"

namespace priordepth {

// Splits the image into grid_rows x grid_cols equal patches and keeps the
// per_cell strongest detections in each; output ordered by response.
std::vector<Keypoint> detect_keypoints(const FeatureDetector& detector, const GrayImage& image,
                                       int grid_rows, int grid_cols, int per_cell);

// Mutual nearest neighbors under squared Euclidean descriptor distance, ties
// broken toward the lower index. Either side empty yields no matches.
std::vector<Match> match_bidirectional(const std::vector<std::vector<float>>& desc_a,
                                       const std::vector<std::vector<float>>& desc_b);
std::vector<Match> match_bidirectional(const std::vector<Keypoint>& a,
                                       const std::vector<Keypoint>& b);

// Point-to-epipolar-line distance averaged over both directions; scale of F
// cancels. Degenerate lines count as infinitely far.
double symmetric_epipolar_distance(const Eigen::Vector2d& p1, const Eigen::Vector2d& p2,
                                   const Eigen::Matrix3d& f);

// Normalized 8-point RANSAC, refit on the largest consensus set. Throws
// "insufficient correspondences" below 8 matches and "degenerate geometry"
// when no consensus of at least 8 exists.
FundamentalMatrix estimate_fundamental(const std::vector<PointPair>& matches, int ransac_iters,
                                       double inlier_tol_px, std::uint64_t seed);

std::vector<PointPair> epipolar_filter(const std::vector<PointPair>& matches,
                                       const FundamentalMatrix& f, double tol_px);

// Reads ground-truth depth at the nearest integer pixel of each keypoint;
// entries over invalid depth are dropped, original coordinates are kept.
SparsePrior sample_prior_depths(const std::vector<Eigen::Vector2d>& keypoints,
                                const DepthMap& depth, const MaskMap& validity);

// Uniform subset without replacement of size min(n, |prior|).
SparsePrior subsample_prior(const SparsePrior& prior, int n, std::uint64_t seed);

}  // namespace priordepth
