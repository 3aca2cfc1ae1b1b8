#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

namespace priordepth {

struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  double response = 0.0;
  std::vector<float> descriptor;
};

struct Match {
  int index_a = 0;
  int index_b = 0;
  double distance = 0.0;  // squared Euclidean descriptor distance
};

// Rank-2, unit Frobenius norm after estimation.
struct FundamentalMatrix {
  Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
};

struct PriorPoint {
  double x = 0.0;      // px
  double y = 0.0;      // px
  double depth = 0.0;  // meters, finite and > 0
};

struct SparsePrior {
  std::vector<PriorPoint> points;
  std::string source_image_id;

  bool empty() const { return points.empty(); }
  std::size_t size() const { return points.size(); }
};

using PointPair = std::pair<Eigen::Vector2d, Eigen::Vector2d>;

}  // namespace priordepth
