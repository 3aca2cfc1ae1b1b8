#pragma once

#include <memory>
#include <vector>

#include "priordepth/core/image.hpp"
#include "priordepth/prior/types.hpp"

namespace priordepth {

struct DetectorConfig {
  int octave_layers = 3;
  double contrast_threshold = 0.01;
  double edge_threshold = 20.0;
  double base_sigma = 1.2;
};

// Keypoint source behind an interface so tests can inject synthetic
// detections.
class FeatureDetector {
 public:
  virtual ~FeatureDetector() = default;
  // Detections with descriptors, deterministically ordered for a given image.
  virtual std::vector<Keypoint> detect(const GrayImage& image) const = 0;
};

// Difference-of-Gaussians extrema with gradient-orientation-histogram
// descriptors (OpenCV SIFT).
class SiftDetector final : public FeatureDetector {
 public:
  explicit SiftDetector(DetectorConfig cfg = {});
  std::vector<Keypoint> detect(const GrayImage& image) const override;

 private:
  DetectorConfig cfg_;
};

}  // namespace priordepth
