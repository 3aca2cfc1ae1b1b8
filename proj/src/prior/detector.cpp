#include "priordepth/prior/detector.hpp"

#include <opencv2/core.hpp>
#include <opencv2/features2d.hpp>

#include <algorithm>

namespace priordepth {

SiftDetector::SiftDetector(DetectorConfig cfg) : cfg_(cfg) {}

std::vector<Keypoint> SiftDetector::detect(const GrayImage& image) const {
  cv::Mat mat(image.height(), image.width(), CV_8UC1,
              const_cast<std::uint8_t*>(image.data()));
  auto sift = cv::SIFT::create(0, cfg_.octave_layers, cfg_.contrast_threshold,
                               cfg_.edge_threshold, cfg_.base_sigma);
  std::vector<cv::KeyPoint> kps;
  cv::Mat desc;
  sift->detectAndCompute(mat, cv::noArray(), kps, desc);

  // impose a total order so the output does not depend on detection order
  std::vector<int> order(kps.size());
  for (std::size_t i = 0; i < kps.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const auto& ka = kps[static_cast<std::size_t>(a)];
    const auto& kb = kps[static_cast<std::size_t>(b)];
    if (ka.response != kb.response) return ka.response > kb.response;
    if (ka.pt.y != kb.pt.y) return ka.pt.y < kb.pt.y;
    if (ka.pt.x != kb.pt.x) return ka.pt.x < kb.pt.x;
    if (ka.size != kb.size) return ka.size < kb.size;
    return ka.angle < kb.angle;
  });

  std::vector<Keypoint> out;
  out.reserve(kps.size());
  for (int idx : order) {
    const auto& kp = kps[static_cast<std::size_t>(idx)];
    Keypoint k;
    k.x = kp.pt.x;
    k.y = kp.pt.y;
    k.response = kp.response;
    if (!desc.empty()) {
      const float* row = desc.ptr<float>(idx);
      k.descriptor.assign(row, row + desc.cols);
    }
    out.push_back(std::move(k));
  }
  return out;
}

}  // namespace priordepth
