#include "priordepth/data/image_io.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <cmath>

#include "priordepth/core/errors.hpp"

namespace priordepth {

nn::Tensor load_rgb(const std::filesystem::path& path, int target_w, int target_h, int* orig_w,
                    int* orig_h) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw DataError("cannot read image " + path.string());
  if (orig_w) *orig_w = bgr.cols;
  if (orig_h) *orig_h = bgr.rows;
  if (bgr.cols != target_w || bgr.rows != target_h)
    cv::resize(bgr, bgr, cv::Size(target_w, target_h), 0, 0, cv::INTER_LINEAR);
  nn::Tensor t({3, target_h, target_w});
  for (int y = 0; y < target_h; ++y) {
    const cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < target_w; ++x) {
      t.at(0, y, x) = row[x][2] / 255.0;
      t.at(1, y, x) = row[x][1] / 255.0;
      t.at(2, y, x) = row[x][0] / 255.0;
    }
  }
  return t;
}

DepthMap load_depth(const std::filesystem::path& path, bool png_millimeters, int target_w,
                    int target_h) {
  cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (raw.empty()) throw DataError("cannot read depth raster " + path.string());
  cv::Mat meters;
  if (raw.type() == CV_32FC1) {
    raw.convertTo(meters, CV_64FC1);
  } else if (raw.type() == CV_64FC1) {
    meters = raw;
  } else if (raw.type() == CV_16UC1) {
    if (!png_millimeters)
      throw DataError("16-bit depth raster " + path.string() +
                      " requires the millimeter-PNG flag");
    raw.convertTo(meters, CV_64FC1, 1.0 / 1000.0);
  } else {
    throw DataError("unsupported depth raster type in " + path.string());
  }
  if (target_w > 0 && target_h > 0 && (meters.cols != target_w || meters.rows != target_h))
    cv::resize(meters, meters, cv::Size(target_w, target_h), 0, 0, cv::INTER_NEAREST);
  DepthMap out(meters.cols, meters.rows);
  for (int y = 0; y < meters.rows; ++y) {
    const double* row = meters.ptr<double>(y);
    for (int x = 0; x < meters.cols; ++x) out.at(x, y) = row[x];
  }
  return out;
}

void save_rgb_png(const std::filesystem::path& path, const nn::Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3)
    throw std::invalid_argument("save_rgb_png: [3,H,W] tensor expected");
  const int h = image.dim(1), w = image.dim(2);
  cv::Mat bgr(h, w, CV_8UC3);
  for (int y = 0; y < h; ++y) {
    cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < w; ++x) {
      const auto q = [&](int c) {
        const double v = std::clamp(image.at(c, y, x), 0.0, 1.0);
        return static_cast<std::uint8_t>(std::lround(v * 255.0));
      };
      row[x] = cv::Vec3b(q(2), q(1), q(0));
    }
  }
  if (!cv::imwrite(path.string(), bgr))
    throw DataError("cannot write image " + path.string());
}

void save_depth_tiff(const std::filesystem::path& path, const DepthMap& depth) {
  cv::Mat m(depth.height(), depth.width(), CV_32FC1);
  for (int y = 0; y < depth.height(); ++y) {
    float* row = m.ptr<float>(y);
    for (int x = 0; x < depth.width(); ++x) row[x] = static_cast<float>(depth.at(x, y));
  }
  if (!cv::imwrite(path.string(), m))
    throw DataError("cannot write depth raster " + path.string());
}

void save_gray16_png(const std::filesystem::path& path, const Image2D<std::uint16_t>& image) {
  cv::Mat m(image.height(), image.width(), CV_16UC1);
  for (int y = 0; y < image.height(); ++y) {
    std::uint16_t* row = m.ptr<std::uint16_t>(y);
    for (int x = 0; x < image.width(); ++x) row[x] = image.at(x, y);
  }
  if (!cv::imwrite(path.string(), m))
    throw DataError("cannot write image " + path.string());
}

void save_colormapped_png(const std::filesystem::path& path, const DepthMap& depth, double lo,
                          double hi) {
  const double span = hi > lo ? hi - lo : 1.0;
  cv::Mat gray(depth.height(), depth.width(), CV_8UC1);
  for (int y = 0; y < depth.height(); ++y) {
    std::uint8_t* row = gray.ptr<std::uint8_t>(y);
    for (int x = 0; x < depth.width(); ++x) {
      const double v = std::clamp((depth.at(x, y) - lo) / span, 0.0, 1.0);
      row[x] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  }
  cv::Mat colored;
  cv::applyColorMap(gray, colored, cv::COLORMAP_VIRIDIS);
  if (!cv::imwrite(path.string(), colored))
    throw DataError("cannot write image " + path.string());
}

GrayImage load_gray(const std::filesystem::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw DataError("cannot read image " + path.string());
  GrayImage out(m.cols, m.rows);
  for (int y = 0; y < m.rows; ++y) {
    const std::uint8_t* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < m.cols; ++x) out.at(x, y) = row[x];
  }
  return out;
}

GrayImage tensor_to_gray(const nn::Tensor& image) {
  const int h = image.dim(1), w = image.dim(2);
  GrayImage out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double v =
          0.299 * image.at(0, y, x) + 0.587 * image.at(1, y, x) + 0.114 * image.at(2, y, x);
      out.at(x, y) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    }
  return out;
}

}  // namespace priordepth
