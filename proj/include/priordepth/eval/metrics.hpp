#pragma once

#include <string>
#include <vector>

#include "priordepth/core/image.hpp"
#include "priordepth/prior/densify.hpp"

namespace priordepth {

// Error metrics over pixels with valid ground truth below range_cap. When no
// pixel qualifies the report is flagged empty and the metrics stay NaN.
struct MetricReport {
  double rmse_lin = std::numeric_limits<double>::quiet_NaN();
  double rmse_log = std::numeric_limits<double>::quiet_NaN();
  double rmse_silog = std::numeric_limits<double>::quiet_NaN();
  double mare = std::numeric_limits<double>::quiet_NaN();
  double range_cap = std::numeric_limits<double>::infinity();  // meters
  std::int64_t n_pixels = 0;
  bool empty = true;
};

MetricReport evaluate(const DepthMap& pred, const DepthMap& gt, const MaskMap& mask,
                      double range_cap);

// One report per cap, in input order.
std::vector<MetricReport> evaluate_ranges(const DepthMap& pred, const DepthMap& gt,
                                          const MaskMap& mask, const std::vector<double>& caps);

// Scores the nearest-neighbor prior channel as if it were the prediction.
MetricReport evaluate_prior_standalone(const PriorMaps& maps, const DepthMap& gt,
                                       const MaskMap& mask, double range_cap);

inline std::vector<double> default_range_caps() {
  return {std::numeric_limits<double>::infinity(), 5.0, 1.0};
}

// CSV rows: image_id,cap,rmse_lin,rmse_log,rmse_silog,mare,n_pixels. A
// summary row per cap carries the unweighted per-image mean (id "mean");
// empty reports are skipped in the mean and written with empty metric cells.
struct ImageReports {
  std::string image_id;
  std::vector<MetricReport> reports;
};

std::string report_csv(const std::vector<ImageReports>& rows);

// Percentage of pixels covered by n prior points at the given resolution.
double prior_coverage_percent(int n_priors, int width, int height);

}  // namespace priordepth
