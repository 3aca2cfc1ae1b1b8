#include "priordepth/eval/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>

namespace priordepth {

namespace {

constexpr double kLogFloor = 1e-6;

std::string format_cap(double cap) {
  if (std::isinf(cap)) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", cap);
  return buf;
}

}  // namespace

MetricReport evaluate(const DepthMap& pred, const DepthMap& gt, const MaskMap& mask,
                      double range_cap) {
  if (pred.width() != gt.width() || pred.height() != gt.height() ||
      gt.width() != mask.width() || gt.height() != mask.height())
    throw std::invalid_argument("evaluate: shape mismatch");
  MetricReport r;
  r.range_cap = range_cap;
  double sum_sq = 0.0, sum_log_sq = 0.0, sum_log = 0.0, sum_rel = 0.0;
  std::int64_t n = 0;
  for (int y = 0; y < gt.height(); ++y) {
    for (int x = 0; x < gt.width(); ++x) {
      if (!valid_depth_at(gt, mask, x, y)) continue;
      const double d = gt.at(x, y);
      if (!(d < range_cap)) continue;
      const double p = pred.at(x, y);
      const double g = std::log(std::max(p, kLogFloor)) - std::log(d);
      sum_sq += (p - d) * (p - d);
      sum_log_sq += g * g;
      sum_log += g;
      sum_rel += std::abs(p - d) / std::abs(d);
      ++n;
    }
  }
  r.n_pixels = n;
  if (n == 0) return r;
  r.empty = false;
  const double inv_n = 1.0 / static_cast<double>(n);
  r.rmse_lin = std::sqrt(sum_sq * inv_n);
  r.rmse_log = std::sqrt(sum_log_sq * inv_n);
  // alpha = -mean(g) cancels any constant log offset
  const double mean_g = sum_log * inv_n;
  const double silog_sq = sum_log_sq * inv_n - mean_g * mean_g;
  r.rmse_silog = std::sqrt(std::max(silog_sq, 0.0));
  r.mare = sum_rel * inv_n;
  return r;
}

std::vector<MetricReport> evaluate_ranges(const DepthMap& pred, const DepthMap& gt,
                                          const MaskMap& mask,
                                          const std::vector<double>& caps) {
  if (caps.empty()) throw std::invalid_argument("evaluate_ranges: caps must be nonempty");
  std::vector<MetricReport> out;
  out.reserve(caps.size());
  for (double c : caps) out.push_back(evaluate(pred, gt, mask, c));
  return out;
}

MetricReport evaluate_prior_standalone(const PriorMaps& maps, const DepthMap& gt,
                                       const MaskMap& mask, double range_cap) {
  return evaluate(maps.s1, gt, mask, range_cap);
}

std::string report_csv(const std::vector<ImageReports>& rows) {
  std::ostringstream os;
  os << "# aggregation: metrics computed per image; mean rows are unweighted means over "
        "non-empty images\n";
  os << "image_id,cap,rmse_lin,rmse_log,rmse_silog,mare,n_pixels\n";
  char buf[64];
  const auto num = [&buf](double v) {
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return std::string(buf);
  };
  struct Acc {
    double lin = 0, log = 0, silog = 0, mare = 0;
    std::int64_t pixels = 0;
    int images = 0;
  };
  std::map<std::string, Acc> by_cap;  // key keeps insertion handled below
  std::vector<std::string> cap_order;
  for (const auto& row : rows) {
    for (const auto& r : row.reports) {
      const std::string cap = format_cap(r.range_cap);
      if (by_cap.find(cap) == by_cap.end()) cap_order.push_back(cap);
      Acc& a = by_cap[cap];
      os << row.image_id << "," << cap << ",";
      if (r.empty) {
        os << ",,,," << r.n_pixels << "\n";
      } else {
        os << num(r.rmse_lin) << "," << num(r.rmse_log) << "," << num(r.rmse_silog) << ","
           << num(r.mare) << "," << r.n_pixels << "\n";
        a.lin += r.rmse_lin;
        a.log += r.rmse_log;
        a.silog += r.rmse_silog;
        a.mare += r.mare;
        a.images += 1;
      }
      a.pixels += r.n_pixels;
    }
  }
  for (const auto& cap : cap_order) {
    const Acc& a = by_cap[cap];
    os << "mean," << cap << ",";
    if (a.images == 0) {
      os << ",,,," << a.pixels << "\n";
    } else {
      os << num(a.lin / a.images) << "," << num(a.log / a.images) << ","
         << num(a.silog / a.images) << "," << num(a.mare / a.images) << "," << a.pixels
         << "\n";
    }
  }
  return os.str();
}

double prior_coverage_percent(int n_priors, int width, int height) {
  return 100.0 * static_cast<double>(n_priors) /
         (static_cast<double>(width) * static_cast<double>(height));
}

}  // namespace priordepth
