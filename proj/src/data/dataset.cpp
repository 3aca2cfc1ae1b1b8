#include "priordepth/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "priordepth/core/errors.hpp"
#include "priordepth/data/image_io.hpp"
#include "priordepth/prior/prior_io.hpp"

namespace priordepth {

Dataset Dataset::open(const std::filesystem::path& root, DatasetOptions options) {
  namespace fs = std::filesystem;
  Dataset ds;
  ds.options_ = options;
  const fs::path rgb_dir = root / "rgb";
  if (!fs::is_directory(rgb_dir))
    throw DataError("dataset root " + root.string() + " has no rgb/ directory");
  std::vector<fs::path> rgb_files;
  for (const auto& e : fs::directory_iterator(rgb_dir))
    if (e.is_regular_file()) rgb_files.push_back(e.path());
  std::sort(rgb_files.begin(), rgb_files.end());
  for (const auto& rgb : rgb_files) {
    Entry entry;
    entry.rgb = rgb;
    entry.id = rgb.stem().string();
    const fs::path tif = root / "depth" / (entry.id + ".tif");
    const fs::path png = root / "depth" / (entry.id + ".png");
    if (fs::exists(tif)) {
      entry.depth = tif;
    } else if (options.png_depth_millimeters && fs::exists(png)) {
      entry.depth = png;
    } else {
      std::cerr << "warning: skipping " << entry.id << ": no depth raster\n";
      continue;
    }
    const fs::path prior = root / "priors" / (entry.id + ".csv");
    if (fs::exists(prior)) entry.prior = prior;
    ds.ids_.push_back(entry.id);
    ds.entries_.push_back(std::move(entry));
  }
  if (ds.entries_.empty()) throw DataError("empty dataset at " + root.string());
  return ds;
}

DepthSample Dataset::load(std::size_t index) const {
  const Entry& e = entries_.at(index);
  DepthSample s;
  s.id = e.id;
  int orig_w = 0, orig_h = 0;
  s.image = load_rgb(e.rgb, options_.width, options_.height, &orig_w, &orig_h);
  s.gt_depth = load_depth(e.depth, options_.png_depth_millimeters, options_.width,
                          options_.height);
  s.validity = MaskMap(options_.width, options_.height, 0);
  for (int y = 0; y < options_.height; ++y)
    for (int x = 0; x < options_.width; ++x) {
      const double d = s.gt_depth.at(x, y);
      if (std::isfinite(d) && d > 0.0) s.validity.at(x, y) = 1;
    }
  if (!e.prior.empty()) {
    SparsePrior prior = read_prior_csv(e.prior);
    const double sx = static_cast<double>(options_.width) / orig_w;
    const double sy = static_cast<double>(options_.height) / orig_h;
    s.prior.source_image_id = prior.source_image_id;
    for (auto& p : prior.points) {
      p.x *= sx;
      p.y *= sy;
      if (p.x >= 0.0 && p.x < options_.width && p.y >= 0.0 && p.y < options_.height)
        s.prior.points.push_back(p);
    }
  } else {
    s.prior.source_image_id = e.id;
  }
  return s;
}

void materialize_dataset(const std::filesystem::path& root,
                         const std::vector<DepthSample>& samples) {
  namespace fs = std::filesystem;
  fs::create_directories(root / "rgb");
  fs::create_directories(root / "depth");
  fs::create_directories(root / "priors");
  for (const auto& s : samples) {
    save_rgb_png(root / "rgb" / (s.id + ".png"), s.image);
    DepthMap masked = s.gt_depth;
    for (int y = 0; y < masked.height(); ++y)
      for (int x = 0; x < masked.width(); ++x)
        if (!s.validity.at(x, y)) masked.at(x, y) = 0.0;  // holes become invalid zeros
    save_depth_tiff(root / "depth" / (s.id + ".tif"), masked);
    SparsePrior quantized = s.prior;
    for (auto& p : quantized.points)
      p.depth = static_cast<double>(static_cast<float>(p.depth));
    write_prior_csv(root / "priors" / (s.id + ".csv"), quantized);
  }
}

}  // namespace priordepth
