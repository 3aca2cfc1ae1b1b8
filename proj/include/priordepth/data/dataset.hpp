#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "priordepth/data/sample.hpp"

namespace priordepth {

struct DatasetOptions {
  int width = 320;
  int height = 240;
  bool png_depth_millimeters = false;
};

// Lazy index over the on-disk layout root/rgb/<stem>.<ext>,
// root/depth/<stem>.tif (or .png with the millimeter flag), and
// root/priors/<stem>.csv. Stems without a depth raster are skipped with a
// warning; a missing prior file yields an empty prior. Images are resized to
// the working resolution and prior coordinates rescaled with them; prior
// points falling outside the frame are dropped.
class Dataset {
 public:
  static Dataset open(const std::filesystem::path& root, DatasetOptions options);

  std::size_t size() const { return entries_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }
  DepthSample load(std::size_t index) const;

 private:
  struct Entry {
    std::filesystem::path rgb, depth, prior;
    std::string id;
  };
  DatasetOptions options_;
  std::vector<Entry> entries_;
  std::vector<std::string> ids_;
};

// Writes samples out in the standard layout; depth goes to float TIFF with
// holes stored as 0, prior depths are quantized to the raster's float32 so a
// round trip reproduces them exactly.
void materialize_dataset(const std::filesystem::path& root,
                         const std::vector<DepthSample>& samples);

}  // namespace priordepth
