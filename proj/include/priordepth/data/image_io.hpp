#pragma once

#include <cstdint>
#include <filesystem>

#include "priordepth/core/image.hpp"
#include "priordepth/nn/tensor.hpp"

namespace priordepth {

// Thin raster I/O layer; everything on disk goes through here.

// Loads an 8-bit color image as a [3,H,W] RGB tensor in [0,1], resized to the
// target resolution (bilinear) when it differs. Original size is reported
// through the optional out-params.
nn::Tensor load_rgb(const std::filesystem::path& path, int target_w, int target_h,
                    int* orig_w = nullptr, int* orig_h = nullptr);

// Float TIFF in meters, or 16-bit PNG in millimeters when png_millimeters is
// set. Resized by nearest neighbor; depth values are never interpolated.
DepthMap load_depth(const std::filesystem::path& path, bool png_millimeters, int target_w = 0,
                    int target_h = 0);

void save_rgb_png(const std::filesystem::path& path, const nn::Tensor& image);
void save_depth_tiff(const std::filesystem::path& path, const DepthMap& depth);
void save_gray16_png(const std::filesystem::path& path, const Image2D<std::uint16_t>& image);

// Perceptually uniform colormap over [lo, hi].
void save_colormapped_png(const std::filesystem::path& path, const DepthMap& depth, double lo,
                          double hi);

GrayImage load_gray(const std::filesystem::path& path);
GrayImage tensor_to_gray(const nn::Tensor& image);

}  // namespace priordepth
