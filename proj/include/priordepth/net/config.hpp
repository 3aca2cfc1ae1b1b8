#pragma once

#include <cstdint>
#include <string>

namespace priordepth {

// Architecture hyperparameters. Working resolution must be divisible by 16 so
// the prior maps can be injected at every decoder stage; the stride-2 feature
// map must be divisible by patch_size and yield at least n_kernels + 1 patch
// tokens (token 0 is reserved for the bin/range head).
struct NetworkConfig {
  int input_width = 320;
  int input_height = 240;
  int n_bins = 256;
  int patch_size = 8;
  int embed_dim = 128;
  int tf_layers = 4;
  int tf_heads = 4;
  int n_kernels = 128;  // attention-map channels
  double width_mult = 1.0;
  double eps = 1e-3;    // bin-logit normalization offset
  double d_min = 0.0;   // meters, lower edge of the first bin
  double r_min = 0.01;  // meters, floor of the predicted range
  bool use_priors = true;

  static NetworkConfig toy() {
    NetworkConfig c;
    c.input_width = 64;
    c.input_height = 48;
    c.n_bins = 16;
    c.patch_size = 8;
    c.embed_dim = 32;
    c.tf_layers = 2;
    c.tf_heads = 4;
    c.n_kernels = 8;
    c.width_mult = 0.25;
    return c;
  }

  int feature_width() const { return input_width / 2; }
  int feature_height() const { return input_height / 2; }
  int patches_x() const { return feature_width() / patch_size; }
  int patches_y() const { return feature_height() / patch_size; }
  int sequence_length() const { return patches_x() * patches_y(); }

  void validate() const;

  std::string to_json() const;
  static NetworkConfig from_json(const std::string& text);
  bool operator==(const NetworkConfig&) const = default;
};

}  // namespace priordepth
