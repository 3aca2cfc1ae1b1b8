#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "priordepth/core/image.hpp"
#include "priordepth/net/config.hpp"
#include "priordepth/nn/autodiff.hpp"
#include "priordepth/prior/densify.hpp"

namespace priordepth {

// Adaptive-bin state for one image: rectified logits, metric widths summing
// to the predicted range, and strictly increasing cumulative-midpoint centers.
struct BinPrediction {
  std::vector<double> logits;   // rectified, >= 0
  std::vector<double> widths;   // meters
  std::vector<double> centers;  // meters
  double range = 0.0;           // meters
};

struct DepthPrediction {
  DepthMap depth;        // at working resolution
  nn::Tensor bin_probs;  // [n_bins, H/2, W/2]
  BinPrediction bins;
};

// Rectifies logits at zero, maps range_raw through a softplus floor, and
// normalizes eps-shifted logits so the widths sum to the range.
struct BinWidths {
  std::vector<double> rectified;
  std::vector<double> widths;
  double range = 0.0;
};
BinWidths compute_bin_widths(const std::vector<double>& logits, double range_raw,
                             const NetworkConfig& cfg);

// c_i = d_min + sum_{j<i} w_j + w_i / 2
std::vector<double> compute_bin_centers(const std::vector<double>& widths, double d_min);

// Feature maps at strides 2, 4, 8, 16, 32 relative to the input.
struct FeaturePyramid {
  std::vector<nn::Var> levels;
};

namespace detail {

class ParamRegistry {
 public:
  explicit ParamRegistry(std::uint64_t seed);
  nn::Var he_normal(const std::string& name, nn::Shape shape, int fan_in);
  nn::Var normal(const std::string& name, nn::Shape shape, double stddev);
  nn::Var constant(const std::string& name, nn::Shape shape, double v);
  const std::vector<std::pair<std::string, nn::Var>>& entries() const { return entries_; }
  nn::Var find(const std::string& name) const;

 private:
  std::mt19937_64 rng_;
  std::vector<std::pair<std::string, nn::Var>> entries_;
};

struct Conv2dLayer {
  nn::Var w, b;
  int stride = 1, pad = 0, groups = 1;
  nn::Var operator()(const nn::Var& x) const { return nn::conv2d(x, w, b, stride, pad, groups); }
};

struct GroupNormLayer {
  nn::Var gamma, beta;
  int groups = 8;
  nn::Var operator()(const nn::Var& x) const { return nn::group_norm(x, groups, gamma, beta); }
};

struct LayerNormLayer {
  nn::Var gamma, beta;
  nn::Var operator()(const nn::Var& x) const { return nn::layer_norm(x, gamma, beta); }
};

struct LinearLayer {
  nn::Var w, b;  // w: [in, out]
  nn::Var operator()(const nn::Var& x) const {
    return nn::add_row_broadcast(nn::matmul(x, w), b);
  }
};

struct InvertedResidual {
  std::optional<Conv2dLayer> expand;
  std::optional<GroupNormLayer> expand_norm;
  Conv2dLayer depthwise;
  GroupNormLayer dw_norm;
  Conv2dLayer project;
  GroupNormLayer project_norm;
  bool residual = false;
  nn::Var operator()(const nn::Var& x) const;
};

struct ConvNormAct {
  Conv2dLayer conv;
  GroupNormLayer norm;
  nn::Var operator()(const nn::Var& x) const;
};

struct TransformerBlock {
  LayerNormLayer ln1, ln2;
  LinearLayer qkv, proj, fc1, fc2;
  int heads = 4;
  nn::Var operator()(const nn::Var& x) const;
};

struct DecoderStage {
  Conv2dLayer conv1, conv2;
};

}  // namespace detail

// Encoder-decoder with prior injection at every decoder stage, a patch
// transformer predicting bin-width logits plus range, and a convolutional
// head that regresses depth as the probability-weighted sum of bin centers.
class DepthNetwork {
 public:
  DepthNetwork(NetworkConfig cfg, std::uint64_t seed);

  const NetworkConfig& config() const { return cfg_; }

  FeaturePyramid encode(const nn::Var& image) const;
  nn::Var decode(const FeaturePyramid& pyramid, const PriorMaps& prior) const;

  struct MvitOutput {
    nn::Var bin_logits;      // [n_bins], raw head output
    nn::Var range_raw;       // [1]
    nn::Var attention_maps;  // [n_kernels, h, w]
  };
  MvitOutput mvit_forward(const nn::Var& features, const PriorMaps& prior) const;

  struct RegressOutput {
    nn::Var depth;      // [1, H, W]
    nn::Var bin_probs;  // [n_bins, h, w]
  };
  RegressOutput regress_depth(const nn::Var& attention_maps, const nn::Var& centers) const;

  struct ForwardGraph {
    nn::Var depth;      // [1, H, W]
    nn::Var bin_probs;  // [n_bins, h, w]
    nn::Var rectified;  // [n_bins]
    nn::Var widths;     // [n_bins]
    nn::Var centers;    // [n_bins]
    nn::Var range;      // [1]
  };
  ForwardGraph forward_graph(const nn::Var& image, const PriorMaps& prior) const;

  // Inference entry point; runs without recording gradients.
  DepthPrediction forward(const nn::Tensor& image, const PriorMaps& prior) const;

  struct BinGraph {
    nn::Var rectified, widths, centers, range;
  };
  BinGraph bin_graph(const nn::Var& bin_logits, const nn::Var& range_raw) const;

  const std::vector<std::pair<std::string, nn::Var>>& parameters() const {
    return params_.entries();
  }
  std::int64_t num_parameters() const;
  std::string summary() const;
  void zero_grad() const;

 private:
  nn::Var prior_tensor(const PriorMaps& maps, int factor) const;
  void build();

  NetworkConfig cfg_;
  detail::ParamRegistry params_;

  // encoder
  detail::ConvNormAct stem_;
  std::vector<detail::InvertedResidual> blocks_;
  std::vector<int> tap_after_;  // block index after which a pyramid level is taken
  detail::ConvNormAct top_;     // final 1x1 expansion at stride 32

  // decoder
  detail::Conv2dLayer reduce_;
  std::vector<detail::DecoderStage> stages_;

  // transformer
  detail::Conv2dLayer patch_embed_;
  nn::Var pos_embed_;
  std::vector<detail::TransformerBlock> tf_blocks_;
  detail::LinearLayer head_fc1_, head_fc2_;
  detail::Conv2dLayer query_conv_;

  // regression
  detail::Conv2dLayer regress_conv_;
};

}  // namespace priordepth
