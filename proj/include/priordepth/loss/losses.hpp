#pragma once

#include <cstdint>

#include "priordepth/core/image.hpp"
#include "priordepth/nn/autodiff.hpp"

namespace priordepth {

struct LossConfig {
  double lambda_silog = 0.85;  // variance weight inside the SILog loss
  double beta = 10.0;          // SILog output scale
  double w_rmse = 0.3;
  double w_silog = 0.6;
  double w_chamfer = 0.1;
  int chamfer_samples = 8192;  // cap on sampled ground-truth depths
  std::uint64_t seed = 0;
};

// Losses are differentiable in pred (and centers for the Chamfer term);
// ground truth and masks enter as constants. Invalid pixels are multiplied
// out before any reduction, so they can never contribute value or gradient.

// sqrt(mean over valid pixels of (pred - gt)^2); throws "empty mask".
nn::Var loss_rmse(const nn::Var& pred, const DepthMap& gt, const MaskMap& mask);

// beta * sqrt(mean(g^2) - lambda * mean(g)^2), g = log(max(pred,1e-6)) - log(gt)
nn::Var loss_silog(const nn::Var& pred, const DepthMap& gt, const MaskMap& mask,
                   const LossConfig& cfg);

// Symmetric squared-nearest-distance sum between the bin centers and a seeded
// uniform subsample of at most cfg.chamfer_samples valid ground-truth depths.
nn::Var loss_chamfer(const nn::Var& centers, const DepthMap& gt, const MaskMap& mask,
                     const LossConfig& cfg);

struct ObjectiveTerms {
  nn::Var total;
  nn::Var rmse;
  nn::Var silog;
  nn::Var chamfer;
};

// w_rmse * L_RMSE + w_silog * L_SILog + w_chamfer * L_Chamfer, terms kept
// separate for logging.
ObjectiveTerms loss_objective(const nn::Var& pred, const DepthMap& gt, const MaskMap& mask,
                              const nn::Var& centers, const LossConfig& cfg);

// Value-only conveniences for callers without a graph.
double loss_rmse(const DepthMap& pred, const DepthMap& gt, const MaskMap& mask);
double loss_silog(const DepthMap& pred, const DepthMap& gt, const MaskMap& mask,
                  const LossConfig& cfg);

}  // namespace priordepth
