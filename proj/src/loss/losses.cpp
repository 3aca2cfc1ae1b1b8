#include "priordepth/loss/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "priordepth/core/rng.hpp"

namespace priordepth {

namespace {

using nn::Tensor;
using nn::Var;

constexpr double kLogFloor = 1e-6;  // meters; Eq.-style logs are undefined at 0

void check_pred_shape(const Var& pred, const DepthMap& gt) {
  const std::int64_t need = static_cast<std::int64_t>(gt.width()) * gt.height();
  if (pred->value.size() != need)
    throw std::invalid_argument("loss: prediction size does not match ground truth");
}

struct MaskedConstants {
  Var mask;        // 1.0 at valid pixels, 0.0 elsewhere
  Var gt_zeroed;   // gt at valid pixels, 0.0 elsewhere
  Var log_gt;      // log(gt) at valid pixels, 0.0 elsewhere
  double count = 0.0;
};

MaskedConstants masked_constants(const DepthMap& gt, const MaskMap& mask, const nn::Shape& shape) {
  if (gt.width() != mask.width() || gt.height() != mask.height())
    throw std::invalid_argument("loss: gt/mask shape mismatch");
  Tensor m(shape), gz(shape), lg(shape);
  std::int64_t k = 0, valid = 0;
  for (int y = 0; y < gt.height(); ++y) {
    for (int x = 0; x < gt.width(); ++x, ++k) {
      if (valid_depth_at(gt, mask, x, y)) {
        m[k] = 1.0;
        gz[k] = gt.at(x, y);
        lg[k] = std::log(gt.at(x, y));
        ++valid;
      }
    }
  }
  if (valid == 0) throw std::invalid_argument("empty mask");
  MaskedConstants out;
  out.mask = nn::make_constant(std::move(m));
  out.gt_zeroed = nn::make_constant(std::move(gz));
  out.log_gt = nn::make_constant(std::move(lg));
  out.count = static_cast<double>(valid);
  return out;
}

}  // namespace

nn::Var loss_rmse(const nn::Var& pred, const DepthMap& gt, const MaskMap& mask) {
  check_pred_shape(pred, gt);
  const auto mc = masked_constants(gt, mask, pred->value.shape());
  const Var diff = nn::sub(nn::mul(pred, mc.mask), mc.gt_zeroed);
  const Var mean_sq = nn::mul_scalar(nn::sum_all(nn::mul(diff, diff)), 1.0 / mc.count);
  return nn::sqrt_v(mean_sq);
}

nn::Var loss_silog(const nn::Var& pred, const DepthMap& gt, const MaskMap& mask,
                   const LossConfig& cfg) {
  check_pred_shape(pred, gt);
  const auto mc = masked_constants(gt, mask, pred->value.shape());
  const Var log_pred = nn::log_v(nn::clamp_min(pred, kLogFloor));
  const Var g = nn::mul(nn::sub(log_pred, mc.log_gt), mc.mask);
  const Var mean_sq = nn::mul_scalar(nn::sum_all(nn::mul(g, g)), 1.0 / mc.count);
  const Var mean_g = nn::mul_scalar(nn::sum_all(g), 1.0 / mc.count);
  const Var variance_like =
      nn::sub(mean_sq, nn::mul_scalar(nn::mul(mean_g, mean_g), cfg.lambda_silog));
  return nn::mul_scalar(nn::sqrt_v(variance_like), cfg.beta);
}

nn::Var loss_chamfer(const nn::Var& centers, const DepthMap& gt, const MaskMap& mask,
                     const LossConfig& cfg) {
  std::vector<double> depths;
  depths.reserve(gt.size());
  for (int y = 0; y < gt.height(); ++y)
    for (int x = 0; x < gt.width(); ++x)
      if (valid_depth_at(gt, mask, x, y)) depths.push_back(gt.at(x, y));
  if (depths.empty()) throw std::invalid_argument("empty mask");
  if (cfg.chamfer_samples > 0 &&
      depths.size() > static_cast<std::size_t>(cfg.chamfer_samples)) {
    auto rng = make_rng(cfg.seed, 0xC11A);
    const auto picks =
        sample_indices(rng, depths.size(), static_cast<std::size_t>(cfg.chamfer_samples));
    std::vector<double> sub(picks.size());
    for (std::size_t i = 0; i < picks.size(); ++i) sub[i] = depths[picks[i]];
    depths = std::move(sub);
  }
  return nn::chamfer_sets(centers, depths);
}

ObjectiveTerms loss_objective(const nn::Var& pred, const DepthMap& gt, const MaskMap& mask,
                              const nn::Var& centers, const LossConfig& cfg) {
  ObjectiveTerms t;
  t.rmse = loss_rmse(pred, gt, mask);
  t.silog = loss_silog(pred, gt, mask, cfg);
  t.chamfer = loss_chamfer(centers, gt, mask, cfg);
  t.total = nn::add(nn::add(nn::mul_scalar(t.rmse, cfg.w_rmse),
                            nn::mul_scalar(t.silog, cfg.w_silog)),
                    nn::mul_scalar(t.chamfer, cfg.w_chamfer));
  return t;
}

namespace {

nn::Var as_constant(const DepthMap& m) {
  Tensor t({m.height(), m.width()});
  std::copy(m.data(), m.data() + m.size(), t.data());
  return nn::make_constant(std::move(t));
}

}  // namespace

double loss_rmse(const DepthMap& pred, const DepthMap& gt, const MaskMap& mask) {
  nn::NoGradGuard ng;
  return loss_rmse(as_constant(pred), gt, mask)->value[0];
}

double loss_silog(const DepthMap& pred, const DepthMap& gt, const MaskMap& mask,
                  const LossConfig& cfg) {
  nn::NoGradGuard ng;
  return loss_silog(as_constant(pred), gt, mask, cfg)->value[0];
}

}  // namespace priordepth
