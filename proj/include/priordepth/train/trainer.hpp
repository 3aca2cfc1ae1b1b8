#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <vector>

#include "priordepth/data/augment.hpp"
#include "priordepth/data/sample.hpp"
#include "priordepth/loss/losses.hpp"
#include "priordepth/net/model.hpp"

namespace priordepth {

struct TrainConfig {
  double base_lr = 1e-4;
  double decay_rate = 0.9;  // applied once per epoch
  int batch_size = 6;
  int epochs = 10;
  double weight_decay = 1e-2;
  double grad_clip_norm = 1.0;  // <= 0 disables clipping
  int n_priors = 200;
  double prior_sigma = 10.0;  // px at working resolution
  std::uint64_t seed = 0;
  std::filesystem::path checkpoint_dir;  // empty: no checkpoints written
  int eval_every = 1;                    // epochs; 0 disables evaluation
  int max_steps = 0;                     // 0: no cap
};

// lr0 * r^t with t counted in epochs
double lr_schedule(int t, const TrainConfig& cfg);

// Decoupled weight decay with adaptive moments.
class AdamW {
 public:
  AdamW(const std::vector<std::pair<std::string, nn::Var>>& params, double weight_decay,
        double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(double lr);

  std::int64_t steps_taken() const { return t_; }
  void set_steps_taken(std::int64_t t) { t_ = t; }
  std::vector<std::pair<std::string, nn::Tensor>> moments_m() const;
  std::vector<std::pair<std::string, nn::Tensor>> moments_v() const;
  void restore_moments(const std::vector<std::pair<std::string, nn::Tensor>>& m,
                       const std::vector<std::pair<std::string, nn::Tensor>>& v);

 private:
  struct Slot {
    nn::Var param;
    std::string name;
    nn::Tensor m, v;
  };
  std::vector<Slot> slots_;
  double wd_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
};

// Scales all gradients so the global norm is at most max_norm; returns the
// pre-clip norm. max_norm <= 0 leaves gradients untouched.
double clip_global_norm(const std::vector<std::pair<std::string, nn::Var>>& params,
                        double max_norm);

struct StepBreakdown {
  double total = 0.0, rmse = 0.0, silog = 0.0, chamfer = 0.0;
};

struct EvalSummary {
  double rmse_lin = std::numeric_limits<double>::quiet_NaN();
  int images = 0;
};

class Trainer {
 public:
  Trainer(DepthNetwork& net, TrainConfig cfg, LossConfig loss_cfg, AugmentConfig aug_cfg);

  // One optimizer update over a batch: augment, subsample priors, densify,
  // forward, weighted objective, clip, AdamW. Throws on a non-finite loss,
  // naming the offending sample ids.
  StepBreakdown train_step(const std::vector<DepthSample>& batch);

  // Seeded-shuffle epochs with per-epoch checkpoints and periodic evaluation;
  // optionally streams one CSV row per step.
  void fit(const std::vector<DepthSample>& train_set,
           const std::vector<DepthSample>& eval_set, std::ostream* log_csv = nullptr);

  // Mean full-range linear RMSE over the eval set with n_priors priors.
  EvalSummary evaluate_mean(const std::vector<DepthSample>& eval_set);

  int epoch() const { return epoch_; }
  std::int64_t step() const { return step_; }
  double best_rmse() const { return best_rmse_; }
  const std::vector<EvalSummary>& eval_history() const { return eval_history_; }

  void save_state(const std::filesystem::path& path) const;
  void load_state(const std::filesystem::path& path);

  static constexpr const char* kLogHeader = "step,epoch,lr,total,rmse,silog,chamfer";

 private:
  PriorMaps densified_prior(const SparsePrior& prior) const;

  DepthNetwork& net_;
  TrainConfig cfg_;
  LossConfig loss_cfg_;
  AugmentConfig aug_cfg_;
  AdamW opt_;
  std::mt19937_64 rng_;
  int epoch_ = 0;
  std::int64_t step_ = 0;
  double best_rmse_ = std::numeric_limits<double>::infinity();
  std::vector<EvalSummary> eval_history_;
};

}  // namespace priordepth
