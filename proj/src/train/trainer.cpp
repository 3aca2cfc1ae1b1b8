#include "priordepth/train/trainer.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "priordepth/core/errors.hpp"
#include "priordepth/core/rng.hpp"
#include "priordepth/eval/metrics.hpp"
#include "priordepth/net/checkpoint.hpp"
#include "priordepth/prior/extraction.hpp"

namespace priordepth {

double lr_schedule(int t, const TrainConfig& cfg) {
  return cfg.base_lr * std::pow(cfg.decay_rate, t);
}

AdamW::AdamW(const std::vector<std::pair<std::string, nn::Var>>& params, double weight_decay,
             double beta1, double beta2, double eps)
    : wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {
  slots_.reserve(params.size());
  for (const auto& [name, var] : params)
    slots_.push_back({var, name, nn::Tensor(var->value.shape()), nn::Tensor(var->value.shape())});
}

void AdamW::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (auto& s : slots_) {
    const bool has_grad = s.param->grad.defined();
    double* p = s.param->value.data();
    for (std::int64_t i = 0; i < s.param->value.size(); ++i) {
      const double g = has_grad ? s.param->grad[i] : 0.0;
      s.m[i] = beta1_ * s.m[i] + (1.0 - beta1_) * g;
      s.v[i] = beta2_ * s.v[i] + (1.0 - beta2_) * g * g;
      const double mh = s.m[i] / bc1;
      const double vh = s.v[i] / bc2;
      p[i] -= lr * (mh / (std::sqrt(vh) + eps_) + wd_ * p[i]);
    }
  }
}

std::vector<std::pair<std::string, nn::Tensor>> AdamW::moments_m() const {
  std::vector<std::pair<std::string, nn::Tensor>> out;
  for (const auto& s : slots_) out.emplace_back(s.name, s.m);
  return out;
}

std::vector<std::pair<std::string, nn::Tensor>> AdamW::moments_v() const {
  std::vector<std::pair<std::string, nn::Tensor>> out;
  for (const auto& s : slots_) out.emplace_back(s.name, s.v);
  return out;
}

void AdamW::restore_moments(const std::vector<std::pair<std::string, nn::Tensor>>& m,
                            const std::vector<std::pair<std::string, nn::Tensor>>& v) {
  if (m.size() != slots_.size() || v.size() != slots_.size())
    throw DataError("optimizer state: slot count mismatch");
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    if (m[i].first != slots_[i].name || !m[i].second.same_shape(slots_[i].m))
      throw DataError("optimizer state: mismatch at " + slots_[i].name);
    slots_[i].m = m[i].second;
    slots_[i].v = v[i].second;
  }
}

double clip_global_norm(const std::vector<std::pair<std::string, nn::Var>>& params,
                        double max_norm) {
  double sq = 0.0;
  for (const auto& [name, var] : params) {
    if (!var->grad.defined()) continue;
    for (std::int64_t i = 0; i < var->grad.size(); ++i) sq += var->grad[i] * var->grad[i];
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (const auto& [name, var] : params) {
      if (!var->grad.defined()) continue;
      for (std::int64_t i = 0; i < var->grad.size(); ++i) var->grad[i] *= scale;
    }
  }
  return norm;
}

Trainer::Trainer(DepthNetwork& net, TrainConfig cfg, LossConfig loss_cfg, AugmentConfig aug_cfg)
    : net_(net),
      cfg_(std::move(cfg)),
      loss_cfg_(loss_cfg),
      aug_cfg_(aug_cfg),
      opt_(net.parameters(), cfg_.weight_decay),
      rng_(make_rng(cfg_.seed, 0x7A11)) {
  if (cfg_.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (cfg_.base_lr <= 0.0) throw std::invalid_argument("train: base_lr must be positive");
  if (cfg_.decay_rate <= 0.0 || cfg_.decay_rate > 1.0)
    throw std::invalid_argument("train: decay_rate must be in (0,1]");
}

PriorMaps Trainer::densified_prior(const SparsePrior& prior) const {
  const auto& c = net_.config();
  if (prior.empty() || !c.use_priors)
    return zero_prior_maps(c.input_width, c.input_height, cfg_.prior_sigma);
  return densify(prior, c.input_width, c.input_height, cfg_.prior_sigma);
}

StepBreakdown Trainer::train_step(const std::vector<DepthSample>& batch) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  net_.zero_grad();
  StepBreakdown mean;
  std::vector<nn::Var> totals;
  totals.reserve(batch.size());
  std::string ids;
  for (const auto& raw : batch) {
    ids += ids.empty() ? raw.id : "," + raw.id;
    const DepthSample sample = augment(raw, aug_cfg_, rng_);
    const SparsePrior prior = subsample_prior(sample.prior, cfg_.n_priors, rng_());
    const PriorMaps maps = densified_prior(prior);
    const auto fg = net_.forward_graph(nn::make_constant(sample.image), maps);
    LossConfig lc = loss_cfg_;
    lc.seed = rng_();
    const auto terms = loss_objective(fg.depth, sample.gt_depth, sample.validity, fg.centers, lc);
    totals.push_back(terms.total);
    mean.rmse += terms.rmse->value[0];
    mean.silog += terms.silog->value[0];
    mean.chamfer += terms.chamfer->value[0];
  }
  nn::Var total = totals[0];
  for (std::size_t i = 1; i < totals.size(); ++i) total = nn::add(total, totals[i]);
  total = nn::mul_scalar(total, 1.0 / static_cast<double>(totals.size()));
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  mean.total = total->value[0];
  mean.rmse *= inv_b;
  mean.silog *= inv_b;
  mean.chamfer *= inv_b;
  if (!std::isfinite(mean.total))
    throw std::runtime_error("train_step: non-finite loss on batch ids [" + ids + "]");
  nn::backward(total);
  clip_global_norm(net_.parameters(), cfg_.grad_clip_norm);
  opt_.step(lr_schedule(epoch_, cfg_));
  ++step_;
  return mean;
}

EvalSummary Trainer::evaluate_mean(const std::vector<DepthSample>& eval_set) {
  EvalSummary summary;
  if (eval_set.empty()) return summary;
  double acc = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < eval_set.size(); ++i) {
    const auto& s = eval_set[i];
    const SparsePrior prior =
        subsample_prior(s.prior, cfg_.n_priors, splitmix64(cfg_.seed ^ (0xEA00 + i)));
    const auto pred = net_.forward(s.image, densified_prior(prior));
    const auto reports = evaluate_ranges(pred.depth, s.gt_depth, s.validity,
                                         default_range_caps());
    if (!reports[0].empty) {
      acc += reports[0].rmse_lin;
      ++n;
    }
  }
  if (n > 0) summary.rmse_lin = acc / n;
  summary.images = n;
  return summary;
}

void Trainer::fit(const std::vector<DepthSample>& train_set,
                  const std::vector<DepthSample>& eval_set, std::ostream* log_csv) {
  if (train_set.empty()) throw std::invalid_argument("fit: empty training set");
  if (log_csv && step_ == 0) *log_csv << kLogHeader << "\n";
  bool stop = false;
  for (; epoch_ < cfg_.epochs && !stop; ++epoch_) {
    auto order_rng = make_rng(cfg_.seed, 0xE90C0000ULL + static_cast<std::uint64_t>(epoch_));
    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rand_index(order_rng, i)]);
    for (std::size_t at = 0; at < order.size() && !stop;
         at += static_cast<std::size_t>(cfg_.batch_size)) {
      std::vector<DepthSample> batch;
      for (std::size_t k = at;
           k < std::min(order.size(), at + static_cast<std::size_t>(cfg_.batch_size)); ++k)
        batch.push_back(train_set[order[k]]);
      const auto bd = train_step(batch);
      if (log_csv)
        *log_csv << step_ - 1 << "," << epoch_ << "," << lr_schedule(epoch_, cfg_) << ","
                 << bd.total << "," << bd.rmse << "," << bd.silog << "," << bd.chamfer
                 << "\n";
      if (cfg_.max_steps > 0 && step_ >= cfg_.max_steps) stop = true;
    }
    if (!cfg_.checkpoint_dir.empty()) {
      std::filesystem::create_directories(cfg_.checkpoint_dir);
      save_checkpoint(cfg_.checkpoint_dir / ("epoch_" + std::to_string(epoch_) + ".ckpt"),
                      net_);
    }
    if (cfg_.eval_every > 0 && !eval_set.empty() && (epoch_ + 1) % cfg_.eval_every == 0) {
      const auto summary = evaluate_mean(eval_set);
      eval_history_.push_back(summary);
      if (summary.images > 0 && summary.rmse_lin < best_rmse_) {
        best_rmse_ = summary.rmse_lin;
        if (!cfg_.checkpoint_dir.empty())
          save_checkpoint(cfg_.checkpoint_dir / "best.ckpt", net_);
      }
    }
  }
}

namespace {

constexpr char kStateMagic[8] = {'P', 'D', 'E', 'P', 'T', 'R', 'S', 'T'};

std::vector<NamedTensor> to_named(const std::vector<std::pair<std::string, nn::Tensor>>& v) {
  std::vector<NamedTensor> out;
  out.reserve(v.size());
  for (const auto& [n, t] : v) out.push_back({n, t});
  return out;
}

std::vector<std::pair<std::string, nn::Tensor>> from_named(const std::vector<NamedTensor>& v) {
  std::vector<std::pair<std::string, nn::Tensor>> out;
  out.reserve(v.size());
  for (const auto& e : v) out.emplace_back(e.name, e.tensor);
  return out;
}

}  // namespace

void Trainer::save_state(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("train state: cannot write " + path.string());
  os.write(kStateMagic, sizeof(kStateMagic));
  nlohmann::json j;
  j["epoch"] = epoch_;
  j["step"] = step_;
  j["best_rmse"] = std::isfinite(best_rmse_) ? best_rmse_
                                             : std::numeric_limits<double>::max();
  j["adam_steps"] = opt_.steps_taken();
  std::ostringstream rng_text;
  rng_text << rng_;
  j["rng"] = rng_text.str();
  j["net_config"] = net_.config().to_json();
  const std::string header = j.dump();
  const std::uint64_t len = header.size();
  os.write(reinterpret_cast<const char*>(&len), sizeof(len));
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  std::vector<NamedTensor> params;
  for (const auto& [name, var] : net_.parameters()) params.push_back({name, var->value});
  write_tensor_dict(os, params);
  write_tensor_dict(os, to_named(opt_.moments_m()));
  write_tensor_dict(os, to_named(opt_.moments_v()));
  if (!os) throw DataError("train state: write failed for " + path.string());
}

void Trainer::load_state(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("train state: cannot open " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kStateMagic, sizeof(magic)) != 0)
    throw DataError("train state: bad magic in " + path.string());
  std::uint64_t len = 0;
  is.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string header(len, '\0');
  is.read(header.data(), static_cast<std::streamsize>(len));
  if (!is) throw DataError("train state: truncated header");
  const auto j = nlohmann::json::parse(header);
  const auto cfg = NetworkConfig::from_json(j.at("net_config").get<std::string>());
  const auto diff = config_diff(cfg, net_.config());
  if (!diff.empty()) {
    std::string keys;
    for (const auto& k : diff) keys += keys.empty() ? k : ", " + k;
    throw DataError("train state: incompatible network config keys: " + keys);
  }
  epoch_ = j.at("epoch").get<int>();
  step_ = j.at("step").get<std::int64_t>();
  best_rmse_ = j.at("best_rmse").get<double>();
  if (best_rmse_ >= std::numeric_limits<double>::max())
    best_rmse_ = std::numeric_limits<double>::infinity();
  opt_.set_steps_taken(j.at("adam_steps").get<std::int64_t>());
  std::istringstream rng_text(j.at("rng").get<std::string>());
  rng_text >> rng_;
  const auto params = read_tensor_dict(is);
  if (params.size() != net_.parameters().size())
    throw DataError("train state: parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, var] = net_.parameters()[i];
    if (params[i].name != name || !params[i].tensor.same_shape(var->value))
      throw DataError("train state: mismatch at " + name);
    var->value = params[i].tensor;
  }
  // sequenced reads: argument evaluation order must not decide which dict is which
  const auto moments_m = from_named(read_tensor_dict(is));
  const auto moments_v = from_named(read_tensor_dict(is));
  opt_.restore_moments(moments_m, moments_v);
}

}  // namespace priordepth
