#include "priordepth/net/model.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "priordepth/core/rng.hpp"

namespace priordepth {

using nn::Tensor;
using nn::Var;

// ---------------------------------------------------------------------------
// bin arithmetic (plain)
// ---------------------------------------------------------------------------

BinWidths compute_bin_widths(const std::vector<double>& logits, double range_raw,
                             const NetworkConfig& cfg) {
  if (static_cast<int>(logits.size()) != cfg.n_bins)
    throw std::invalid_argument("compute_bin_widths: logit count != n_bins");
  BinWidths out;
  out.rectified.resize(logits.size());
  out.widths.resize(logits.size());
  double denom = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out.rectified[i] = std::max(logits[i], 0.0);
    denom += out.rectified[i] + cfg.eps;
  }
  const double sp = range_raw > 30.0 ? range_raw : std::log1p(std::exp(range_raw));
  out.range = cfg.r_min + sp;
  for (std::size_t i = 0; i < logits.size(); ++i)
    out.widths[i] = out.range * (out.rectified[i] + cfg.eps) / denom;
  return out;
}

std::vector<double> compute_bin_centers(const std::vector<double>& widths, double d_min) {
  std::vector<double> centers(widths.size());
  double running = d_min;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    if (widths[i] <= 0.0) throw std::invalid_argument("compute_bin_centers: widths must be > 0");
    centers[i] = running + 0.5 * widths[i];
    running += widths[i];
  }
  return centers;
}

// ---------------------------------------------------------------------------
// parameter registry and layer forwards
// ---------------------------------------------------------------------------

namespace detail {

ParamRegistry::ParamRegistry(std::uint64_t seed) : rng_(make_rng(seed, 0x9A7A)) {}

Var ParamRegistry::he_normal(const std::string& name, nn::Shape shape, int fan_in) {
  Tensor t(std::move(shape));
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = stddev * rand_normal(rng_);
  Var v = nn::make_leaf(std::move(t), true);
  entries_.emplace_back(name, v);
  return v;
}

Var ParamRegistry::normal(const std::string& name, nn::Shape shape, double stddev) {
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = stddev * rand_normal(rng_);
  Var v = nn::make_leaf(std::move(t), true);
  entries_.emplace_back(name, v);
  return v;
}

Var ParamRegistry::constant(const std::string& name, nn::Shape shape, double value) {
  Var v = nn::make_leaf(Tensor::full(std::move(shape), value), true);
  entries_.emplace_back(name, v);
  return v;
}

Var ParamRegistry::find(const std::string& name) const {
  for (const auto& [n, v] : entries_)
    if (n == name) return v;
  return nullptr;
}

Var InvertedResidual::operator()(const Var& x) const {
  Var y = x;
  if (expand) y = nn::relu6((*expand_norm)((*expand)(y)));
  y = nn::relu6(dw_norm(depthwise(y)));
  y = project_norm(project(y));
  if (residual) y = nn::add(x, y);
  return y;
}

Var ConvNormAct::operator()(const Var& x) const { return nn::relu6(norm(conv(x))); }

Var TransformerBlock::operator()(const Var& x) const {
  const int e = static_cast<int>(ln1.gamma->value.size());
  const int dh = e / heads;
  // pre-norm attention; the residual stream itself is never normalized, so
  // magnitude information from the inputs survives to the output embeddings
  Var h = ln1(x);
  Var qkv_out = qkv(h);
  Var q = nn::slice_cols(qkv_out, 0, e);
  Var k = nn::slice_cols(qkv_out, e, 2 * e);
  Var v = nn::slice_cols(qkv_out, 2 * e, 3 * e);
  std::vector<Var> head_outs;
  head_outs.reserve(heads);
  for (int hd = 0; hd < heads; ++hd) {
    Var qh = nn::slice_cols(q, hd * dh, (hd + 1) * dh);
    Var kh = nn::slice_cols(k, hd * dh, (hd + 1) * dh);
    Var vh = nn::slice_cols(v, hd * dh, (hd + 1) * dh);
    Var scores = nn::mul_scalar(nn::matmul(qh, nn::transpose(kh)), 1.0 / std::sqrt(dh));
    head_outs.push_back(nn::matmul(nn::softmax_rows(scores), vh));
  }
  Var attn = proj(nn::concat_cols(head_outs));
  Var x1 = nn::add(x, attn);
  Var m = fc2(nn::gelu(fc1(ln2(x1))));
  return nn::add(x1, m);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// network construction
// ---------------------------------------------------------------------------

namespace {

// channel widths rounded to multiples of 8 so GroupNorm(8) always applies
int scaled_ch(int c, double width_mult) {
  const int v = static_cast<int>(std::lround(c * width_mult / 8.0)) * 8;
  return std::max(8, v);
}

struct BlockSetting {
  int expand, channels, repeats, stride;
};

// MobileNetV2 layout
constexpr BlockSetting kBlockSettings[] = {
    {1, 16, 1, 1}, {6, 24, 2, 2}, {6, 32, 3, 2}, {6, 64, 4, 2},
    {6, 96, 3, 1}, {6, 160, 3, 2}, {6, 320, 1, 1},
};
constexpr int kStemChannels = 32;
constexpr int kTopChannels = 1280;
// pyramid taps: after these setting groups (strides 2, 4, 8, 16)
constexpr int kTapGroups[] = {0, 1, 2, 4};

constexpr int kDecoderBase[] = {512, 256, 128, 128};
constexpr int kReduceBase = 512;

constexpr double kRangeBiasInit = 5.0;  // softplus(5) ~ 5 m initial range

}  // namespace

DepthNetwork::DepthNetwork(NetworkConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)), params_(seed) {
  cfg_.validate();
  build();
}

void DepthNetwork::build() {
  const double wm = cfg_.width_mult;
  const int prior_ch = cfg_.use_priors ? 2 : 0;
  auto conv = [&](const std::string& name, int cin, int cout, int k, int stride, int pad,
                  int groups = 1) {
    detail::Conv2dLayer l;
    l.w = params_.he_normal(name + ".w", {cout, cin / groups, k, k}, (cin / groups) * k * k);
    l.b = params_.constant(name + ".b", {cout}, 0.0);
    l.stride = stride;
    l.pad = pad;
    l.groups = groups;
    return l;
  };
  auto gnorm = [&](const std::string& name, int ch) {
    detail::GroupNormLayer l;
    l.gamma = params_.constant(name + ".gamma", {ch}, 1.0);
    l.beta = params_.constant(name + ".beta", {ch}, 0.0);
    l.groups = 8;
    return l;
  };
  auto lnorm = [&](const std::string& name, int ch) {
    detail::LayerNormLayer l;
    l.gamma = params_.constant(name + ".gamma", {ch}, 1.0);
    l.beta = params_.constant(name + ".beta", {ch}, 0.0);
    return l;
  };
  auto linear = [&](const std::string& name, int in, int out) {
    detail::LinearLayer l;
    l.w = params_.normal(name + ".w", {in, out}, std::sqrt(2.0 / (in + out)));
    l.b = params_.constant(name + ".b", {out}, 0.0);
    return l;
  };

  // encoder
  int ch = scaled_ch(kStemChannels, wm);
  stem_.conv = conv("encoder.stem.conv", 3, ch, 3, 2, 1);
  stem_.norm = gnorm("encoder.stem.norm", ch);
  int block_idx = 0;
  std::vector<int> tap_channels;
  for (std::size_t g = 0; g < std::size(kBlockSettings); ++g) {
    const auto& s = kBlockSettings[g];
    const int cout = scaled_ch(s.channels, wm);
    for (int r = 0; r < s.repeats; ++r, ++block_idx) {
      const std::string base = "encoder.block" + std::to_string(block_idx);
      const int stride = r == 0 ? s.stride : 1;
      const int hidden = ch * s.expand;
      detail::InvertedResidual blk;
      if (s.expand != 1) {
        blk.expand = conv(base + ".expand", ch, hidden, 1, 1, 0);
        blk.expand_norm = gnorm(base + ".expand_norm", hidden);
      }
      blk.depthwise = conv(base + ".dw", hidden, hidden, 3, stride, 1, hidden);
      blk.dw_norm = gnorm(base + ".dw_norm", hidden);
      blk.project = conv(base + ".project", hidden, cout, 1, 1, 0);
      blk.project_norm = gnorm(base + ".project_norm", cout);
      blk.residual = stride == 1 && ch == cout;
      blocks_.push_back(std::move(blk));
      ch = cout;
    }
    for (int tg : kTapGroups)
      if (static_cast<int>(g) == tg) {
        tap_after_.push_back(block_idx - 1);
        tap_channels.push_back(ch);
      }
  }
  const int top_ch = scaled_ch(kTopChannels, wm);
  top_.conv = conv("encoder.top.conv", ch, top_ch, 1, 1, 0);
  top_.norm = gnorm("encoder.top.norm", top_ch);

  // decoder: no normalization after the prior channels join the stream, so
  // the metric scale they carry is not normalized away
  int dec_in = scaled_ch(kReduceBase, wm);
  reduce_ = conv("decoder.reduce", top_ch, dec_in, 1, 1, 0);
  const int skip_channels[] = {tap_channels[3], tap_channels[2], tap_channels[1],
                               tap_channels[0]};
  for (int i = 0; i < 4; ++i) {
    const int cout = scaled_ch(kDecoderBase[i], wm);
    const std::string base = "decoder.stage" + std::to_string(i);
    detail::DecoderStage st;
    st.conv1 = conv(base + ".conv1", dec_in + skip_channels[i] + prior_ch, cout, 3, 1, 1);
    st.conv2 = conv(base + ".conv2", cout, cout, 3, 1, 1);
    stages_.push_back(std::move(st));
    dec_in = cout;
  }

  // transformer
  const int e = cfg_.embed_dim;
  const int feat_ch = dec_in + prior_ch;
  patch_embed_ = conv("mvit.patch", feat_ch, e, cfg_.patch_size, cfg_.patch_size, 0);
  pos_embed_ = params_.normal("mvit.pos_embed", {cfg_.sequence_length(), e}, 0.02);
  for (int l = 0; l < cfg_.tf_layers; ++l) {
    const std::string base = "mvit.layer" + std::to_string(l);
    detail::TransformerBlock blk;
    blk.ln1 = lnorm(base + ".ln1", e);
    blk.ln2 = lnorm(base + ".ln2", e);
    blk.qkv = linear(base + ".qkv", e, 3 * e);
    blk.proj = linear(base + ".proj", e, e);
    blk.fc1 = linear(base + ".fc1", e, 4 * e);
    blk.fc2 = linear(base + ".fc2", 4 * e, e);
    blk.heads = cfg_.tf_heads;
    tf_blocks_.push_back(std::move(blk));
  }
  head_fc1_ = linear("mvit.head.fc1", e, e);
  head_fc2_ = linear("mvit.head.fc2", e, cfg_.n_bins + 1);
  head_fc2_.b->value[cfg_.n_bins] = kRangeBiasInit;
  query_conv_ = conv("mvit.query", feat_ch, e, 3, 1, 1);

  // regression
  regress_conv_ = conv("regress.conv", cfg_.n_kernels, cfg_.n_bins, 1, 1, 0);
}

// ---------------------------------------------------------------------------
// forward pieces
// ---------------------------------------------------------------------------

Var DepthNetwork::prior_tensor(const PriorMaps& maps, int factor) const {
  const PriorMaps scaled = factor == 1 ? maps : downsample_prior(maps, factor);
  const int w = scaled.width(), h = scaled.height();
  Tensor t({2, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      t.at(0, y, x) = scaled.s1.at(x, y);
      t.at(1, y, x) = scaled.s2.at(x, y);
    }
  return nn::make_constant(std::move(t));
}

FeaturePyramid DepthNetwork::encode(const nn::Var& image) const {
  if (image->value.rank() != 3 || image->value.dim(0) != 3 ||
      image->value.dim(1) != cfg_.input_height || image->value.dim(2) != cfg_.input_width)
    throw std::invalid_argument("encode: image shape does not match config");
  FeaturePyramid pyr;
  Var x = stem_(image);
  std::size_t tap = 0;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    x = blocks_[i](x);
    if (tap < tap_after_.size() && static_cast<int>(i) == tap_after_[tap]) {
      pyr.levels.push_back(x);
      ++tap;
    }
  }
  pyr.levels.push_back(top_(x));
  return pyr;
}

Var DepthNetwork::decode(const FeaturePyramid& pyramid, const PriorMaps& prior) const {
  if (pyramid.levels.size() != 5) throw std::invalid_argument("decode: expected 5 levels");
  if (cfg_.use_priors &&
      (prior.width() != cfg_.input_width || prior.height() != cfg_.input_height))
    throw std::invalid_argument("decode: prior must be at working resolution");
  Var x = nn::relu(reduce_(pyramid.levels[4]));
  const int factors[] = {16, 8, 4, 2};
  for (int i = 0; i < 4; ++i) {
    const Var& skip = pyramid.levels[3 - i];
    x = nn::upsample_bilinear(x, skip->value.dim(1), skip->value.dim(2));
    std::vector<Var> cat = {x, skip};
    if (cfg_.use_priors) cat.push_back(prior_tensor(prior, factors[i]));
    x = nn::relu(stages_[i].conv1(nn::concat_channels(cat)));
    x = nn::relu(stages_[i].conv2(x));
  }
  return x;
}

DepthNetwork::MvitOutput DepthNetwork::mvit_forward(const nn::Var& features,
                                                    const PriorMaps& prior) const {
  if (features->value.rank() != 3) throw std::invalid_argument("mvit: rank-3 features expected");
  const int fh = features->value.dim(1), fw = features->value.dim(2);
  if (fh % cfg_.patch_size != 0 || fw % cfg_.patch_size != 0)
    throw std::invalid_argument("mvit: patch size must divide feature dimensions");
  Var x_in = features;
  if (cfg_.use_priors) {
    if (prior.width() != cfg_.input_width || prior.height() != cfg_.input_height)
      throw std::invalid_argument("mvit: prior must be at working resolution");
    const Var pf = prior_tensor(prior, 2);
    if (pf->value.dim(1) != fh || pf->value.dim(2) != fw)
      throw std::invalid_argument("mvit: feature/prior resolution mismatch");
    x_in = nn::concat_channels({features, pf});
  }
  const int e = cfg_.embed_dim;
  const int s = (fh / cfg_.patch_size) * (fw / cfg_.patch_size);
  if (s != cfg_.sequence_length())
    throw std::invalid_argument("mvit: feature size does not match configured patch grid");

  Var emb = patch_embed_(x_in);                       // [E, fh/p, fw/p]
  Var seq = nn::transpose(nn::reshape(emb, {e, s}));  // [S, E]
  Var x = nn::add(seq, pos_embed_);
  for (const auto& blk : tf_blocks_) x = blk(x);

  Var token0 = nn::slice_rows(x, 0, 1);
  Var head = head_fc2_(nn::gelu(head_fc1_(token0)));
  Var head_vec = nn::reshape(head, {cfg_.n_bins + 1});

  MvitOutput out;
  out.bin_logits = nn::slice_rows(head_vec, 0, cfg_.n_bins);
  out.range_raw = nn::slice_rows(head_vec, cfg_.n_bins, cfg_.n_bins + 1);

  Var kernels = nn::slice_rows(x, 1, cfg_.n_kernels + 1);  // [K, E]
  Var q = query_conv_(x_in);                               // [E, fh, fw]
  Var maps = nn::matmul(kernels, nn::reshape(q, {e, fh * fw}));
  out.attention_maps = nn::reshape(maps, {cfg_.n_kernels, fh, fw});
  return out;
}

DepthNetwork::BinGraph DepthNetwork::bin_graph(const nn::Var& bin_logits,
                                               const nn::Var& range_raw) const {
  if (bin_logits->value.size() != cfg_.n_bins)
    throw std::invalid_argument("bin_graph: logit count != n_bins");
  BinGraph g;
  g.rectified = nn::relu(bin_logits);
  g.range = nn::add_scalar(nn::softplus(range_raw), cfg_.r_min);
  const Var shifted = nn::add_scalar(g.rectified, cfg_.eps);
  const Var normalized = nn::scale_by(shifted, nn::reciprocal(nn::sum_all(shifted)));
  g.widths = nn::scale_by(normalized, g.range);
  g.centers = nn::bin_centers_from_widths(g.widths, cfg_.d_min);
  return g;
}

DepthNetwork::RegressOutput DepthNetwork::regress_depth(const nn::Var& attention_maps,
                                                        const nn::Var& centers) const {
  if (centers->value.size() != cfg_.n_bins)
    throw std::invalid_argument("regress_depth: center count != n_bins");
  RegressOutput out;
  out.bin_probs = nn::softmax_channels(regress_conv_(attention_maps));
  const Var low = nn::lincomb_channels(out.bin_probs, centers);
  out.depth = nn::upsample_bilinear(low, cfg_.input_height, cfg_.input_width);
  return out;
}

DepthNetwork::ForwardGraph DepthNetwork::forward_graph(const nn::Var& image,
                                                       const PriorMaps& prior) const {
  const FeaturePyramid pyr = encode(image);
  const Var feat = decode(pyr, prior);
  const MvitOutput mv = mvit_forward(feat, prior);
  const BinGraph bins = bin_graph(mv.bin_logits, mv.range_raw);
  const RegressOutput reg = regress_depth(mv.attention_maps, bins.centers);
  ForwardGraph out;
  out.depth = reg.depth;
  out.bin_probs = reg.bin_probs;
  out.rectified = bins.rectified;
  out.widths = bins.widths;
  out.centers = bins.centers;
  out.range = bins.range;
  return out;
}

DepthPrediction DepthNetwork::forward(const nn::Tensor& image, const PriorMaps& prior) const {
  nn::NoGradGuard no_grad;
  const ForwardGraph g = forward_graph(nn::make_constant(image), prior);
  DepthPrediction pred;
  pred.depth = DepthMap(cfg_.input_width, cfg_.input_height);
  for (int y = 0; y < cfg_.input_height; ++y)
    for (int x = 0; x < cfg_.input_width; ++x) pred.depth.at(x, y) = g.depth->value.at(0, y, x);
  pred.bin_probs = g.bin_probs->value;
  pred.bins.logits.assign(g.rectified->value.data(),
                          g.rectified->value.data() + g.rectified->value.size());
  pred.bins.widths.assign(g.widths->value.data(),
                          g.widths->value.data() + g.widths->value.size());
  pred.bins.centers.assign(g.centers->value.data(),
                           g.centers->value.data() + g.centers->value.size());
  pred.bins.range = g.range->value[0];
  return pred;
}

std::int64_t DepthNetwork::num_parameters() const {
  std::int64_t n = 0;
  for (const auto& [name, v] : params_.entries()) n += v->value.size();
  return n;
}

std::string DepthNetwork::summary() const {
  std::int64_t enc = 0, dec = 0, mvit = 0, reg = 0;
  for (const auto& [name, v] : params_.entries()) {
    if (name.rfind("encoder.", 0) == 0)
      enc += v->value.size();
    else if (name.rfind("decoder.", 0) == 0)
      dec += v->value.size();
    else if (name.rfind("mvit.", 0) == 0)
      mvit += v->value.size();
    else
      reg += v->value.size();
  }
  std::ostringstream os;
  os << "encoder: " << enc << "\ndecoder: " << dec << "\ntransformer: " << mvit
     << "\nregression: " << reg << "\ntotal: " << enc + dec + mvit + reg << "\n";
  return os.str();
}

void DepthNetwork::zero_grad() const {
  for (const auto& [name, v] : params_.entries()) v->zero_grad();
}

}  // namespace priordepth
