#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "priordepth/core/rng.hpp"
#include "priordepth/net/checkpoint.hpp"
#include "priordepth/net/model.hpp"
#include "support/gradcheck.hpp"

using namespace priordepth;
using nn::Tensor;
using nn::Var;

namespace {

Tensor random_image(std::mt19937_64& rng, int w, int h) {
  Tensor t({3, h, w});
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rand_unit(rng);
  return t;
}

SparsePrior random_prior(std::mt19937_64& rng, int w, int h, int k) {
  SparsePrior p;
  for (int i = 0; i < k; ++i)
    p.points.push_back({static_cast<double>(rand_index(rng, w)),
                        static_cast<double>(rand_index(rng, h)),
                        rand_uniform(rng, 0.5, 9.0)});
  return p;
}

double softplus_inverse(double y) { return std::log(std::expm1(y)); }

}  // namespace

TEST_CASE("config validation catches inconsistent settings") {
  NetworkConfig bad = NetworkConfig::toy();
  bad.input_width = 60;  // not divisible by 16
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = NetworkConfig::toy();
  bad.patch_size = 7;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = NetworkConfig::toy();
  bad.n_kernels = 12;  // 12 patch tokens leave room for at most 11 kernels
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = NetworkConfig::toy();
  bad.n_bins = 1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  CHECK_NOTHROW(NetworkConfig().validate());
  CHECK_NOTHROW(NetworkConfig::toy().validate());
}

TEST_CASE("encode produces the five-level pyramid with ceil stride arithmetic") {
  auto rng = make_rng(51);
  SUBCASE("toy 64x48") {
    DepthNetwork net(NetworkConfig::toy(), 1);
    nn::NoGradGuard ng;
    const auto pyr = net.encode(nn::make_constant(random_image(rng, 64, 48)));
    REQUIRE(pyr.levels.size() == 5);
    const int expected_hw[5][2] = {{24, 32}, {12, 16}, {6, 8}, {3, 4}, {2, 2}};
    for (int i = 0; i < 5; ++i) {
      CHECK(pyr.levels[i]->value.dim(1) == expected_hw[i][0]);
      CHECK(pyr.levels[i]->value.dim(2) == expected_hw[i][1]);
    }
  }
  SUBCASE("default 320x240") {
    DepthNetwork net(NetworkConfig(), 1);
    nn::NoGradGuard ng;
    const auto pyr = net.encode(nn::make_constant(random_image(rng, 320, 240)));
    const int expected_hw[5][2] = {{120, 160}, {60, 80}, {30, 40}, {15, 20}, {8, 10}};
    for (int i = 0; i < 5; ++i) {
      CHECK(pyr.levels[i]->value.dim(1) == expected_hw[i][0]);
      CHECK(pyr.levels[i]->value.dim(2) == expected_hw[i][1]);
    }
  }
  SUBCASE("dimension mismatch is rejected") {
    DepthNetwork net(NetworkConfig::toy(), 1);
    nn::NoGradGuard ng;
    CHECK_THROWS_AS(net.encode(nn::make_constant(random_image(rng, 32, 48))),
                    std::invalid_argument);
  }
}

TEST_CASE("encode is deterministic in eval mode") {
  auto rng = make_rng(52);
  DepthNetwork net(NetworkConfig::toy(), 3);
  const Tensor img = random_image(rng, 64, 48);
  nn::NoGradGuard ng;
  const auto a = net.encode(nn::make_constant(img));
  const auto b = net.encode(nn::make_constant(img));
  for (int l = 0; l < 5; ++l)
    for (std::int64_t i = 0; i < a.levels[l]->value.size(); ++i)
      REQUIRE(a.levels[l]->value[i] == b.levels[l]->value[i]);
}

TEST_CASE("decode fuses skips and priors down to stride 2") {
  auto rng = make_rng(53);
  const auto cfg = NetworkConfig::toy();
  DepthNetwork net(cfg, 4);
  nn::NoGradGuard ng;
  const auto img = nn::make_constant(random_image(rng, 64, 48));
  const auto pyr = net.encode(img);
  const auto prior = densify(random_prior(rng, 64, 48, 30), 64, 48, 10.0);
  const auto feat = net.decode(pyr, prior);
  CHECK(feat->value.dim(1) == 24);
  CHECK(feat->value.dim(2) == 32);
  SUBCASE("zeroing the prior changes the activations") {
    const auto feat_zero = net.decode(pyr, zero_prior_maps(64, 48, 10.0));
    double max_diff = 0.0;
    for (std::int64_t i = 0; i < feat->value.size(); ++i)
      max_diff = std::max(max_diff, std::abs(feat->value[i] - feat_zero->value[i]));
    CHECK(max_diff > 1e-6);
  }
  SUBCASE("default config decodes to 120x160") {
    DepthNetwork big(NetworkConfig(), 4);
    const auto big_img = nn::make_constant(random_image(rng, 320, 240));
    const auto big_feat = big.decode(big.encode(big_img), zero_prior_maps(320, 240, 10.0));
    CHECK(big_feat->value.dim(1) == 120);
    CHECK(big_feat->value.dim(2) == 160);
  }
}

TEST_CASE("mvit splits features into patches and emits head plus kernels") {
  auto rng = make_rng(54);
  const auto cfg = NetworkConfig::toy();
  DepthNetwork net(cfg, 5);
  nn::NoGradGuard ng;
  const auto img = nn::make_constant(random_image(rng, 64, 48));
  const auto prior = densify(random_prior(rng, 64, 48, 25), 64, 48, 10.0);
  const auto feat = net.decode(net.encode(img), prior);
  // toy: 32x24 features, p=8 -> 4*3 = 12 patch tokens
  CHECK(cfg.sequence_length() == 12);
  const auto mv = net.mvit_forward(feat, prior);
  CHECK(mv.bin_logits->value.size() == cfg.n_bins);
  CHECK(mv.range_raw->value.size() == 1);
  CHECK(mv.attention_maps->value.dim(0) == cfg.n_kernels);
  CHECK(mv.attention_maps->value.dim(1) == 24);
  CHECK(mv.attention_maps->value.dim(2) == 32);
  SUBCASE("features that the patch size cannot divide are rejected") {
    const auto bad = nn::make_constant(Tensor({feat->value.dim(0), 25, 33}));
    CHECK_THROWS_WITH_AS(net.mvit_forward(bad, prior),
                         "mvit: patch size must divide feature dimensions",
                         std::invalid_argument);
  }
}

TEST_CASE("compute_bin_widths follows the eps-normalized range split") {
  NetworkConfig cfg;
  cfg.n_bins = 2;
  SUBCASE("reference logits (0.2, 0.7) with range 10") {
    const double raw = softplus_inverse(10.0 - cfg.r_min);
    const auto bw = compute_bin_widths({0.2, 0.7}, raw, cfg);
    CHECK(bw.range == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(std::abs(bw.widths[0] - 2.22838) <= 1e-5);
    CHECK(std::abs(bw.widths[1] - 7.77162) <= 1e-5);
    CHECK(bw.widths[0] + bw.widths[1] == doctest::Approx(bw.range).epsilon(1e-12));
  }
  SUBCASE("equal logits split the range evenly") {
    cfg.n_bins = 4;
    const double raw = softplus_inverse(8.0 - cfg.r_min);
    const auto bw = compute_bin_widths({0.3, 0.3, 0.3, 0.3}, raw, cfg);
    for (double w : bw.widths) CHECK(w == doctest::Approx(2.0).epsilon(1e-9));
  }
  SUBCASE("all-zero logits survive through eps") {
    cfg.n_bins = 2;
    const double raw = softplus_inverse(5.0 - cfg.r_min);
    const auto bw = compute_bin_widths({0.0, 0.0}, raw, cfg);
    CHECK(bw.widths[0] == doctest::Approx(2.5).epsilon(1e-9));
    CHECK(bw.widths[1] == doctest::Approx(2.5).epsilon(1e-9));
  }
  SUBCASE("negative logits are rectified before normalization") {
    cfg.n_bins = 2;
    const auto bw = compute_bin_widths({-5.0, 1.0}, 0.0, cfg);
    CHECK(bw.rectified[0] == 0.0);
    CHECK(bw.widths[0] > 0.0);
  }
}

TEST_CASE("compute_bin_centers is the cumulative midpoint") {
  const auto c = compute_bin_centers({2, 2, 2, 2}, 0.0);
  CHECK(c == std::vector<double>{1, 3, 5, 7});
  const auto single = compute_bin_centers({6.0}, 0.0);
  CHECK(single[0] == doctest::Approx(3.0));
  const auto off = compute_bin_centers({1, 3}, 0.5);
  CHECK(off[0] == doctest::Approx(1.0));
  CHECK(off[1] == doctest::Approx(3.0));
}

TEST_CASE("depth regression is a convex combination of centers") {
  SUBCASE("one-hot probabilities pick the center") {
    Tensor p({4, 2, 2});
    for (int px = 0; px < 4; ++px) p.at(2, px / 2, px % 2) = 1.0;
    const auto d = nn::lincomb_channels(nn::make_constant(p),
                                        nn::make_constant(Tensor({4}, {1, 3, 5, 7})));
    for (std::int64_t i = 0; i < d->value.size(); ++i) CHECK(d->value[i] == doctest::Approx(5.0));
  }
  SUBCASE("mixed probabilities interpolate") {
    Tensor p({2, 1, 1});
    p.at(0, 0, 0) = 0.25;
    p.at(1, 0, 0) = 0.75;
    const auto d =
        nn::lincomb_channels(nn::make_constant(p), nn::make_constant(Tensor({2}, {1, 3})));
    CHECK(d->value[0] == doctest::Approx(2.5));
  }
  SUBCASE("real head output stays within the center interval") {
    auto rng = make_rng(55);
    auto cfg = NetworkConfig::toy();
    DepthNetwork net(cfg, 6);
    nn::NoGradGuard ng;
    const auto prior = densify(random_prior(rng, 64, 48, 20), 64, 48, 10.0);
    const auto out =
        net.forward(random_image(rng, 64, 48), prior);
    const double c1 = out.bins.centers.front(), cn = out.bins.centers.back();
    for (int y = 0; y < 48; ++y)
      for (int x = 0; x < 64; ++x) {
        CHECK(out.depth.at(x, y) >= c1 - 1e-9);
        CHECK(out.depth.at(x, y) <= cn + 1e-9);
      }
  }
}

TEST_CASE("forward composes the full pipeline") {
  auto rng = make_rng(56);
  SUBCASE("toy forward is deterministic") {
    const auto cfg = NetworkConfig::toy();
    DepthNetwork net(cfg, 7);
    const Tensor img = random_image(rng, 64, 48);
    const auto prior = densify(random_prior(rng, 64, 48, 40), 64, 48, 10.0);
    const auto a = net.forward(img, prior);
    const auto b = net.forward(img, prior);
    REQUIRE(a.depth.size() == b.depth.size());
    for (std::size_t i = 0; i < a.depth.size(); ++i)
      REQUIRE(a.depth.data()[i] == b.depth.data()[i]);
    CHECK(a.bins.range == b.bins.range);
  }
  SUBCASE("zero-prior mode works") {
    const auto cfg = NetworkConfig::toy();
    DepthNetwork net(cfg, 7);
    const auto out = net.forward(random_image(rng, 64, 48), zero_prior_maps(64, 48, 10.0));
    CHECK(out.depth.width() == 64);
    CHECK(out.depth.height() == 48);
  }
  SUBCASE("default config emits a 320x240 depth map") {
    DepthNetwork net(NetworkConfig(), 7);
    const auto out = net.forward(random_image(rng, 320, 240), zero_prior_maps(320, 240, 10.0));
    CHECK(out.depth.width() == 320);
    CHECK(out.depth.height() == 240);
    CHECK(out.bin_probs.dim(0) == 256);
    CHECK(out.bin_probs.dim(1) == 120);
    CHECK(out.bin_probs.dim(2) == 160);
  }
}

TEST_CASE("bin and softmax normalization hold over random forward passes") {
  auto rng = make_rng(57);
  const auto cfg = NetworkConfig::toy();
  for (int trial = 0; trial < 25; ++trial) {
    DepthNetwork net(cfg, 100 + trial);
    const auto prior = densify(random_prior(rng, 64, 48, 30), 64, 48, 10.0);
    const auto out = net.forward(random_image(rng, 64, 48), prior);
    double width_sum = 0.0;
    for (double w : out.bins.widths) {
      CHECK(w > 0.0);
      width_sum += w;
    }
    CHECK(std::abs(width_sum - out.bins.range) <= 1e-5 * out.bins.range);
    for (std::size_t i = 1; i < out.bins.centers.size(); ++i)
      CHECK(out.bins.centers[i] > out.bins.centers[i - 1]);
    CHECK(out.bins.centers.front() > cfg.d_min);
    CHECK(out.bins.centers.back() < cfg.d_min + out.bins.range);
    const int hw = 24 * 32;
    for (int p = 0; p < hw; ++p) {
      double s = 0.0;
      for (int b = 0; b < cfg.n_bins; ++b) s += out.bin_probs[b * hw + p];
      CHECK(std::abs(s - 1.0) <= 1e-5);
    }
  }
}

TEST_CASE("gradients flow through widths, centers and regression") {
  auto rng = make_rng(58);
  auto cfg = NetworkConfig::toy();
  cfg.n_bins = 4;
  DepthNetwork net(cfg, 8);
  std::vector<Var> leaves = {
      nn::make_leaf(Tensor({4}, {0.3, -0.2, 0.9, 0.1}), true),   // bin logits
      nn::make_leaf(Tensor::scalar(1.2), true),                  // raw range
  };
  Tensor attn({cfg.n_kernels, 6, 8});
  for (std::int64_t i = 0; i < attn.size(); ++i) attn[i] = rand_uniform(rng, -1.0, 1.0);
  const Var attn_c = nn::make_constant(attn);
  testsupport::check_gradients(
      [&](const std::vector<Var>& v) {
        const auto bins = net.bin_graph(v[0], nn::reshape(v[1], {1}));
        const auto reg = net.regress_depth(attn_c, bins.centers);
        return nn::mean_all(reg.depth);
      },
      leaves, 1e-6, 1e-6);
}

TEST_CASE("parameter count lands near the published 15.6M for the default config") {
  DepthNetwork net(NetworkConfig(), 9);
  const double count = static_cast<double>(net.num_parameters());
  CHECK(count >= 15.6e6 * 0.8);
  CHECK(count <= 15.6e6 * 1.2);
  CHECK(net.summary().find("total") != std::string::npos);
}

TEST_CASE("checkpoints round-trip bit-exactly and support backbone-only loads") {
  const auto dir = std::filesystem::temp_directory_path() / "priordepth_ckpt_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "net.ckpt";
  const auto cfg = NetworkConfig::toy();
  DepthNetwork a(cfg, 10);
  save_checkpoint(path, a);
  SUBCASE("strict load restores every tensor bit for bit") {
    DepthNetwork b(cfg, 11);  // different init
    load_checkpoint(path, b);
    REQUIRE(a.parameters().size() == b.parameters().size());
    for (std::size_t i = 0; i < a.parameters().size(); ++i) {
      const auto& [name_a, va] = a.parameters()[i];
      const auto& [name_b, vb] = b.parameters()[i];
      REQUIRE(name_a == name_b);
      for (std::int64_t k = 0; k < va->value.size(); ++k)
        REQUIRE(va->value[k] == vb->value[k]);
    }
  }
  SUBCASE("config travels in the header") {
    CHECK(checkpoint_config(path) == cfg);
    NetworkConfig other = cfg;
    other.n_bins = 32;
    const auto diff = config_diff(checkpoint_config(path), other);
    REQUIRE(diff.size() == 1);
    CHECK(diff[0] == "n_bins");
  }
  SUBCASE("prefix load touches only the backbone") {
    DepthNetwork b(cfg, 12);
    const auto copied = load_checkpoint_prefix(path, b, "encoder.");
    CHECK(copied > 0);
    bool mvit_differs = false;
    for (std::size_t i = 0; i < a.parameters().size(); ++i) {
      const auto& [name, va] = a.parameters()[i];
      const auto& vb = b.parameters()[i].second;
      if (name.rfind("encoder.", 0) == 0) {
        for (std::int64_t k = 0; k < va->value.size(); ++k)
          REQUIRE(va->value[k] == vb->value[k]);
      } else {
        for (std::int64_t k = 0; k < va->value.size(); ++k)
          if (va->value[k] != vb->value[k]) mvit_differs = true;
      }
    }
    CHECK(mvit_differs);
  }
  std::filesystem::remove_all(dir);
}
