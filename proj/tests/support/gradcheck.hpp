#pragma once

#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "priordepth/nn/autodiff.hpp"

namespace testsupport {

// Compares reverse-mode gradients of a scalar-valued builder against central
// finite differences. The builder is re-invoked for every probe so it must be
// a pure function of the leaf values.
inline void check_gradients(
    const std::function<priordepth::nn::Var(const std::vector<priordepth::nn::Var>&)>& build,
    std::vector<priordepth::nn::Var>& leaves, double fd_eps = 1e-6, double rel_tol = 1e-5) {
  using priordepth::nn::Var;
  for (auto& l : leaves) l->zero_grad();
  const Var root = build(leaves);
  priordepth::nn::backward(root);

  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto& leaf = leaves[li];
    REQUIRE(leaf->requires_grad);
    leaf->ensure_grad();
    for (std::int64_t i = 0; i < leaf->value.size(); ++i) {
      const double saved = leaf->value[i];
      leaf->value[i] = saved + fd_eps;
      const double up = build(leaves)->value[0];
      leaf->value[i] = saved - fd_eps;
      const double down = build(leaves)->value[0];
      leaf->value[i] = saved;
      const double fd = (up - down) / (2.0 * fd_eps);
      const double an = leaf->grad[i];
      const double denom = std::max({1.0, std::abs(fd), std::abs(an)});
      INFO("leaf ", li, " element ", i, " analytic ", an, " fd ", fd);
      CHECK(std::abs(an - fd) / denom <= rel_tol);
    }
  }
}

}  // namespace testsupport
