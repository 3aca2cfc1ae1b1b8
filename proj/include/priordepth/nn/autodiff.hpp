#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "priordepth/nn/tensor.hpp"

namespace priordepth::nn {

class Node;
using Var = std::shared_ptr<Node>;

// One value in the computation graph. Graphs are built define-by-run; the
// creation sequence number is a valid topological order for the backward
// sweep. backward_fn reads this node's grad and accumulates into the parents'.
class Node {
 public:
  Tensor value;
  Tensor grad;  // allocated on first use, same shape as value
  bool requires_grad = false;
  std::vector<Var> parents;
  std::function<void(Node&)> backward_fn;
  std::uint64_t seq = 0;

  Tensor& ensure_grad() {
    if (!grad.defined()) grad = Tensor(value.shape());
    return grad;
  }
  void zero_grad() {
    if (grad.defined()) std::fill(grad.data(), grad.data() + grad.size(), 0.0);
  }
};

bool grad_enabled();

// Disables graph recording in scope; forwards still compute values.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

Var make_leaf(Tensor value, bool requires_grad = false);
Var make_constant(Tensor value);
Var make_scalar(double v);

// Runs reverse-mode accumulation from a scalar root.
void backward(const Var& root);

// ---- elementwise ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var add_scalar(const Var& a, double s);
Var mul_scalar(const Var& a, double s);
Var neg(const Var& a);
Var relu(const Var& a);
Var relu6(const Var& a);
Var gelu(const Var& a);
Var softplus(const Var& a);
Var exp_v(const Var& a);
Var log_v(const Var& a);
Var sqrt_v(const Var& a);  // derivative guarded near zero
Var clamp_min(const Var& a, double lo);
Var reciprocal(const Var& a);

// ---- linear algebra / shape ----
Var matmul(const Var& a, const Var& b);                  // [m,k]x[k,n]
Var transpose(const Var& a);                             // [m,n] -> [n,m]
Var add_row_broadcast(const Var& a, const Var& b);       // [m,n] + [n]
Var reshape(const Var& a, Shape shape);
Var slice_rows(const Var& a, int r0, int r1);            // rank 1 or 2, leading axis
Var slice_cols(const Var& a, int c0, int c1);            // rank 2
Var concat_cols(const std::vector<Var>& xs);             // rank 2, equal rows
Var concat_channels(const std::vector<Var>& xs);         // rank 3 [C,H,W], equal H,W

// ---- reductions / normalization ----
Var sum_all(const Var& a);
Var mean_all(const Var& a);
Var softmax_rows(const Var& a);                          // [m,n], softmax per row
Var softmax_channels(const Var& a);                      // [C,H,W], softmax over C per pixel
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
Var group_norm(const Var& x, int groups, const Var& gamma, const Var& beta, double eps = 1e-5);

// ---- conv / resampling ----
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad, int groups = 1);
Var upsample_bilinear(const Var& x, int out_h, int out_w);  // half-pixel centers

// ---- model-specific fused ops ----
// scale a tensor by a scalar-valued Var ([1])
Var scale_by(const Var& a, const Var& s);
// probs [n,h,w] and coeff [n] -> [1,h,w], sum_i coeff_i * probs_i
Var lincomb_channels(const Var& probs, const Var& coeff);
// cumulative-midpoint centers from strictly positive widths [n]
Var bin_centers_from_widths(const Var& widths, double d_min);
// symmetric sum of squared nearest distances between centers [n] and a fixed
// sample set; ties in the argmin go to the lowest index
Var chamfer_sets(const Var& centers, const std::vector<double>& samples);

}  // namespace priordepth::nn
