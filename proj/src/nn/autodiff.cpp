#include "priordepth/nn/autodiff.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <unordered_set>

namespace priordepth::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

std::atomic<std::uint64_t> g_seq{1};
thread_local bool g_grad_enabled = true;

Var finish(Tensor value, std::vector<Var> parents, std::function<void(Node&)> fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->seq = g_seq.fetch_add(1, std::memory_order_relaxed);
  bool req = false;
  if (g_grad_enabled) {
    for (const auto& p : parents) req = req || (p && p->requires_grad);
  }
  if (req) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward_fn = std::move(fn);
  }
  return n;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a->value.same_shape(b->value))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a->value.shape_str() +
                                " vs " + b->value.shape_str());
}

// Elementwise op with fn(x) and dfn(x, y) evaluated per element.
template <typename F, typename DF>
Var unary_elementwise(const Var& a, F f, DF df) {
  Tensor out(a->value.shape());
  const double* x = a->value.data();
  double* y = out.data();
  const std::int64_t n = out.size();
  for (std::int64_t i = 0; i < n; ++i) y[i] = f(x[i]);
  return finish(std::move(out), {a}, [a, df](Node& self) {
    if (!a->requires_grad) return;
    Tensor& g = a->ensure_grad();
    const double* x = a->value.data();
    const double* yv = self.value.data();
    const double* gy = self.grad.data();
    for (std::int64_t i = 0; i < self.value.size(); ++i) g[i] += gy[i] * df(x[i], yv[i]);
  });
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Var make_leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  n->seq = g_seq.fetch_add(1, std::memory_order_relaxed);
  return n;
}

Var make_constant(Tensor value) { return make_leaf(std::move(value), false); }

Var make_scalar(double v) { return make_constant(Tensor::scalar(v)); }

void backward(const Var& root) {
  if (!root || root->value.size() != 1)
    throw std::logic_error("backward: root must be a scalar");
  if (!root->requires_grad) return;
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{root.get()};
  seen.insert(root.get());
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& p : n->parents)
      if (p && p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
  }
  std::sort(order.begin(), order.end(), [](Node* a, Node* b) { return a->seq > b->seq; });
  root->ensure_grad()[0] += 1.0;
  for (Node* n : order)
    if (n->backward_fn) n->backward_fn(*n);
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor out(a->value.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + b->value[i];
  return finish(std::move(out), {a, b}, [a, b](Node& self) {
    const double* gy = self.grad.data();
    if (a->requires_grad) {
      Tensor& g = a->ensure_grad();
      for (std::int64_t i = 0; i < self.value.size(); ++i) g[i] += gy[i];
    }
    if (b->requires_grad) {
      Tensor& g = b->ensure_grad();
      for (std::int64_t i = 0; i < self.value.size(); ++i) g[i] += gy[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tensor out(a->value.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] - b->value[i];
  return finish(std::move(out), {a, b}, [a, b](Node& self) {
    const double* gy = self.grad.data();
    if (a->requires_grad) {
      Tensor& g = a->ensure_grad();
      for (std::int64_t i = 0; i < self.value.size(); ++i) g[i] += gy[i];
    }
    if (b->requires_grad) {
      Tensor& g = b->ensure_grad();
      for (std::int64_t i = 0; i < self.value.size(); ++i) g[i] -= gy[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tensor out(a->value.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * b->value[i];
  return finish(std::move(out), {a, b}, [a, b](Node& self) {
    const double* gy = self.grad.data();
    if (a->requires_grad) {
      Tensor& g = a->ensure_grad();
      for (std::int64_t i = 0; i < self.value.size(); ++i) g[i] += gy[i] * b->value[i];
    }
    if (b->requires_grad) {
      Tensor& g = b->ensure_grad();
      for (std::int64_t i = 0; i < self.value.size(); ++i) g[i] += gy[i] * a->value[i];
    }
  });
}

Var add_scalar(const Var& a, double s) {
  return unary_elementwise(
      a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var mul_scalar(const Var& a, double s) {
  return unary_elementwise(
      a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Var neg(const Var& a) { return mul_scalar(a, -1.0); }

Var relu(const Var& a) {
  // NaN propagates so poisoned values cannot silently become zeros
  return unary_elementwise(
      a, [](double x) { return x < 0.0 ? 0.0 : x; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var relu6(const Var& a) {
  return unary_elementwise(
      a, [](double x) { return x < 0.0 ? 0.0 : (x > 6.0 ? 6.0 : x); },
      [](double x, double) { return (x > 0.0 && x < 6.0) ? 1.0 : 0.0; });
}

Var gelu(const Var& a) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return unary_elementwise(
      a, [=](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
      [=](double x, double) {
        const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
        return cdf + x * pdf;
      });
}

Var softplus(const Var& a) {
  auto sp = [](double x) {
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
  };
  auto sig = [](double x, double) {
    if (x >= 0.0) {
      const double e = std::exp(-x);
      return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
  };
  return unary_elementwise(a, sp, sig);
}

Var exp_v(const Var& a) {
  return unary_elementwise(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log_v(const Var& a) {
  return unary_elementwise(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var sqrt_v(const Var& a) {
  // negative inputs clamp to zero; NaN must pass through, not vanish
  return unary_elementwise(
      a, [](double x) { return std::sqrt(x < 0.0 ? 0.0 : x); },
      [](double, double y) { return 1.0 / (2.0 * std::max(y, 1e-12)); });
}

Var clamp_min(const Var& a, double lo) {
  return unary_elementwise(
      a, [lo](double x) { return x < lo ? lo : x; },
      [lo](double x, double) { return x > lo ? 1.0 : 0.0; });
}

Var reciprocal(const Var& a) {
  return unary_elementwise(
      a, [](double x) { return 1.0 / x; }, [](double, double y) { return -y * y; });
}

// ---------------------------------------------------------------------------
// linear algebra / shape
// ---------------------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  if (a->value.rank() != 2 || b->value.rank() != 2 || a->value.dim(1) != b->value.dim(0))
    throw std::invalid_argument("matmul: bad shapes " + a->value.shape_str() + " x " +
                                b->value.shape_str());
  const int m = a->value.dim(0), k = a->value.dim(1), n = b->value.dim(1);
  Tensor out({m, n});
  CMapMat A(a->value.data(), m, k), B(b->value.data(), k, n);
  MapMat(out.data(), m, n).noalias() = A * B;
  return finish(std::move(out), {a, b}, [a, b, m, k, n](Node& self) {
    CMapMat G(self.grad.data(), m, n);
    if (a->requires_grad) {
      CMapMat B(b->value.data(), k, n);
      MapMat(a->ensure_grad().data(), m, k).noalias() += G * B.transpose();
    }
    if (b->requires_grad) {
      CMapMat A(a->value.data(), m, k);
      MapMat(b->ensure_grad().data(), k, n).noalias() += A.transpose() * G;
    }
  });
}

Var transpose(const Var& a) {
  if (a->value.rank() != 2) throw std::invalid_argument("transpose: rank-2 only");
  const int m = a->value.dim(0), n = a->value.dim(1);
  Tensor out({n, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(j, i) = a->value.at(i, j);
  return finish(std::move(out), {a}, [a, m, n](Node& self) {
    if (!a->requires_grad) return;
    Tensor& g = a->ensure_grad();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) g.at(i, j) += self.grad.at(j, i);
  });
}

Var add_row_broadcast(const Var& a, const Var& b) {
  if (a->value.rank() != 2 || b->value.rank() != 1 || a->value.dim(1) != b->value.dim(0))
    throw std::invalid_argument("add_row_broadcast: bad shapes");
  const int m = a->value.dim(0), n = a->value.dim(1);
  Tensor out({m, n});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(i, j) = a->value.at(i, j) + b->value[j];
  return finish(std::move(out), {a, b}, [a, b, m, n](Node& self) {
    if (a->requires_grad) {
      Tensor& g = a->ensure_grad();
      for (std::int64_t i = 0; i < self.value.size(); ++i) g[i] += self.grad[i];
    }
    if (b->requires_grad) {
      Tensor& g = b->ensure_grad();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) g[j] += self.grad.at(i, j);
    }
  });
}

Var reshape(const Var& a, Shape shape) {
  if (shape_numel(shape) != a->value.size())
    throw std::invalid_argument("reshape: numel mismatch");
  Tensor out(std::move(shape));
  std::copy(a->value.data(), a->value.data() + a->value.size(), out.data());
  return finish(std::move(out), {a}, [a](Node& self) {
    if (!a->requires_grad) return;
    Tensor& g = a->ensure_grad();
    for (std::int64_t i = 0; i < self.value.size(); ++i) g[i] += self.grad[i];
  });
}

Var slice_rows(const Var& a, int r0, int r1) {
  const int rank = a->value.rank();
  if (rank != 1 && rank != 2) throw std::invalid_argument("slice_rows: rank 1 or 2");
  const int rows = a->value.dim(0);
  const int cols = rank == 2 ? a->value.dim(1) : 1;
  if (r0 < 0 || r1 > rows || r0 >= r1) throw std::invalid_argument("slice_rows: bad range");
  Shape os = rank == 2 ? Shape{r1 - r0, cols} : Shape{r1 - r0};
  Tensor out(os);
  std::copy(a->value.data() + static_cast<std::int64_t>(r0) * cols,
            a->value.data() + static_cast<std::int64_t>(r1) * cols, out.data());
  return finish(std::move(out), {a}, [a, r0, cols](Node& self) {
    if (!a->requires_grad) return;
    Tensor& g = a->ensure_grad();
    double* dst = g.data() + static_cast<std::int64_t>(r0) * cols;
    for (std::int64_t i = 0; i < self.value.size(); ++i) dst[i] += self.grad[i];
  });
}

Var slice_cols(const Var& a, int c0, int c1) {
  if (a->value.rank() != 2) throw std::invalid_argument("slice_cols: rank-2 only");
  const int m = a->value.dim(0), n = a->value.dim(1);
  if (c0 < 0 || c1 > n || c0 >= c1) throw std::invalid_argument("slice_cols: bad range");
  Tensor out({m, c1 - c0});
  for (int i = 0; i < m; ++i)
    for (int j = c0; j < c1; ++j) out.at(i, j - c0) = a->value.at(i, j);
  return finish(std::move(out), {a}, [a, c0, c1, m](Node& self) {
    if (!a->requires_grad) return;
    Tensor& g = a->ensure_grad();
    for (int i = 0; i < m; ++i)
      for (int j = c0; j < c1; ++j) g.at(i, j) += self.grad.at(i, j - c0);
  });
}

Var concat_cols(const std::vector<Var>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_cols: empty");
  const int m = xs[0]->value.dim(0);
  int n = 0;
  for (const auto& x : xs) {
    if (x->value.rank() != 2 || x->value.dim(0) != m)
      throw std::invalid_argument("concat_cols: shape mismatch");
    n += x->value.dim(1);
  }
  Tensor out({m, n});
  int off = 0;
  for (const auto& x : xs) {
    const int c = x->value.dim(1);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < c; ++j) out.at(i, off + j) = x->value.at(i, j);
    off += c;
  }
  return finish(std::move(out), {xs.begin(), xs.end()}, [xs, m](Node& self) {
    int off = 0;
    for (const auto& x : xs) {
      const int c = x->value.dim(1);
      if (x->requires_grad) {
        Tensor& g = x->ensure_grad();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < c; ++j) g.at(i, j) += self.grad.at(i, off + j);
      }
      off += c;
    }
  });
}

Var concat_channels(const std::vector<Var>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_channels: empty");
  const int h = xs[0]->value.dim(1), w = xs[0]->value.dim(2);
  int c = 0;
  for (const auto& x : xs) {
    if (x->value.rank() != 3 || x->value.dim(1) != h || x->value.dim(2) != w)
      throw std::invalid_argument("concat_channels: shape mismatch");
    c += x->value.dim(0);
  }
  Tensor out({c, h, w});
  double* dst = out.data();
  for (const auto& x : xs) {
    std::copy(x->value.data(), x->value.data() + x->value.size(), dst);
    dst += x->value.size();
  }
  return finish(std::move(out), {xs.begin(), xs.end()}, [xs](Node& self) {
    const double* src = self.grad.data();
    for (const auto& x : xs) {
      if (x->requires_grad) {
        Tensor& g = x->ensure_grad();
        for (std::int64_t i = 0; i < x->value.size(); ++i) g[i] += src[i];
      }
      src += x->value.size();
    }
  });
}

// ---------------------------------------------------------------------------
// reductions / normalization
// ---------------------------------------------------------------------------

Var sum_all(const Var& a) {
  double s = 0.0;
  for (std::int64_t i = 0; i < a->value.size(); ++i) s += a->value[i];
  return finish(Tensor::scalar(s), {a}, [a](Node& self) {
    if (!a->requires_grad) return;
    Tensor& g = a->ensure_grad();
    const double gy = self.grad[0];
    for (std::int64_t i = 0; i < g.size(); ++i) g[i] += gy;
  });
}

Var mean_all(const Var& a) { return mul_scalar(sum_all(a), 1.0 / static_cast<double>(a->value.size())); }

Var softmax_rows(const Var& a) {
  if (a->value.rank() != 2) throw std::invalid_argument("softmax_rows: rank-2 only");
  const int m = a->value.dim(0), n = a->value.dim(1);
  Tensor out({m, n});
  for (int i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) mx = std::max(mx, a->value.at(i, j));
    double z = 0.0;
    for (int j = 0; j < n; ++j) {
      out.at(i, j) = std::exp(a->value.at(i, j) - mx);
      z += out.at(i, j);
    }
    for (int j = 0; j < n; ++j) out.at(i, j) /= z;
  }
  return finish(std::move(out), {a}, [a, m, n](Node& self) {
    if (!a->requires_grad) return;
    Tensor& g = a->ensure_grad();
    for (int i = 0; i < m; ++i) {
      double dot = 0.0;
      for (int j = 0; j < n; ++j) dot += self.grad.at(i, j) * self.value.at(i, j);
      for (int j = 0; j < n; ++j)
        g.at(i, j) += self.value.at(i, j) * (self.grad.at(i, j) - dot);
    }
  });
}

Var softmax_channels(const Var& a) {
  if (a->value.rank() != 3) throw std::invalid_argument("softmax_channels: rank-3 only");
  const int c = a->value.dim(0), h = a->value.dim(1), w = a->value.dim(2);
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  Tensor out(a->value.shape());
  const double* x = a->value.data();
  double* y = out.data();
  for (std::int64_t p = 0; p < hw; ++p) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int ci = 0; ci < c; ++ci) mx = std::max(mx, x[ci * hw + p]);
    double z = 0.0;
    for (int ci = 0; ci < c; ++ci) {
      y[ci * hw + p] = std::exp(x[ci * hw + p] - mx);
      z += y[ci * hw + p];
    }
    for (int ci = 0; ci < c; ++ci) y[ci * hw + p] /= z;
  }
  return finish(std::move(out), {a}, [a, c, hw](Node& self) {
    if (!a->requires_grad) return;
    Tensor& g = a->ensure_grad();
    const double* y = self.value.data();
    const double* gy = self.grad.data();
    for (std::int64_t p = 0; p < hw; ++p) {
      double dot = 0.0;
      for (int ci = 0; ci < c; ++ci) dot += gy[ci * hw + p] * y[ci * hw + p];
      for (int ci = 0; ci < c; ++ci)
        g[ci * hw + p] += y[ci * hw + p] * (gy[ci * hw + p] - dot);
    }
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  if (x->value.rank() != 2) throw std::invalid_argument("layer_norm: rank-2 only");
  const int m = x->value.dim(0), n = x->value.dim(1);
  if (gamma->value.size() != n || beta->value.size() != n)
    throw std::invalid_argument("layer_norm: affine size mismatch");
  Tensor out({m, n});
  std::vector<double> inv_std(m), mean(m);
  for (int i = 0; i < m; ++i) {
    double mu = 0.0;
    for (int j = 0; j < n; ++j) mu += x->value.at(i, j);
    mu /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      const double d = x->value.at(i, j) - mu;
      var += d * d;
    }
    var /= n;
    const double is = 1.0 / std::sqrt(var + eps);
    mean[i] = mu;
    inv_std[i] = is;
    for (int j = 0; j < n; ++j)
      out.at(i, j) = (x->value.at(i, j) - mu) * is * gamma->value[j] + beta->value[j];
  }
  return finish(std::move(out), {x, gamma, beta},
                [x, gamma, beta, m, n, mean, inv_std](Node& self) {
    for (int i = 0; i < m; ++i) {
      const double mu = mean[i], is = inv_std[i];
      double sum_g = 0.0, sum_gx = 0.0;
      for (int j = 0; j < n; ++j) {
        const double xh = (x->value.at(i, j) - mu) * is;
        const double gj = self.grad.at(i, j) * gamma->value[j];
        sum_g += gj;
        sum_gx += gj * xh;
      }
      if (x->requires_grad) {
        Tensor& g = x->ensure_grad();
        for (int j = 0; j < n; ++j) {
          const double xh = (x->value.at(i, j) - mu) * is;
          const double gj = self.grad.at(i, j) * gamma->value[j];
          g.at(i, j) += is * (gj - sum_g / n - xh * sum_gx / n);
        }
      }
      if (gamma->requires_grad) {
        Tensor& g = gamma->ensure_grad();
        for (int j = 0; j < n; ++j)
          g[j] += self.grad.at(i, j) * (x->value.at(i, j) - mu) * is;
      }
      if (beta->requires_grad) {
        Tensor& g = beta->ensure_grad();
        for (int j = 0; j < n; ++j) g[j] += self.grad.at(i, j);
      }
    }
  });
}

Var group_norm(const Var& x, int groups, const Var& gamma, const Var& beta, double eps) {
  if (x->value.rank() != 3) throw std::invalid_argument("group_norm: rank-3 only");
  const int c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
  if (c % groups != 0) throw std::invalid_argument("group_norm: groups must divide channels");
  if (gamma->value.size() != c || beta->value.size() != c)
    throw std::invalid_argument("group_norm: affine size mismatch");
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  const int gc = c / groups;
  const std::int64_t gsize = gc * hw;
  Tensor out(x->value.shape());
  std::vector<double> mean(groups), inv_std(groups);
  for (int g = 0; g < groups; ++g) {
    const double* xs = x->value.data() + g * gsize;
    double mu = 0.0;
    for (std::int64_t i = 0; i < gsize; ++i) mu += xs[i];
    mu /= static_cast<double>(gsize);
    double var = 0.0;
    for (std::int64_t i = 0; i < gsize; ++i) {
      const double d = xs[i] - mu;
      var += d * d;
    }
    var /= static_cast<double>(gsize);
    mean[g] = mu;
    inv_std[g] = 1.0 / std::sqrt(var + eps);
  }
  for (int ci = 0; ci < c; ++ci) {
    const int g = ci / gc;
    const double mu = mean[g], is = inv_std[g];
    const double ga = gamma->value[ci], be = beta->value[ci];
    const double* xs = x->value.data() + ci * hw;
    double* ys = out.data() + ci * hw;
    for (std::int64_t i = 0; i < hw; ++i) ys[i] = (xs[i] - mu) * is * ga + be;
  }
  return finish(std::move(out), {x, gamma, beta},
                [x, gamma, beta, groups, gc, hw, gsize, mean, inv_std](Node& self) {
    const int c = x->value.dim(0);
    for (int g = 0; g < groups; ++g) {
      const double mu = mean[g], is = inv_std[g];
      double sum_g = 0.0, sum_gx = 0.0;
      for (int ci = g * gc; ci < (g + 1) * gc; ++ci) {
        const double ga = gamma->value[ci];
        const double* xs = x->value.data() + ci * hw;
        const double* gy = self.grad.data() + ci * hw;
        for (std::int64_t i = 0; i < hw; ++i) {
          const double xh = (xs[i] - mu) * is;
          const double gj = gy[i] * ga;
          sum_g += gj;
          sum_gx += gj * xh;
        }
      }
      const double inv_n = 1.0 / static_cast<double>(gsize);
      if (x->requires_grad) {
        Tensor& gx = x->ensure_grad();
        for (int ci = g * gc; ci < (g + 1) * gc; ++ci) {
          const double ga = gamma->value[ci];
          const double* xs = x->value.data() + ci * hw;
          const double* gy = self.grad.data() + ci * hw;
          double* gd = gx.data() + ci * hw;
          for (std::int64_t i = 0; i < hw; ++i) {
            const double xh = (xs[i] - mu) * is;
            const double gj = gy[i] * ga;
            gd[i] += is * (gj - sum_g * inv_n - xh * sum_gx * inv_n);
          }
        }
      }
    }
    if (gamma->requires_grad || beta->requires_grad) {
      for (int ci = 0; ci < c; ++ci) {
        const int g = ci / gc;
        const double mu = mean[g], is = inv_std[g];
        const double* xs = x->value.data() + ci * hw;
        const double* gy = self.grad.data() + ci * hw;
        double dga = 0.0, dbe = 0.0;
        for (std::int64_t i = 0; i < hw; ++i) {
          dga += gy[i] * (xs[i] - mu) * is;
          dbe += gy[i];
        }
        if (gamma->requires_grad) gamma->ensure_grad()[ci] += dga;
        if (beta->requires_grad) beta->ensure_grad()[ci] += dbe;
      }
    }
  });
}

// ---------------------------------------------------------------------------
// convolution
// ---------------------------------------------------------------------------

namespace {

struct ConvDims {
  int cin, hin, win;
  int cout, cin_g, kh, kw;
  int stride, pad, groups;
  int hout, wout;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride, int pad, int groups) {
  if (x.rank() != 3 || w.rank() != 4) throw std::invalid_argument("conv2d: x rank 3, w rank 4");
  ConvDims d;
  d.cin = x.dim(0);
  d.hin = x.dim(1);
  d.win = x.dim(2);
  d.cout = w.dim(0);
  d.cin_g = w.dim(1);
  d.kh = w.dim(2);
  d.kw = w.dim(3);
  d.stride = stride;
  d.pad = pad;
  d.groups = groups;
  if (groups < 1 || d.cin % groups != 0 || d.cout % groups != 0 || d.cin / groups != d.cin_g)
    throw std::invalid_argument("conv2d: bad group layout");
  d.hout = (d.hin + 2 * pad - d.kh) / stride + 1;
  d.wout = (d.win + 2 * pad - d.kw) / stride + 1;
  if (d.hout <= 0 || d.wout <= 0) throw std::invalid_argument("conv2d: empty output");
  return d;
}

// Fill an im2col tile for output pixels [p0, p1) of one group.
void im2col_tile(const double* x, const ConvDims& d, int group, std::int64_t p0, std::int64_t p1,
                 double* col) {
  const int rows = d.cin_g * d.kh * d.kw;
  const std::int64_t tile = p1 - p0;
  const std::int64_t hw_in = static_cast<std::int64_t>(d.hin) * d.win;
  for (int r = 0; r < rows; ++r) {
    const int ci = r / (d.kh * d.kw);
    const int ky = (r / d.kw) % d.kh;
    const int kx = r % d.kw;
    const double* xc = x + (static_cast<std::int64_t>(group) * d.cin_g + ci) * hw_in;
    double* out_row = col + static_cast<std::int64_t>(r) * tile;
    for (std::int64_t p = p0; p < p1; ++p) {
      const int oy = static_cast<int>(p / d.wout);
      const int ox = static_cast<int>(p % d.wout);
      const int iy = oy * d.stride - d.pad + ky;
      const int ix = ox * d.stride - d.pad + kx;
      out_row[p - p0] =
          (iy >= 0 && iy < d.hin && ix >= 0 && ix < d.win) ? xc[static_cast<std::int64_t>(iy) * d.win + ix] : 0.0;
    }
  }
}

std::int64_t conv_tile_size(int rows, std::int64_t total) {
  // keep the im2col buffer near 8 MB
  std::int64_t t = (1 << 20) / std::max(rows, 1);
  t = std::max<std::int64_t>(t, 256);
  return std::min(t, total);
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad, int groups) {
  const ConvDims d = conv_dims(x->value, w->value, stride, pad, groups);
  if (b && (b->value.rank() != 1 || b->value.dim(0) != d.cout))
    throw std::invalid_argument("conv2d: bias size mismatch");
  const int cout_g = d.cout / d.groups;
  const int rows = d.cin_g * d.kh * d.kw;
  const std::int64_t hw_out = static_cast<std::int64_t>(d.hout) * d.wout;
  Tensor out({d.cout, d.hout, d.wout});
  const std::int64_t tile_n = conv_tile_size(rows, hw_out);
  std::vector<double> col(static_cast<std::size_t>(rows) * tile_n);
  for (int g = 0; g < d.groups; ++g) {
    CMapMat W(w->value.data() + static_cast<std::int64_t>(g) * cout_g * rows, cout_g, rows);
    for (std::int64_t p0 = 0; p0 < hw_out; p0 += tile_n) {
      const std::int64_t p1 = std::min(hw_out, p0 + tile_n);
      im2col_tile(x->value.data(), d, g, p0, p1, col.data());
      CMapMat C(col.data(), rows, p1 - p0);
      // scatter into the strided output block
      RowMat Y = W * C;
      for (int co = 0; co < cout_g; ++co) {
        double* dst = out.data() + (static_cast<std::int64_t>(g) * cout_g + co) * hw_out + p0;
        const double* src = Y.data() + static_cast<std::int64_t>(co) * (p1 - p0);
        std::copy(src, src + (p1 - p0), dst);
      }
    }
  }
  if (b) {
    for (int co = 0; co < d.cout; ++co) {
      double* dst = out.data() + static_cast<std::int64_t>(co) * hw_out;
      const double bv = b->value[co];
      for (std::int64_t i = 0; i < hw_out; ++i) dst[i] += bv;
    }
  }
  std::vector<Var> parents = b ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
  return finish(std::move(out), std::move(parents), [x, w, b, d](Node& self) {
    const int cout_g = d.cout / d.groups;
    const int rows = d.cin_g * d.kh * d.kw;
    const std::int64_t hw_out = static_cast<std::int64_t>(d.hout) * d.wout;
    const std::int64_t hw_in = static_cast<std::int64_t>(d.hin) * d.win;
    if (b && b->requires_grad) {
      Tensor& gb = b->ensure_grad();
      for (int co = 0; co < d.cout; ++co) {
        const double* gy = self.grad.data() + static_cast<std::int64_t>(co) * hw_out;
        double s = 0.0;
        for (std::int64_t i = 0; i < hw_out; ++i) s += gy[i];
        gb[co] += s;
      }
    }
    const bool need_gx = x->requires_grad;
    const bool need_gw = w->requires_grad;
    if (!need_gx && !need_gw) return;
    const std::int64_t tile_n = conv_tile_size(rows, hw_out);
    std::vector<double> col(static_cast<std::size_t>(rows) * tile_n);
    std::vector<double> gy_tile(static_cast<std::size_t>(cout_g) * tile_n);
    std::vector<double> gcol(need_gx ? static_cast<std::size_t>(rows) * tile_n : 0);
    Tensor* gx = need_gx ? &x->ensure_grad() : nullptr;
    Tensor* gw = need_gw ? &w->ensure_grad() : nullptr;
    for (int g = 0; g < d.groups; ++g) {
      CMapMat W(w->value.data() + static_cast<std::int64_t>(g) * cout_g * rows, cout_g, rows);
      for (std::int64_t p0 = 0; p0 < hw_out; p0 += tile_n) {
        const std::int64_t p1 = std::min(hw_out, p0 + tile_n);
        const std::int64_t tn = p1 - p0;
        for (int co = 0; co < cout_g; ++co) {
          const double* src =
              self.grad.data() + (static_cast<std::int64_t>(g) * cout_g + co) * hw_out + p0;
          std::copy(src, src + tn, gy_tile.data() + static_cast<std::int64_t>(co) * tn);
        }
        CMapMat GY(gy_tile.data(), cout_g, tn);
        if (need_gw) {
          im2col_tile(x->value.data(), d, g, p0, p1, col.data());
          CMapMat C(col.data(), rows, tn);
          MapMat GW(gw->data() + static_cast<std::int64_t>(g) * cout_g * rows, cout_g, rows);
          GW.noalias() += GY * C.transpose();
        }
        if (need_gx) {
          MapMat GC(gcol.data(), rows, tn);
          GC.noalias() = W.transpose() * GY;
          // col2im scatter-add
          for (int r = 0; r < rows; ++r) {
            const int ci = r / (d.kh * d.kw);
            const int ky = (r / d.kw) % d.kh;
            const int kx = r % d.kw;
            double* xc = gx->data() + (static_cast<std::int64_t>(g) * d.cin_g + ci) * hw_in;
            const double* grow = gcol.data() + static_cast<std::int64_t>(r) * tn;
            for (std::int64_t p = p0; p < p1; ++p) {
              const int oy = static_cast<int>(p / d.wout);
              const int ox = static_cast<int>(p % d.wout);
              const int iy = oy * d.stride - d.pad + ky;
              const int ix = ox * d.stride - d.pad + kx;
              if (iy >= 0 && iy < d.hin && ix >= 0 && ix < d.win)
                xc[static_cast<std::int64_t>(iy) * d.win + ix] += grow[p - p0];
            }
          }
        }
      }
    }
  });
}

Var upsample_bilinear(const Var& x, int out_h, int out_w) {
  if (x->value.rank() != 3) throw std::invalid_argument("upsample_bilinear: rank-3 only");
  const int c = x->value.dim(0), hin = x->value.dim(1), win = x->value.dim(2);
  if (out_h <= 0 || out_w <= 0) throw std::invalid_argument("upsample_bilinear: bad size");
  const double sy = static_cast<double>(hin) / out_h;
  const double sx = static_cast<double>(win) / out_w;
  // precompute interpolation taps (half-pixel centers, edges clamped)
  struct Tap {
    int i0, i1;
    double t;
  };
  std::vector<Tap> ty(out_h), tx(out_w);
  auto make_tap = [](int o, double scale, int in_size) {
    double s = (o + 0.5) * scale - 0.5;
    if (s < 0) s = 0;
    if (s > in_size - 1) s = in_size - 1;
    Tap t;
    t.i0 = static_cast<int>(std::floor(s));
    t.i1 = std::min(t.i0 + 1, in_size - 1);
    t.t = s - t.i0;
    return t;
  };
  for (int oy = 0; oy < out_h; ++oy) ty[oy] = make_tap(oy, sy, hin);
  for (int ox = 0; ox < out_w; ++ox) tx[ox] = make_tap(ox, sx, win);
  Tensor out({c, out_h, out_w});
  for (int ci = 0; ci < c; ++ci) {
    for (int oy = 0; oy < out_h; ++oy) {
      const Tap& a = ty[oy];
      for (int ox = 0; ox < out_w; ++ox) {
        const Tap& bx = tx[ox];
        const double v00 = x->value.at(ci, a.i0, bx.i0);
        const double v01 = x->value.at(ci, a.i0, bx.i1);
        const double v10 = x->value.at(ci, a.i1, bx.i0);
        const double v11 = x->value.at(ci, a.i1, bx.i1);
        out.at(ci, oy, ox) = (1 - a.t) * ((1 - bx.t) * v00 + bx.t * v01) +
                             a.t * ((1 - bx.t) * v10 + bx.t * v11);
      }
    }
  }
  return finish(std::move(out), {x}, [x, c, out_h, out_w, ty, tx](Node& self) {
    if (!x->requires_grad) return;
    Tensor& g = x->ensure_grad();
    for (int ci = 0; ci < c; ++ci) {
      for (int oy = 0; oy < out_h; ++oy) {
        const auto& a = ty[oy];
        for (int ox = 0; ox < out_w; ++ox) {
          const auto& bx = tx[ox];
          const double gy = self.grad.at(ci, oy, ox);
          g.at(ci, a.i0, bx.i0) += (1 - a.t) * (1 - bx.t) * gy;
          g.at(ci, a.i0, bx.i1) += (1 - a.t) * bx.t * gy;
          g.at(ci, a.i1, bx.i0) += a.t * (1 - bx.t) * gy;
          g.at(ci, a.i1, bx.i1) += a.t * bx.t * gy;
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// model-specific ops
// ---------------------------------------------------------------------------

Var scale_by(const Var& a, const Var& s) {
  if (s->value.size() != 1) throw std::invalid_argument("scale_by: scalar expected");
  Tensor out(a->value.shape());
  const double sv = s->value[0];
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * sv;
  return finish(std::move(out), {a, s}, [a, s](Node& self) {
    if (a->requires_grad) {
      Tensor& g = a->ensure_grad();
      const double sv = s->value[0];
      for (std::int64_t i = 0; i < self.value.size(); ++i) g[i] += self.grad[i] * sv;
    }
    if (s->requires_grad) {
      double acc = 0.0;
      for (std::int64_t i = 0; i < self.value.size(); ++i) acc += self.grad[i] * a->value[i];
      s->ensure_grad()[0] += acc;
    }
  });
}

Var lincomb_channels(const Var& probs, const Var& coeff) {
  if (probs->value.rank() != 3 || coeff->value.rank() != 1 ||
      probs->value.dim(0) != coeff->value.dim(0))
    throw std::invalid_argument("lincomb_channels: shape mismatch");
  const int n = probs->value.dim(0), h = probs->value.dim(1), w = probs->value.dim(2);
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  Tensor out({1, h, w});
  for (int i = 0; i < n; ++i) {
    const double ci = coeff->value[i];
    const double* p = probs->value.data() + i * hw;
    for (std::int64_t k = 0; k < hw; ++k) out[k] += ci * p[k];
  }
  return finish(std::move(out), {probs, coeff}, [probs, coeff, n, hw](Node& self) {
    if (probs->requires_grad) {
      Tensor& g = probs->ensure_grad();
      for (int i = 0; i < n; ++i) {
        const double ci = coeff->value[i];
        double* gp = g.data() + i * hw;
        for (std::int64_t k = 0; k < hw; ++k) gp[k] += ci * self.grad[k];
      }
    }
    if (coeff->requires_grad) {
      Tensor& g = coeff->ensure_grad();
      for (int i = 0; i < n; ++i) {
        const double* p = probs->value.data() + i * hw;
        double acc = 0.0;
        for (std::int64_t k = 0; k < hw; ++k) acc += p[k] * self.grad[k];
        g[i] += acc;
      }
    }
  });
}

Var bin_centers_from_widths(const Var& widths, double d_min) {
  if (widths->value.rank() != 1) throw std::invalid_argument("bin_centers: rank-1 only");
  const int n = widths->value.dim(0);
  Tensor out({n});
  double running = d_min;
  for (int i = 0; i < n; ++i) {
    out[i] = running + 0.5 * widths->value[i];
    running += widths->value[i];
  }
  return finish(std::move(out), {widths}, [widths, n](Node& self) {
    if (!widths->requires_grad) return;
    Tensor& g = widths->ensure_grad();
    // dc_i/dw_j = 1 (j<i), 0.5 (j==i)
    double suffix = 0.0;
    for (int j = n - 1; j >= 0; --j) {
      g[j] += 0.5 * self.grad[j] + suffix;
      suffix += self.grad[j];
    }
  });
}

Var chamfer_sets(const Var& centers, const std::vector<double>& samples) {
  if (centers->value.rank() != 1) throw std::invalid_argument("chamfer_sets: rank-1 only");
  if (samples.empty()) throw std::invalid_argument("chamfer_sets: empty sample set");
  const int n = centers->value.dim(0);
  std::vector<int> nearest_sample(n);      // argmin_j for each center
  std::vector<int> nearest_center(samples.size());  // argmin_i for each sample
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    int bj = 0;
    for (std::size_t j = 0; j < samples.size(); ++j) {
      const double dd = (samples[j] - centers->value[i]) * (samples[j] - centers->value[i]);
      if (dd < best) {
        best = dd;
        bj = static_cast<int>(j);
      }
    }
    nearest_sample[i] = bj;
    total += best;
  }
  for (std::size_t j = 0; j < samples.size(); ++j) {
    double best = std::numeric_limits<double>::infinity();
    int bi = 0;
    for (int i = 0; i < n; ++i) {
      const double dd = (samples[j] - centers->value[i]) * (samples[j] - centers->value[i]);
      if (dd < best) {
        best = dd;
        bi = i;
      }
    }
    nearest_center[j] = bi;
    total += best;
  }
  return finish(Tensor::scalar(total), {centers},
                [centers, samples, nearest_sample, nearest_center, n](Node& self) {
    if (!centers->requires_grad) return;
    Tensor& g = centers->ensure_grad();
    const double gy = self.grad[0];
    for (int i = 0; i < n; ++i)
      g[i] += gy * 2.0 * (centers->value[i] - samples[nearest_sample[i]]);
    for (std::size_t j = 0; j < samples.size(); ++j) {
      const int i = nearest_center[j];
      g[i] += gy * 2.0 * (centers->value[i] - samples[j]);
    }
  });
}

}  // namespace priordepth::nn
