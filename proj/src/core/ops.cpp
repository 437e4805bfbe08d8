#include "lpvae/core/ops.hpp"

#include <algorithm>
#include <cmath>

namespace lpvae {

namespace {

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a->value.same_shape(b->value))
    throw ContractError(std::string(op) + ": shape mismatch");
}

// [m,n] helpers
std::pair<int64_t, int64_t> rows_cols(const Var& a, const char* op) {
  if (a->value.ndim() != 2) throw ContractError(std::string(op) + ": expected a 2-D tensor");
  return {a->value.dim(0), a->value.dim(1)};
}

void check_bchw(const Var& a, const char* op) {
  if (a->value.ndim() != 4) throw ContractError(std::string(op) + ": expected a 4-D tensor");
}

}  // namespace

// -- arithmetic ---------------------------------------------------------------

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor out(a->value.shape(), a->value.array() + b->value.array());
  return attach(std::move(out), {a, b}, [a, b](Node& self) {
    if (a->requires_grad) a->accum_grad(self.grad.array());
    if (b->requires_grad) b->accum_grad(self.grad.array());
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tensor out(a->value.shape(), a->value.array() - b->value.array());
  return attach(std::move(out), {a, b}, [a, b](Node& self) {
    if (a->requires_grad) a->accum_grad(self.grad.array());
    if (b->requires_grad) b->accum_grad(-self.grad.array());
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tensor out(a->value.shape(), a->value.array() * b->value.array());
  return attach(std::move(out), {a, b}, [a, b](Node& self) {
    if (a->requires_grad) a->accum_grad(self.grad.array() * b->value.array());
    if (b->requires_grad) b->accum_grad(self.grad.array() * a->value.array());
  });
}

Var div(const Var& a, const Var& b) {
  check_same_shape(a, b, "div");
  Tensor out(a->value.shape(), a->value.array() / b->value.array());
  return attach(std::move(out), {a, b}, [a, b](Node& self) {
    if (a->requires_grad) a->accum_grad(self.grad.array() / b->value.array());
    if (b->requires_grad)
      b->accum_grad(-self.grad.array() * a->value.array() / b->value.array().square());
  });
}

Var add_scalar(const Var& a, double c) {
  Tensor out(a->value.shape(), a->value.array() + c);
  return attach(std::move(out), {a}, [a](Node& self) {
    if (a->requires_grad) a->accum_grad(self.grad.array());
  });
}

Var mul_scalar(const Var& a, double c) {
  Tensor out(a->value.shape(), a->value.array() * c);
  return attach(std::move(out), {a}, [a, c](Node& self) {
    if (a->requires_grad) a->accum_grad(self.grad.array() * c);
  });
}

Var neg(const Var& a) { return mul_scalar(a, -1.0); }

Var add_rowvec(const Var& x, const Var& v) {
  auto [m, n] = rows_cols(x, "add_rowvec");
  if (v->value.numel() != n) throw ContractError("add_rowvec: vector length mismatch");
  Tensor out(x->value.shape());
  out.mat(m, n) = x->value.mat(m, n).rowwise() + v->value.array().matrix().transpose();
  return attach(std::move(out), {x, v}, [x, v, m = m, n = n](Node& self) {
    if (x->requires_grad) x->accum_grad(self.grad.array());
    if (v->requires_grad) v->accum_grad(self.grad.mat(m, n).colwise().sum().array().transpose());
  });
}

Var mul_rowvec(const Var& x, const Var& v) {
  auto [m, n] = rows_cols(x, "mul_rowvec");
  if (v->value.numel() != n) throw ContractError("mul_rowvec: vector length mismatch");
  Tensor out(x->value.shape());
  out.mat(m, n) = x->value.mat(m, n).array().rowwise() * v->value.array().transpose();
  return attach(std::move(out), {x, v}, [x, v, m = m, n = n](Node& self) {
    if (x->requires_grad) {
      Tensor g(x->value.shape());
      g.mat(m, n) = self.grad.mat(m, n).array().rowwise() * v->value.array().transpose();
      x->accum_grad(g.array());
    }
    if (v->requires_grad)
      v->accum_grad((self.grad.mat(m, n).array() * x->value.mat(m, n).array())
                        .colwise()
                        .sum()
                        .transpose());
  });
}

Var sub_colvec(const Var& x, const Var& v) {
  auto [m, n] = rows_cols(x, "sub_colvec");
  if (v->value.numel() != m) throw ContractError("sub_colvec: vector length mismatch");
  Tensor out(x->value.shape());
  out.mat(m, n) = x->value.mat(m, n).colwise() - v->value.array().matrix();
  return attach(std::move(out), {x, v}, [x, v, m = m, n = n](Node& self) {
    if (x->requires_grad) x->accum_grad(self.grad.array());
    if (v->requires_grad) v->accum_grad(-self.grad.mat(m, n).rowwise().sum().array());
  });
}

Var mul_colvec(const Var& x, const Var& v) {
  auto [m, n] = rows_cols(x, "mul_colvec");
  if (v->value.numel() != m) throw ContractError("mul_colvec: vector length mismatch");
  Tensor out(x->value.shape());
  out.mat(m, n) = x->value.mat(m, n).array().colwise() * v->value.array();
  return attach(std::move(out), {x, v}, [x, v, m = m, n = n](Node& self) {
    if (x->requires_grad) {
      Tensor g(x->value.shape());
      g.mat(m, n) = self.grad.mat(m, n).array().colwise() * v->value.array();
      x->accum_grad(g.array());
    }
    if (v->requires_grad)
      v->accum_grad(
          (self.grad.mat(m, n).array() * x->value.mat(m, n).array()).rowwise().sum());
  });
}

namespace {

// Shared core for the channel-broadcast family on [B,C,H,W].
template <class Fwd, class BwdX, class BwdV>
Var channel_op(const Var& x, const Var& v, const char* name, Fwd fwd, BwdX bwd_x, BwdV bwd_v) {
  check_bchw(x, name);
  const int64_t B = x->value.dim(0), C = x->value.dim(1), HW = x->value.dim(2) * x->value.dim(3);
  if (v->value.numel() != C) throw ContractError(std::string(name) + ": channel count mismatch");
  Tensor out(x->value.shape());
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < C; ++c) {
      const int64_t off = (b * C + c) * HW;
      Eigen::Map<ArrayXd>(out.data() + off, HW) =
          fwd(Eigen::Map<const ArrayXd>(x->value.data() + off, HW), v->value[c]);
    }
  return attach(std::move(out), {x, v},
                [x, v, B, C, HW, bwd_x, bwd_v](Node& self) {
                  if (x->requires_grad) {
                    Tensor g(x->value.shape());
                    for (int64_t b = 0; b < B; ++b)
                      for (int64_t c = 0; c < C; ++c) {
                        const int64_t off = (b * C + c) * HW;
                        Eigen::Map<ArrayXd>(g.data() + off, HW) =
                            bwd_x(Eigen::Map<const ArrayXd>(self.grad.data() + off, HW),
                                  v->value[c]);
                      }
                    x->accum_grad(g.array());
                  }
                  if (v->requires_grad) {
                    ArrayXd gv = ArrayXd::Zero(C);
                    for (int64_t b = 0; b < B; ++b)
                      for (int64_t c = 0; c < C; ++c) {
                        const int64_t off = (b * C + c) * HW;
                        gv[c] += bwd_v(Eigen::Map<const ArrayXd>(self.grad.data() + off, HW),
                                       Eigen::Map<const ArrayXd>(x->value.data() + off, HW));
                      }
                    v->accum_grad(gv);
                  }
                });
}

}  // namespace

Var add_channel(const Var& x, const Var& v) {
  return channel_op(
      x, v, "add_channel", [](auto xs, double s) { return (xs + s).eval(); },
      [](auto g, double) { return g.eval(); },
      [](auto g, auto) { return g.sum(); });
}

Var sub_channel(const Var& x, const Var& v) {
  return channel_op(
      x, v, "sub_channel", [](auto xs, double s) { return (xs - s).eval(); },
      [](auto g, double) { return g.eval(); },
      [](auto g, auto) { return -g.sum(); });
}

Var mul_channel(const Var& x, const Var& v) {
  return channel_op(
      x, v, "mul_channel", [](auto xs, double s) { return (xs * s).eval(); },
      [](auto g, double s) { return (g * s).eval(); },
      [](auto g, auto xs) { return (g * xs).sum(); });
}

// -- elementwise nonlinearities -------------------------------------------

namespace {

template <class Fwd, class Bwd>
Var unary_op(const Var& a, Fwd fwd, Bwd bwd_factor) {
  Tensor out(a->value.shape(), fwd(a->value.array()));
  // bwd_factor(x, y) is dy/dx evaluated elementwise.
  return attach(std::move(out), {a}, [a, bwd_factor](Node& self) {
    a->accum_grad(self.grad.array() * bwd_factor(a->value.array(), self.value.array()));
  });
}

}  // namespace

Var relu(const Var& a) {
  return unary_op(
      a, [](const ArrayXd& x) { return x.max(0.0).eval(); },
      [](const ArrayXd& x, const ArrayXd&) { return (x > 0.0).cast<double>().eval(); });
}

Var leaky_relu(const Var& a, double slope) {
  return unary_op(
      a,
      [slope](const ArrayXd& x) { return (x >= 0.0).select(x, slope * x).eval(); },
      [slope](const ArrayXd& x, const ArrayXd&) {
        return (x >= 0.0).select(ArrayXd::Ones(x.size()), ArrayXd::Constant(x.size(), slope)).eval();
      });
}

namespace {
inline double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace

Var sigmoid(const Var& a) {
  return unary_op(
      a,
      [](const ArrayXd& x) { return x.unaryExpr([](double v) { return stable_sigmoid(v); }).eval(); },
      [](const ArrayXd&, const ArrayXd& y) { return (y * (1.0 - y)).eval(); });
}

Var tanh_op(const Var& a) {
  return unary_op(
      a, [](const ArrayXd& x) { return x.tanh().eval(); },
      [](const ArrayXd&, const ArrayXd& y) { return (1.0 - y.square()).eval(); });
}

Var exp_op(const Var& a) {
  return unary_op(
      a, [](const ArrayXd& x) { return x.exp().eval(); },
      [](const ArrayXd&, const ArrayXd& y) { return y; });
}

Var log_op(const Var& a) {
  return unary_op(
      a, [](const ArrayXd& x) { return x.log().eval(); },
      [](const ArrayXd& x, const ArrayXd&) { return x.inverse().eval(); });
}

Var sqrt_op(const Var& a) {
  return unary_op(
      a, [](const ArrayXd& x) { return x.sqrt().eval(); },
      [](const ArrayXd&, const ArrayXd& y) { return (0.5 / y).eval(); });
}

Var square(const Var& a) {
  return unary_op(
      a, [](const ArrayXd& x) { return x.square().eval(); },
      [](const ArrayXd& x, const ArrayXd&) { return (2.0 * x).eval(); });
}

Var reciprocal(const Var& a) {
  return unary_op(
      a, [](const ArrayXd& x) { return x.inverse().eval(); },
      [](const ArrayXd&, const ArrayXd& y) { return (-y.square()).eval(); });
}

Var softplus(const Var& a) {
  return unary_op(
      a,
      [](const ArrayXd& x) {
        return (x.max(0.0) + (-x.abs()).exp().log1p()).eval();
      },
      [](const ArrayXd& x, const ArrayXd&) {
        return x.unaryExpr([](double v) { return stable_sigmoid(v); }).eval();
      });
}

Var clamp(const Var& a, double lo, double hi) {
  if (lo > hi) throw ContractError("clamp: lo > hi");
  return unary_op(
      a, [lo, hi](const ArrayXd& x) { return x.max(lo).min(hi).eval(); },
      [lo, hi](const ArrayXd& x, const ArrayXd&) {
        return ((x >= lo) && (x <= hi)).cast<double>().eval();
      });
}

// -- reductions ---------------------------------------------------------------

Var sum_all(const Var& a) {
  Tensor out = Tensor::scalar(a->value.array().sum());
  return attach(std::move(out), {a}, [a](Node& self) {
    if (a->requires_grad)
      a->accum_grad(ArrayXd::Constant(a->value.numel(), self.grad[0]));
  });
}

Var mean_all(const Var& a) { return mul_scalar(sum_all(a), 1.0 / static_cast<double>(a->value.numel())); }

Var sum_rows(const Var& a) {
  auto [m, n] = rows_cols(a, "sum_rows");
  Tensor out({m});
  out.array() = a->value.mat(m, n).rowwise().sum().array();
  return attach(std::move(out), {a}, [a, m = m, n = n](Node& self) {
    if (!a->requires_grad) return;
    Tensor g(a->value.shape());
    g.mat(m, n).array().colwise() = self.grad.array();
    a->accum_grad(g.array());
  });
}

Var sum_cols(const Var& a) {
  auto [m, n] = rows_cols(a, "sum_cols");
  Tensor out({n});
  out.array() = a->value.mat(m, n).colwise().sum().array().transpose();
  return attach(std::move(out), {a}, [a, m = m, n = n](Node& self) {
    if (!a->requires_grad) return;
    Tensor g(a->value.shape());
    g.mat(m, n).array().rowwise() = self.grad.array().transpose();
    a->accum_grad(g.array());
  });
}

Var mean_cols(const Var& a) {
  auto [m, n] = rows_cols(a, "mean_cols");
  (void)n;
  return mul_scalar(sum_cols(a), 1.0 / static_cast<double>(m));
}

Var sum_bhw(const Var& a) {
  check_bchw(a, "sum_bhw");
  const int64_t B = a->value.dim(0), C = a->value.dim(1), HW = a->value.dim(2) * a->value.dim(3);
  Tensor out({C});
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < C; ++c)
      out[c] += Eigen::Map<const ArrayXd>(a->value.data() + (b * C + c) * HW, HW).sum();
  return attach(std::move(out), {a}, [a, B, C, HW](Node& self) {
    if (!a->requires_grad) return;
    Tensor g(a->value.shape());
    for (int64_t b = 0; b < B; ++b)
      for (int64_t c = 0; c < C; ++c)
        Eigen::Map<ArrayXd>(g.data() + (b * C + c) * HW, HW).setConstant(self.grad[c]);
    a->accum_grad(g.array());
  });
}

Var mean_bhw(const Var& a) {
  check_bchw(a, "mean_bhw");
  const double denom = static_cast<double>(a->value.dim(0) * a->value.dim(2) * a->value.dim(3));
  return mul_scalar(sum_bhw(a), 1.0 / denom);
}

Var logsumexp_rows(const Var& a) {
  auto [m, n] = rows_cols(a, "logsumexp_rows");
  Tensor out({m});
  auto A = a->value.mat(m, n);
  for (int64_t i = 0; i < m; ++i) {
    const double mx = A.row(i).maxCoeff();
    out[i] = mx + std::log((A.row(i).array() - mx).exp().sum());
  }
  return attach(std::move(out), {a}, [a, m = m, n = n](Node& self) {
    if (!a->requires_grad) return;
    Tensor g(a->value.shape());
    auto A = a->value.mat(m, n);
    auto G = g.mat(m, n);
    for (int64_t i = 0; i < m; ++i)
      G.row(i) = self.grad[i] * (A.row(i).array() - self.value[i]).exp().matrix();
    a->accum_grad(g.array());
  });
}

// -- shape plumbing -------------------------------------------------------------

Var reshape(const Var& a, Shape shape) {
  Tensor out = a->value.reshaped(std::move(shape));
  return attach(std::move(out), {a}, [a](Node& self) {
    if (a->requires_grad) a->accum_grad(self.grad.array());
  });
}

Var concat_cols(const std::vector<Var>& xs) {
  if (xs.empty()) throw ContractError("concat_cols: empty input");
  const int64_t m = xs[0]->value.dim(0);
  int64_t total = 0;
  for (const auto& x : xs) {
    auto [mi, ni] = rows_cols(x, "concat_cols");
    if (mi != m) throw ContractError("concat_cols: row count mismatch");
    total += ni;
  }
  Tensor out({m, total});
  auto O = out.mat(m, total);
  int64_t off = 0;
  for (const auto& x : xs) {
    const int64_t ni = x->value.dim(1);
    O.middleCols(off, ni) = x->value.mat(m, ni);
    off += ni;
  }
  std::vector<Var> parents(xs.begin(), xs.end());
  return attach(std::move(out), std::move(parents), [xs, m, total](Node& self) {
    auto G = self.grad.mat(m, total);
    int64_t off = 0;
    for (const auto& x : xs) {
      const int64_t ni = x->value.dim(1);
      if (x->requires_grad) {
        Tensor g(x->value.shape());
        g.mat(m, ni) = G.middleCols(off, ni);
        x->accum_grad(g.array());
      }
      off += ni;
    }
  });
}

Var slice_cols(const Var& a, int64_t lo, int64_t hi) {
  auto [m, n] = rows_cols(a, "slice_cols");
  if (lo < 0 || hi > n || lo >= hi) throw ContractError("slice_cols: bad range");
  const int64_t w = hi - lo;
  Tensor out({m, w});
  out.mat(m, w) = a->value.mat(m, n).middleCols(lo, w);
  return attach(std::move(out), {a}, [a, m = m, n = n, lo, w](Node& self) {
    if (!a->requires_grad) return;
    Tensor g(a->value.shape());
    g.mat(m, n).middleCols(lo, w) = self.grad.mat(m, w);
    a->accum_grad(g.array());
  });
}

Var stack_cols(const std::vector<Var>& xs) {
  if (xs.empty()) throw ContractError("stack_cols: empty input");
  const int64_t m = xs[0]->value.numel();
  const int64_t k = static_cast<int64_t>(xs.size());
  for (const auto& x : xs)
    if (x->value.numel() != m) throw ContractError("stack_cols: length mismatch");
  Tensor out({m, k});
  auto O = out.mat(m, k);
  for (int64_t j = 0; j < k; ++j) O.col(j) = xs[j]->value.array().matrix();
  std::vector<Var> parents(xs.begin(), xs.end());
  return attach(std::move(out), std::move(parents), [xs, m, k](Node& self) {
    auto G = self.grad.mat(m, k);
    for (int64_t j = 0; j < k; ++j)
      if (xs[j]->requires_grad) xs[j]->accum_grad(G.col(j).array());
  });
}

Var concat_channels(const std::vector<Var>& xs) {
  if (xs.empty()) throw ContractError("concat_channels: empty input");
  check_bchw(xs[0], "concat_channels");
  const int64_t B = xs[0]->value.dim(0), H = xs[0]->value.dim(2), W = xs[0]->value.dim(3);
  int64_t Ct = 0;
  for (const auto& x : xs) {
    check_bchw(x, "concat_channels");
    if (x->value.dim(0) != B || x->value.dim(2) != H || x->value.dim(3) != W)
      throw ContractError("concat_channels: shape mismatch");
    Ct += x->value.dim(1);
  }
  const int64_t HW = H * W;
  Tensor out({B, Ct, H, W});
  for (int64_t b = 0; b < B; ++b) {
    int64_t co = 0;
    for (const auto& x : xs) {
      const int64_t Ci = x->value.dim(1);
      std::copy_n(x->value.data() + b * Ci * HW, Ci * HW, out.data() + (b * Ct + co) * HW);
      co += Ci;
    }
  }
  std::vector<Var> parents(xs.begin(), xs.end());
  return attach(std::move(out), std::move(parents), [xs, B, Ct, HW](Node& self) {
    for (int64_t b = 0; b < B; ++b) {
      int64_t co = 0;
      for (const auto& x : xs) {
        const int64_t Ci = x->value.dim(1);
        if (x->requires_grad) {
          if (x->grad.empty()) x->grad = Tensor(x->value.shape());
          Eigen::Map<ArrayXd>(x->grad.data() + b * Ci * HW, Ci * HW) +=
              Eigen::Map<const ArrayXd>(self.grad.data() + (b * Ct + co) * HW, Ci * HW);
        }
        co += Ci;
      }
    }
  });
}

Var channels_to_rows(const Var& a) {
  check_bchw(a, "channels_to_rows");
  const int64_t B = a->value.dim(0), C = a->value.dim(1), HW = a->value.dim(2) * a->value.dim(3);
  Tensor out({B * HW, C});
  auto O = out.mat(B * HW, C);
  for (int64_t b = 0; b < B; ++b) {
    // source block [C, HW] row-major -> destination rows [HW, C]
    ConstMatMap src(a->value.data() + b * C * HW, C, HW);
    O.middleRows(b * HW, HW) = src.transpose();
  }
  return attach(std::move(out), {a}, [a, B, C, HW](Node& self) {
    if (!a->requires_grad) return;
    Tensor g(a->value.shape());
    for (int64_t b = 0; b < B; ++b) {
      MatMap dst(g.data() + b * C * HW, C, HW);
      dst = self.grad.mat(B * HW, C).middleRows(b * HW, HW).transpose();
    }
    a->accum_grad(g.array());
  });
}

// -- linear algebra --------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  auto [m, k] = rows_cols(a, "matmul");
  auto [k2, n] = rows_cols(b, "matmul");
  if (k != k2) throw ContractError("matmul: inner dimension mismatch");
  Tensor out({m, n});
  out.mat(m, n).noalias() = a->value.mat(m, k) * b->value.mat(k, n);
  return attach(std::move(out), {a, b}, [a, b, m = m, k = k, n = n](Node& self) {
    auto G = self.grad.mat(m, n);
    if (a->requires_grad) {
      if (a->grad.empty()) a->grad = Tensor(a->value.shape());
      a->grad.mat(m, k).noalias() += G * b->value.mat(k, n).transpose();
    }
    if (b->requires_grad) {
      if (b->grad.empty()) b->grad = Tensor(b->value.shape());
      b->grad.mat(k, n).noalias() += a->value.mat(m, k).transpose() * G;
    }
  });
}

Var linear(const Var& x, const Var& W, const Var& b) {
  auto [m, in] = rows_cols(x, "linear");
  auto [out_dim, in2] = rows_cols(W, "linear");
  if (in != in2) throw ContractError("linear: input width mismatch with weight");
  if (b->value.numel() != out_dim) throw ContractError("linear: bias length mismatch");
  Tensor out({m, out_dim});
  out.mat(m, out_dim).noalias() = x->value.mat(m, in) * W->value.mat(out_dim, in).transpose();
  out.mat(m, out_dim).rowwise() += b->value.array().matrix().transpose();
  return attach(std::move(out), {x, W, b},
                [x, W, b, m = m, in = in, out_dim = out_dim](Node& self) {
                  auto G = self.grad.mat(m, out_dim);
                  if (x->requires_grad) {
                    if (x->grad.empty()) x->grad = Tensor(x->value.shape());
                    x->grad.mat(m, in).noalias() += G * W->value.mat(out_dim, in);
                  }
                  if (W->requires_grad) {
                    if (W->grad.empty()) W->grad = Tensor(W->value.shape());
                    W->grad.mat(out_dim, in).noalias() += G.transpose() * x->value.mat(m, in);
                  }
                  if (b->requires_grad) b->accum_grad(G.colwise().sum().array().transpose());
                });
}

// -- indexed -----------------------------------------------------------------------

Var gather_rows(const Var& a, const std::vector<int64_t>& idx) {
  auto [m, n] = rows_cols(a, "gather_rows");
  if (static_cast<int64_t>(idx.size()) != m) throw ContractError("gather_rows: index length mismatch");
  Tensor out({m});
  for (int64_t i = 0; i < m; ++i) {
    if (idx[i] < 0 || idx[i] >= n) throw ContractError("gather_rows: index out of range");
    out[i] = a->value[i * n + idx[i]];
  }
  return attach(std::move(out), {a}, [a, idx, n = n, m = m](Node& self) {
    if (!a->requires_grad) return;
    if (a->grad.empty()) a->grad = Tensor(a->value.shape());
    for (int64_t i = 0; i < m; ++i) a->grad[i * n + idx[i]] += self.grad[i];
  });
}

Var log_softmax_rows(const Var& a) {
  auto [m, n] = rows_cols(a, "log_softmax_rows");
  (void)m;
  (void)n;
  return sub_colvec(a, logsumexp_rows(a));
}

Var softmax_rows(const Var& a) { return exp_op(log_softmax_rows(a)); }

}  // namespace lpvae
