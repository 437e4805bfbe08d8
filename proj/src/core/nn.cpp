#include "lpvae/core/nn.hpp"

#include <cmath>

namespace lpvae::nn {

Tensor fan_in_normal(const Shape& shape, int64_t fan_in, Rng& rng, double gain) {
  const double stddev = gain / std::sqrt(static_cast<double>(fan_in));
  return Tensor::randn(shape, rng, stddev);
}

Linear::Linear(int64_t in_dim, int64_t out_dim, Rng& rng, bool zero_init, double gain) {
  Tensor w = zero_init ? Tensor({out_dim, in_dim}) : fan_in_normal({out_dim, in_dim}, in_dim, rng, gain);
  W = make_var(std::move(w), true);
  b = make_var(Tensor({out_dim}), true);
}

void Linear::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".weight", W});
  out.push_back({prefix + ".bias", b});
}

Conv2d::Conv2d(int64_t cin, int64_t cout, int64_t kernel, int64_t stride, int64_t pad, Rng& rng,
               bool zero_init, double gain) {
  geom = ConvGeom{kernel, kernel, stride, pad, 0};
  const int64_t fan_in = cin * kernel * kernel;
  Tensor w = zero_init ? Tensor({cout, cin, kernel, kernel})
                       : fan_in_normal({cout, cin, kernel, kernel}, fan_in, rng, gain);
  W = make_var(std::move(w), true);
  b = make_var(Tensor({cout}), true);
}

void Conv2d::set_mask(Tensor mask) {
  if (!mask.same_shape(W->value)) throw ContractError("conv mask must match weight shape");
  mask_ = std::move(mask);
  has_mask_ = true;
  W->value.array() *= mask_.array();
}

Var Conv2d::forward(const Var& x) const {
  if (has_mask_) return lpvae::conv2d(x, mul(W, constant(mask_)), b, geom);
  return lpvae::conv2d(x, W, b, geom);
}

void Conv2d::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".weight", W});
  out.push_back({prefix + ".bias", b});
}

ConvTranspose2d::ConvTranspose2d(int64_t cin, int64_t cout, int64_t kernel, int64_t stride,
                                 int64_t pad, int64_t out_pad, Rng& rng, double gain) {
  geom = ConvGeom{kernel, kernel, stride, pad, out_pad};
  const int64_t fan_in = cin * kernel * kernel;
  W = make_var(fan_in_normal({cin, cout, kernel, kernel}, fan_in, rng, gain), true);
  b = make_var(Tensor({cout}), true);
}

void ConvTranspose2d::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".weight", W});
  out.push_back({prefix + ".bias", b});
}

BatchNorm1d::BatchNorm1d(int64_t features) {
  gamma = make_var(Tensor::full({features}, 1.0), true);
  beta = make_var(Tensor({features}), true);
  running_mean = Tensor({features});
  running_var = Tensor::full({features}, 1.0);
}

Var BatchNorm1d::forward(const Var& x, bool training) {
  if (x->value.ndim() != 2) throw ContractError("BatchNorm1d: expected [m,n]");
  const int64_t m = x->value.dim(0);
  if (training) {
    Var mu = mean_cols(x);
    Var xc = add_rowvec(x, neg(mu));
    Var var = mean_cols(square(xc));
    Var inv_std = reciprocal(sqrt_op(add_scalar(var, eps)));
    Var xhat = mul_rowvec(xc, inv_std);
    // Running estimates track batch statistics (unbiased variance).
    const double unbias = m > 1 ? static_cast<double>(m) / static_cast<double>(m - 1) : 1.0;
    running_mean.array() = (1.0 - momentum) * running_mean.array() + momentum * mu->value.array();
    running_var.array() =
        (1.0 - momentum) * running_var.array() + momentum * unbias * var->value.array();
    return add_rowvec(mul_rowvec(xhat, gamma), beta);
  }
  Tensor inv_std({running_var.numel()});
  inv_std.array() = (running_var.array() + eps).rsqrt();
  Var xc = add_rowvec(x, constant(Tensor(running_mean.shape(), -running_mean.array())));
  Var xhat = mul_rowvec(xc, constant(inv_std));
  return add_rowvec(mul_rowvec(xhat, gamma), beta);
}

void BatchNorm1d::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

BatchNorm2d::BatchNorm2d(int64_t channels) {
  gamma = make_var(Tensor::full({channels}, 1.0), true);
  beta = make_var(Tensor({channels}), true);
  running_mean = Tensor({channels});
  running_var = Tensor::full({channels}, 1.0);
}

Var BatchNorm2d::forward(const Var& x, bool training) {
  if (x->value.ndim() != 4) throw ContractError("BatchNorm2d: expected [B,C,H,W]");
  const int64_t n = x->value.dim(0) * x->value.dim(2) * x->value.dim(3);
  if (training) {
    Var mu = mean_bhw(x);
    Var xc = sub_channel(x, mu);
    Var var = mean_bhw(square(xc));
    Var inv_std = reciprocal(sqrt_op(add_scalar(var, eps)));
    Var xhat = mul_channel(xc, inv_std);
    const double unbias = n > 1 ? static_cast<double>(n) / static_cast<double>(n - 1) : 1.0;
    running_mean.array() = (1.0 - momentum) * running_mean.array() + momentum * mu->value.array();
    running_var.array() =
        (1.0 - momentum) * running_var.array() + momentum * unbias * var->value.array();
    return add_channel(mul_channel(xhat, gamma), beta);
  }
  Tensor inv_std({running_var.numel()});
  inv_std.array() = (running_var.array() + eps).rsqrt();
  Var xc = add_channel(x, constant(Tensor(running_mean.shape(), -running_mean.array())));
  Var xhat = mul_channel(xc, constant(inv_std));
  return add_channel(mul_channel(xhat, gamma), beta);
}

void BatchNorm2d::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

Var dropout(const Var& x, double rate, bool training, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ContractError("dropout: rate must be in [0,1)");
  if (!training || rate == 0.0) return x;
  Tensor mask(x->value.shape());
  const double keep = 1.0 - rate;
  for (int64_t i = 0; i < mask.numel(); ++i) mask[i] = rng.uniform() < keep ? 1.0 / keep : 0.0;
  return mul(x, constant(std::move(mask)));
}

}  // namespace lpvae::nn
