#pragma once

#include <string>
#include <vector>

#include "lpvae/core/conv.hpp"
#include "lpvae/core/ops.hpp"
#include "lpvae/core/rng.hpp"

namespace lpvae::nn {

struct NamedParam {
  std::string name;
  Var var;
};
using ParamList = std::vector<NamedParam>;

inline std::vector<Var> vars_of(const ParamList& ps) {
  std::vector<Var> out;
  out.reserve(ps.size());
  for (const auto& p : ps) out.push_back(p.var);
  return out;
}

// Fan-in scaled normal init (He-style, gain sqrt(2) for ReLU stacks).
Tensor fan_in_normal(const Shape& shape, int64_t fan_in, Rng& rng, double gain);

class Linear {
 public:
  Linear() = default;
  // zero_init pins weights and bias at exactly zero (likelihood-param heads).
  Linear(int64_t in_dim, int64_t out_dim, Rng& rng, bool zero_init = false, double gain = std::numbers::sqrt2);
  Var forward(const Var& x) const { return linear(x, W, b); }
  void collect(const std::string& prefix, ParamList& out) const;
  int64_t in_dim() const { return W->value.dim(1); }
  int64_t out_dim() const { return W->value.dim(0); }

  Var W, b;
};

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int64_t cin, int64_t cout, int64_t kernel, int64_t stride, int64_t pad, Rng& rng,
         bool zero_init = false, double gain = std::numbers::sqrt2);
  // Binary mask with the same shape as the weight; masked entries are dead
  // (zeroed at install time and receive zero gradient).
  void set_mask(Tensor mask);
  bool has_mask() const { return has_mask_; }
  const Tensor& mask() const { return mask_; }
  Var forward(const Var& x) const;
  void collect(const std::string& prefix, ParamList& out) const;

  Var W, b;
  ConvGeom geom;

 private:
  Tensor mask_;
  bool has_mask_ = false;
};

class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(int64_t cin, int64_t cout, int64_t kernel, int64_t stride, int64_t pad,
                  int64_t out_pad, Rng& rng, double gain = std::numbers::sqrt2);
  Var forward(const Var& x) const { return conv_transpose2d(x, W, b, geom); }
  void collect(const std::string& prefix, ParamList& out) const;

  Var W, b;
  ConvGeom geom;
};

// Batch statistics over rows of [m,n]; running estimates used at eval time.
class BatchNorm1d {
 public:
  BatchNorm1d() = default;
  explicit BatchNorm1d(int64_t features);
  Var forward(const Var& x, bool training);
  void collect(const std::string& prefix, ParamList& out) const;

  Var gamma, beta;
  Tensor running_mean, running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};

// Per-channel statistics over (B,H,W) of [B,C,H,W].
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  explicit BatchNorm2d(int64_t channels);
  Var forward(const Var& x, bool training);
  void collect(const std::string& prefix, ParamList& out) const;

  Var gamma, beta;
  Tensor running_mean, running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};

// Inverted dropout; identity at eval time.
Var dropout(const Var& x, double rate, bool training, Rng& rng);

}  // namespace lpvae::nn
