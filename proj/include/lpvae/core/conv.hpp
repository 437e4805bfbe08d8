#pragma once

#include "lpvae/core/autodiff.hpp"

namespace lpvae {

struct ConvGeom {
  int64_t kh = 1, kw = 1;
  int64_t stride = 1;
  int64_t pad = 0;
  int64_t out_pad = 0;  // transposed conv only

  int64_t out_h(int64_t h) const { return (h + 2 * pad - kh) / stride + 1; }
  int64_t out_w(int64_t w) const { return (w + 2 * pad - kw) / stride + 1; }
  int64_t tout_h(int64_t h) const { return (h - 1) * stride - 2 * pad + kh + out_pad; }
  int64_t tout_w(int64_t w) const { return (w - 1) * stride - 2 * pad + kw + out_pad; }
};

// conv2d: x [B,Cin,H,W], W [Cout,Cin,kh,kw], b [Cout] -> [B,Cout,H',W'].
// Zero padding. Implemented as im2col + GEMM.
Var conv2d(const Var& x, const Var& W, const Var& b, const ConvGeom& g);

// conv_transpose2d: x [B,Cin,H,W], W [Cin,Cout,kh,kw], b [Cout] -> [B,Cout,H',W'],
// the adjoint of conv2d with the same geometry.
Var conv_transpose2d(const Var& x, const Var& W, const Var& b, const ConvGeom& g);

// Exposed for tests: patch matrix [B*H'*W', Cin*kh*kw] of x under geometry g.
Tensor im2col(const Tensor& x, const ConvGeom& g);

}  // namespace lpvae
