#include "lpvae/core/conv.hpp"

namespace lpvae {

namespace {

void check_image(const Var& x, const char* op) {
  if (x->value.ndim() != 4) throw ContractError(std::string(op) + ": expected [B,C,H,W] input");
}

// Scatter-add adjoint of im2col: cols rows are ordered (b, oy, ox), columns
// (c, ky, kx); target image is [B,C,H,W].
void col2im_add(const Tensor& cols, const ConvGeom& g, int64_t B, int64_t C, int64_t H, int64_t W,
                Tensor& img) {
  const int64_t OH = g.out_h(H), OW = g.out_w(W);
  const int64_t K = C * g.kh * g.kw;
  const double* src = cols.data();
  double* dst = img.data();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t oy = 0; oy < OH; ++oy)
      for (int64_t ox = 0; ox < OW; ++ox) {
        const double* row = src + ((b * OH + oy) * OW + ox) * K;
        for (int64_t c = 0; c < C; ++c) {
          double* plane = dst + (b * C + c) * H * W;
          for (int64_t ky = 0; ky < g.kh; ++ky) {
            const int64_t iy = oy * g.stride - g.pad + ky;
            if (iy < 0 || iy >= H) continue;
            for (int64_t kx = 0; kx < g.kw; ++kx) {
              const int64_t ix = ox * g.stride - g.pad + kx;
              if (ix < 0 || ix >= W) continue;
              plane[iy * W + ix] += row[(c * g.kh + ky) * g.kw + kx];
            }
          }
        }
      }
}

// Per-image-block transpose [C,HW] -> rows [HW,C].
Tensor to_rows(const Tensor& x, int64_t B, int64_t C, int64_t HW) {
  Tensor rows({B * HW, C});
  for (int64_t b = 0; b < B; ++b)
    rows.mat(B * HW, C).middleRows(b * HW, HW) = ConstMatMap(x.data() + b * C * HW, C, HW).transpose();
  return rows;
}

Tensor from_rows(const Tensor& rows, int64_t B, int64_t C, int64_t HW) {
  Tensor x({B, C, HW, 1});  // caller reshapes
  for (int64_t b = 0; b < B; ++b)
    MatMap(x.data() + b * C * HW, C, HW) = rows.mat(B * HW, C).middleRows(b * HW, HW).transpose();
  return x;
}

}  // namespace

Tensor im2col(const Tensor& x, const ConvGeom& g) {
  const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t OH = g.out_h(H), OW = g.out_w(W);
  const int64_t K = C * g.kh * g.kw;
  Tensor cols({B * OH * OW, K});
  const double* src = x.data();
  double* dst = cols.data();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t oy = 0; oy < OH; ++oy)
      for (int64_t ox = 0; ox < OW; ++ox) {
        double* row = dst + ((b * OH + oy) * OW + ox) * K;
        for (int64_t c = 0; c < C; ++c) {
          const double* plane = src + (b * C + c) * H * W;
          for (int64_t ky = 0; ky < g.kh; ++ky) {
            const int64_t iy = oy * g.stride - g.pad + ky;
            for (int64_t kx = 0; kx < g.kw; ++kx) {
              const int64_t ix = ox * g.stride - g.pad + kx;
              row[(c * g.kh + ky) * g.kw + kx] =
                  (iy >= 0 && iy < H && ix >= 0 && ix < W) ? plane[iy * W + ix] : 0.0;
            }
          }
        }
      }
  return cols;
}

Var conv2d(const Var& x, const Var& W, const Var& b, const ConvGeom& g) {
  check_image(x, "conv2d");
  if (W->value.ndim() != 4) throw ContractError("conv2d: weight must be [Cout,Cin,kh,kw]");
  const int64_t B = x->value.dim(0), Cin = x->value.dim(1), H = x->value.dim(2), Wd = x->value.dim(3);
  const int64_t Cout = W->value.dim(0);
  if (W->value.dim(1) != Cin || W->value.dim(2) != g.kh || W->value.dim(3) != g.kw)
    throw ContractError("conv2d: weight shape mismatch");
  if (b->value.numel() != Cout) throw ContractError("conv2d: bias length mismatch");
  const int64_t OH = g.out_h(H), OW = g.out_w(Wd);
  if (OH <= 0 || OW <= 0) throw ContractError("conv2d: empty output");
  const int64_t K = Cin * g.kh * g.kw;

  Tensor cols = im2col(x->value, g);
  Tensor rows({B * OH * OW, Cout});
  rows.mat(B * OH * OW, Cout).noalias() = cols.mat(B * OH * OW, K) * W->value.mat(Cout, K).transpose();
  rows.mat(B * OH * OW, Cout).rowwise() += b->value.array().matrix().transpose();
  Tensor out = from_rows(rows, B, Cout, OH * OW).reshaped({B, Cout, OH, OW});

  // im2col is recomputed in the pullback; patch matrices can dwarf the
  // activations, so they are not kept alive in the graph.
  return attach(std::move(out), {x, W, b},
                [x, W, b, g, B, Cin, H, Wd, Cout, OH, OW, K](Node& self) {
                  Tensor g_rows = to_rows(self.grad, B, Cout, OH * OW);
                  auto G = g_rows.mat(B * OH * OW, Cout);
                  if (b->requires_grad) b->accum_grad(G.colwise().sum().array().transpose());
                  if (W->requires_grad) {
                    Tensor cols = im2col(x->value, g);
                    if (W->grad.empty()) W->grad = Tensor(W->value.shape());
                    W->grad.mat(Cout, K).noalias() += G.transpose() * cols.mat(B * OH * OW, K);
                  }
                  if (x->requires_grad) {
                    Tensor dcols({B * OH * OW, K});
                    dcols.mat(B * OH * OW, K).noalias() = G * W->value.mat(Cout, K);
                    if (x->grad.empty()) x->grad = Tensor(x->value.shape());
                    col2im_add(dcols, g, B, Cin, H, Wd, x->grad);
                  }
                });
}

Var conv_transpose2d(const Var& x, const Var& W, const Var& b, const ConvGeom& g) {
  check_image(x, "conv_transpose2d");
  if (W->value.ndim() != 4) throw ContractError("conv_transpose2d: weight must be [Cin,Cout,kh,kw]");
  if (g.out_pad >= g.stride) throw ContractError("conv_transpose2d: out_pad must be < stride");
  const int64_t B = x->value.dim(0), Cin = x->value.dim(1), H = x->value.dim(2), Wd = x->value.dim(3);
  const int64_t Cout = W->value.dim(1);
  if (W->value.dim(0) != Cin || W->value.dim(2) != g.kh || W->value.dim(3) != g.kw)
    throw ContractError("conv_transpose2d: weight shape mismatch");
  if (b->value.numel() != Cout) throw ContractError("conv_transpose2d: bias length mismatch");
  const int64_t TH = g.tout_h(H), TW = g.tout_w(Wd);
  if (TH <= 0 || TW <= 0) throw ContractError("conv_transpose2d: empty output");
  const int64_t K = Cout * g.kh * g.kw;

  Tensor x_rows = to_rows(x->value, B, Cin, H * Wd);
  Tensor cols({B * H * Wd, K});
  cols.mat(B * H * Wd, K).noalias() = x_rows.mat(B * H * Wd, Cin) * W->value.mat(Cin, K);
  Tensor out({B, Cout, TH, TW});
  col2im_add(cols, g, B, Cout, TH, TW, out);
  for (int64_t bb = 0; bb < B; ++bb)
    for (int64_t c = 0; c < Cout; ++c)
      Eigen::Map<ArrayXd>(out.data() + (bb * Cout + c) * TH * TW, TH * TW) += b->value[c];

  return attach(std::move(out), {x, W, b},
                [x, W, b, g, B, Cin, H, Wd, Cout, TH, TW, K](Node& self) {
                  if (b->requires_grad) {
                    ArrayXd db = ArrayXd::Zero(Cout);
                    for (int64_t bb = 0; bb < B; ++bb)
                      for (int64_t c = 0; c < Cout; ++c)
                        db[c] += Eigen::Map<const ArrayXd>(
                                     self.grad.data() + (bb * Cout + c) * TH * TW, TH * TW)
                                     .sum();
                    b->accum_grad(db);
                  }
                  Tensor dcols = im2col(self.grad, g);  // [B*H*Wd, K]
                  auto D = dcols.mat(B * H * Wd, K);
                  if (W->requires_grad) {
                    Tensor x_rows = to_rows(x->value, B, Cin, H * Wd);
                    if (W->grad.empty()) W->grad = Tensor(W->value.shape());
                    W->grad.mat(Cin, K).noalias() +=
                        x_rows.mat(B * H * Wd, Cin).transpose() * D;
                  }
                  if (x->requires_grad) {
                    Tensor dx_rows({B * H * Wd, Cin});
                    dx_rows.mat(B * H * Wd, Cin).noalias() = D * W->value.mat(Cin, K).transpose();
                    Tensor dx = from_rows(dx_rows, B, Cin, H * Wd);
                    x->accum_grad(dx.array());
                  }
                });
}

}  // namespace lpvae
