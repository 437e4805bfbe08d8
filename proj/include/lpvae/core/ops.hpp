#pragma once

#include <cstdint>
#include <vector>

#include "lpvae/core/autodiff.hpp"

namespace lpvae {

// Differentiable tensor operations. Shapes are validated eagerly; a mismatch
// is a ContractError. Binary ops require identical shapes unless the name
// says otherwise (rowvec = broadcast a [n] vector across the rows of [m,n],
// colvec = broadcast a [m] vector across the columns, channel = broadcast a
// [C] vector across [B,C,H,W]).

// -- arithmetic ------------------------------------------------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var add_scalar(const Var& a, double c);
Var mul_scalar(const Var& a, double c);
Var neg(const Var& a);

Var add_rowvec(const Var& x, const Var& v);
Var mul_rowvec(const Var& x, const Var& v);
Var sub_colvec(const Var& x, const Var& v);
Var mul_colvec(const Var& x, const Var& v);
Var add_channel(const Var& x, const Var& v);
Var mul_channel(const Var& x, const Var& v);
Var sub_channel(const Var& x, const Var& v);

// -- elementwise nonlinearities ---------------------------------------------
Var relu(const Var& a);
Var leaky_relu(const Var& a, double negative_slope = 0.2);
Var sigmoid(const Var& a);
Var tanh_op(const Var& a);
Var exp_op(const Var& a);
Var log_op(const Var& a);
Var sqrt_op(const Var& a);
Var square(const Var& a);
Var reciprocal(const Var& a);
Var softplus(const Var& a);
Var clamp(const Var& a, double lo, double hi);

// -- reductions --------------------------------------------------------------
Var sum_all(const Var& a);
Var mean_all(const Var& a);
Var sum_rows(const Var& a);   // [m,n] -> [m]
Var sum_cols(const Var& a);   // [m,n] -> [n]
Var mean_cols(const Var& a);  // [m,n] -> [n]
Var sum_bhw(const Var& a);    // [B,C,H,W] -> [C]
Var mean_bhw(const Var& a);   // [B,C,H,W] -> [C]
Var logsumexp_rows(const Var& a);  // [m,n] -> [m]

// -- shape plumbing ----------------------------------------------------------
Var reshape(const Var& a, Shape shape);
Var concat_cols(const std::vector<Var>& xs);
Var slice_cols(const Var& a, int64_t lo, int64_t hi);
Var stack_cols(const std::vector<Var>& xs);  // k vectors [m] -> [m,k]
Var concat_channels(const std::vector<Var>& xs);
// [B,C,H,W] -> [B*H*W,C]; rows ordered (b, i, j).
Var channels_to_rows(const Var& a);

// -- linear algebra ----------------------------------------------------------
Var matmul(const Var& a, const Var& b);  // [m,k]x[k,n]
// y = x * W^T + b with x [m,in], W [out,in], b [out].
Var linear(const Var& x, const Var& W, const Var& b);

// -- indexed -----------------------------------------------------------------
// out[i] = a[i, idx[i]] for a [m,n], idx in [0,n).
Var gather_rows(const Var& a, const std::vector<int64_t>& idx);

// log softmax / softmax over the last dim of a [m,n] tensor.
Var log_softmax_rows(const Var& a);
Var softmax_rows(const Var& a);

}  // namespace lpvae
