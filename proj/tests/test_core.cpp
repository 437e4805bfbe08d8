#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "lpvae/core/adam.hpp"
#include "lpvae/core/conv.hpp"
#include "lpvae/core/nn.hpp"
#include "lpvae/core/ops.hpp"
#include "lpvae/core/serialize.hpp"
#include "support/gradcheck.hpp"

using namespace lpvae;

namespace {

Var randn_var(Shape shape, Rng& rng, double stddev = 1.0) {
  return make_var(Tensor::randn(std::move(shape), rng, stddev), true);
}

// Direct nested-loop convolution, the oracle for the im2col path.
Tensor conv2d_naive(const Tensor& x, const Tensor& w, const Tensor& b, const ConvGeom& g) {
  const int64_t B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t Cout = w.dim(0), OH = g.out_h(H), OW = g.out_w(W);
  Tensor out({B, Cout, OH, OW});
  for (int64_t bb = 0; bb < B; ++bb)
    for (int64_t co = 0; co < Cout; ++co)
      for (int64_t oy = 0; oy < OH; ++oy)
        for (int64_t ox = 0; ox < OW; ++ox) {
          double acc = b[co];
          for (int64_t ci = 0; ci < Cin; ++ci)
            for (int64_t ky = 0; ky < g.kh; ++ky)
              for (int64_t kx = 0; kx < g.kw; ++kx) {
                const int64_t iy = oy * g.stride - g.pad + ky;
                const int64_t ix = ox * g.stride - g.pad + kx;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                acc += w[((co * Cin + ci) * g.kh + ky) * g.kw + kx] *
                       x[((bb * Cin + ci) * H + iy) * W + ix];
              }
          out[((bb * Cout + co) * OH + oy) * OW + ox] = acc;
        }
  return out;
}

}  // namespace

TEST_CASE("elementwise and broadcast op gradients") {
  Rng rng(7);
  Var a = randn_var({3, 4}, rng);
  Var b = randn_var({3, 4}, rng);
  Var v = randn_var({4}, rng);
  Var c = randn_var({3}, rng);

  auto loss = [&] {
    Var t = add(mul(a, b), mul_scalar(square(a), 0.5));
    t = add_rowvec(t, v);
    t = mul_rowvec(t, v);
    t = sub_colvec(t, c);
    t = mul_colvec(t, c);
    t = sub(t, div(a, add_scalar(square(b), 1.0)));
    return sum_all(mul(sigmoid(t), tanh_op(t)));
  };
  auto rep = lpvae::testing::grad_check(loss, {a, b, v, c});
  CHECK_MESSAGE(rep.ok, rep.worst);
}

TEST_CASE("unary chain gradients") {
  Rng rng(11);
  Var a = randn_var({2, 5}, rng, 0.5);
  auto loss = [&] {
    Var t = softplus(a);
    t = add(log_op(add_scalar(square(t), 0.1)), exp_op(mul_scalar(a, 0.3)));
    t = add(t, sqrt_op(add_scalar(square(a), 1.0)));
    t = add(t, leaky_relu(a, 0.1));
    t = add(t, reciprocal(add_scalar(square(a), 2.0)));
    return mean_all(t);
  };
  auto rep = lpvae::testing::grad_check(loss, {a});
  CHECK_MESSAGE(rep.ok, rep.worst);
}

TEST_CASE("relu and clamp pass gradient only inside the active region") {
  Tensor t({4});
  t[0] = -1.0;
  t[1] = 0.5;
  t[2] = 3.0;
  t[3] = 9.0;
  Var a = make_var(t, true);
  Var out = sum_all(clamp(a, 0.0, 4.0));
  backward(out);
  CHECK(a->grad[0] == 0.0);
  CHECK(a->grad[1] == 1.0);
  CHECK(a->grad[2] == 1.0);
  CHECK(a->grad[3] == 0.0);
}

TEST_CASE("reductions, softmax, gather gradients") {
  Rng rng(13);
  Var a = randn_var({4, 6}, rng);
  std::vector<int64_t> idx = {0, 5, 2, 3};
  auto loss = [&] {
    Var lsm = log_softmax_rows(a);
    Var picked = gather_rows(lsm, idx);
    Var t = add(sum_rows(square(a)), picked);
    return add(mean_all(t), sum_all(mul(sum_cols(a), sum_cols(exp_op(mul_scalar(a, 0.1))))));
  };
  auto rep = lpvae::testing::grad_check(loss, {a});
  CHECK_MESSAGE(rep.ok, rep.worst);

  Var sm = softmax_rows(a);
  auto rows = sm->value.mat(4, 6).rowwise().sum();
  for (int i = 0; i < 4; ++i) CHECK(rows(i) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("matmul, linear, concat, slice, stack gradients") {
  Rng rng(17);
  Var x = randn_var({3, 4}, rng);
  Var W = randn_var({5, 4}, rng);
  Var b = randn_var({5}, rng);
  Var m2 = randn_var({5, 2}, rng);
  auto loss = [&] {
    Var y = linear(x, W, b);                       // [3,5]
    Var z = matmul(y, m2);                         // [3,2]
    Var cat = concat_cols({y, z});                 // [3,7]
    Var sl = slice_cols(cat, 2, 6);                // [3,4]
    Var st = stack_cols({sum_rows(sl), sum_rows(z)});  // [3,2]
    return sum_all(square(st));
  };
  auto rep = lpvae::testing::grad_check(loss, {x, W, b, m2});
  CHECK_MESSAGE(rep.ok, rep.worst);
}

TEST_CASE("channel ops and channels_to_rows") {
  Rng rng(19);
  Var x = randn_var({2, 3, 4, 4}, rng);
  Var s = randn_var({3}, rng);
  auto loss = [&] {
    Var t = mul_channel(add_channel(x, s), s);
    t = sub_channel(t, mean_bhw(square(x)));
    Var rows = channels_to_rows(t);  // [32, 3]
    return sum_all(square(rows));
  };
  auto rep = lpvae::testing::grad_check(loss, {x, s});
  CHECK_MESSAGE(rep.ok, rep.worst);

  // Row ordering is (b, i, j).
  Var rows = channels_to_rows(x);
  CHECK(rows->value[0 * 3 + 1] == x->value[(0 * 3 + 1) * 16 + 0]);
  CHECK(rows->value[(1 * 16 + 5) * 3 + 2] == doctest::Approx(x->value[((1 * 3 + 2) * 4 + 1) * 4 + 1]));
}

TEST_CASE("conv2d matches direct convolution") {
  Rng rng(23);
  for (auto [stride, pad, k] : {std::tuple<int, int, int>{1, 1, 3}, {2, 2, 5}, {1, 0, 1}}) {
    ConvGeom g{k, k, stride, pad, 0};
    Tensor x = Tensor::randn({2, 3, 7, 6}, rng);
    Tensor w = Tensor::randn({4, 3, k, k}, rng);
    Tensor b = Tensor::randn({4}, rng);
    Var out = conv2d(make_var(x), make_var(w), make_var(b), g);
    Tensor expect = conv2d_naive(x, w, b, g);
    REQUIRE(out->value.same_shape(expect));
    for (int64_t i = 0; i < expect.numel(); ++i)
      CHECK(out->value[i] == doctest::Approx(expect[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv2d gradients") {
  Rng rng(29);
  Var x = randn_var({2, 2, 5, 5}, rng);
  Var w = randn_var({3, 2, 3, 3}, rng, 0.5);
  Var b = randn_var({3}, rng);
  ConvGeom g{3, 3, 1, 1, 0};
  auto loss = [&] { return sum_all(square(conv2d(x, w, b, g))); };
  auto rep = lpvae::testing::grad_check(loss, {x, w, b}, 1e-5, 2e-4);
  CHECK_MESSAGE(rep.ok, rep.worst);
}

TEST_CASE("conv_transpose2d is the adjoint of conv2d and upsamples correctly") {
  Rng rng(31);
  ConvGeom g{5, 5, 2, 2, 1};
  // adjoint identity: <x, conv(y)> == <convT(x), y> with shared weights, zero
  // bias. The convT weight [Cin,Cout,kh,kw] reads directly as the adjoint
  // conv's [Cout',Cin',kh,kw].
  Tensor w = Tensor::randn({3, 4, 5, 5}, rng, 0.3);  // [Cin=3 -> Cout=4] for convT
  Tensor x = Tensor::randn({1, 3, 8, 8}, rng);
  Var tx = conv_transpose2d(make_var(x), make_var(w), make_var(Tensor({4})), g);
  CHECK(tx->value.dim(2) == 16);
  CHECK(tx->value.dim(3) == 16);
  Tensor y = Tensor::randn({1, 4, 16, 16}, rng);
  // conv with stride 2 pad 2 maps 16 -> 8
  Var cy = conv2d(make_var(y), make_var(w.reshaped({3, 4, 5, 5})), make_var(Tensor({3})),
                  ConvGeom{5, 5, 2, 2, 0});
  REQUIRE(cy->value.same_shape(x));
  const double lhs = (cy->value.array() * x.array()).sum();
  const double rhs = (tx->value.array() * y.array()).sum();
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
}

TEST_CASE("conv_transpose2d gradients") {
  Rng rng(37);
  Var x = randn_var({2, 3, 4, 4}, rng);
  Var w = randn_var({3, 2, 3, 3}, rng, 0.5);
  Var b = randn_var({2}, rng);
  ConvGeom g{3, 3, 2, 1, 1};
  auto loss = [&] { return sum_all(square(conv_transpose2d(x, w, b, g))); };
  auto rep = lpvae::testing::grad_check(loss, {x, w, b}, 1e-5, 2e-4);
  CHECK_MESSAGE(rep.ok, rep.worst);
}

TEST_CASE("batchnorm gradients and running statistics") {
  Rng rng(41);
  nn::BatchNorm1d bn1(4);
  Var x = randn_var({6, 4}, rng);
  auto loss1 = [&] { return sum_all(square(bn1.forward(x, true))); };
  auto rep1 = lpvae::testing::grad_check(loss1, {x, bn1.gamma, bn1.beta}, 1e-5, 2e-4);
  CHECK_MESSAGE(rep1.ok, rep1.worst);

  nn::BatchNorm2d bn2(3);
  Var xi = randn_var({2, 3, 3, 3}, rng);
  auto loss2 = [&] { return sum_all(square(bn2.forward(xi, true))); };
  auto rep2 = lpvae::testing::grad_check(loss2, {xi, bn2.gamma, bn2.beta}, 1e-5, 2e-4);
  CHECK_MESSAGE(rep2.ok, rep2.worst);

  // Eval mode normalizes with running stats: repeated training passes on a
  // fixed batch converge them to the batch statistics.
  nn::BatchNorm1d bn(2);
  Tensor data({8, 2});
  Rng r2(5);
  for (int64_t i = 0; i < data.numel(); ++i) data[i] = 3.0 + 2.0 * r2.normal();
  Var xd = make_var(data);
  for (int it = 0; it < 200; ++it) (void)bn.forward(xd, true);
  Var eval_out = bn.forward(xd, false);
  CHECK(std::abs(eval_out->value.mat(8, 2).col(0).mean()) < 1e-2);
}

TEST_CASE("dropout keeps expectation and disables at eval") {
  Rng rng(43);
  Var x = make_var(Tensor::full({10000}, 1.0));
  Var y = nn::dropout(x, 0.3, true, rng);
  CHECK(y->value.array().mean() == doctest::Approx(1.0).epsilon(0.05));
  Var z = nn::dropout(x, 0.3, false, rng);
  CHECK(z->value.array().mean() == 1.0);
}

TEST_CASE("adam converges on a quadratic") {
  Var p = make_var(Tensor::full({3}, 5.0), true);
  Adam opt({{"p", p}}, 0.1);
  for (int it = 0; it < 500; ++it) {
    opt.zero_grad();
    Var loss = sum_all(square(add_scalar(p, -2.0)));
    backward(loss);
    opt.step();
  }
  for (int i = 0; i < 3; ++i) CHECK(p->value[i] == doctest::Approx(2.0).epsilon(1e-3));
}

TEST_CASE("blob round trip and adam state restore") {
  Rng rng(47);
  auto tmp = std::filesystem::temp_directory_path() / "lpvae_blob_test.bin";
  Var a = randn_var({3, 2}, rng);
  Var b = randn_var({5}, rng);
  nn::ParamList ps = {{"layer.weight", a}, {"layer.bias", b}};
  save_params(tmp.string(), ps);

  Var a2 = make_var(Tensor({3, 2}), true);
  Var b2 = make_var(Tensor({5}), true);
  nn::ParamList ps2 = {{"layer.weight", a2}, {"layer.bias", b2}};
  load_params(tmp.string(), ps2);
  CHECK((a2->value.array() - a->value.array()).abs().maxCoeff() == 0.0);
  CHECK((b2->value.array() - b->value.array()).abs().maxCoeff() == 0.0);

  Adam opt(ps, 1e-3);
  opt.zero_grad();
  backward(sum_all(square(a)));
  opt.step();
  Adam opt2(ps2, 1e-3);
  opt2.load_state(opt.state());
  CHECK(opt2.steps_taken() == 1);
  std::filesystem::remove(tmp);
}

TEST_CASE("no-grad mode records no graph") {
  Rng rng(53);
  Var a = randn_var({4}, rng);
  {
    NoGradGuard guard;
    Var y = square(a);
    CHECK_FALSE(y->requires_grad);
    CHECK(y->parents.empty());
  }
  Var y = square(a);
  CHECK(y->requires_grad);
}

TEST_CASE("rng is deterministic and portable") {
  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng c(123);
  double mean = 0.0;
  for (int i = 0; i < 20000; ++i) mean += c.normal();
  mean /= 20000;
  CHECK(std::abs(mean) < 0.05);
}
