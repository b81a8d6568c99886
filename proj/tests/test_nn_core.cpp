#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "timecast/errors.hpp"
#include "timecast/gradcheck.hpp"
#include "timecast/nn.hpp"
#include "timecast/ops.hpp"
#include "timecast/optim.hpp"
#include "timecast/tape.hpp"

using namespace timecast;
using namespace timecast::ops;

namespace {

// direct quadruple-loop convolution, the independent reference for conv2d
Tensor naive_conv2d(const Tensor& x, const Tensor& w, const Tensor& b,
                    int stride, int pad) {
  const auto N = x.extent(0), C = x.extent(1), H = x.extent(2), W = x.extent(3);
  const auto F = w.extent(0), KH = w.extent(2), KW = w.extent(3);
  const auto OH = (H + 2 * pad - KH) / stride + 1;
  const auto OW = (W + 2 * pad - KW) / stride + 1;
  Tensor y = Tensor::zeros({N, F, OH, OW});
  for (std::int64_t n = 0; n < N; ++n) {
    for (std::int64_t f = 0; f < F; ++f) {
      for (std::int64_t oi = 0; oi < OH; ++oi) {
        for (std::int64_t oj = 0; oj < OW; ++oj) {
          double acc = b.at(f);
          for (std::int64_t c = 0; c < C; ++c) {
            for (std::int64_t ki = 0; ki < KH; ++ki) {
              for (std::int64_t kj = 0; kj < KW; ++kj) {
                const std::int64_t ii = oi * stride + ki - pad;
                const std::int64_t jj = oj * stride + kj - pad;
                if (ii < 0 || ii >= H || jj < 0 || jj >= W) continue;
                acc += static_cast<double>(x.at4(n, c, ii, jj)) *
                       w.at4(f, c, ki, kj);
              }
            }
          }
          y.at4(n, f, oi, oj) = static_cast<float>(acc);
        }
      }
    }
  }
  return y;
}

nn::Parameter make_param(const std::string& name, Shape shape, RandomSource& rng) {
  return nn::Parameter(name, Tensor::randn(std::move(shape), rng));
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  float m = 0.f;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    m = std::max(m, std::fabs(a.at(i) - b.at(i)));
  }
  return m;
}

}  // namespace

TEST_CASE("conv2d identity kernel is exact identity") {
  RandomSource rng(1);
  Tensor x = Tensor::randn({1, 1, 3, 3}, rng);
  Tensor w = Tensor::from_data({1, 1, 1, 1}, {1.f});
  Tensor b = Tensor::zeros({1});
  Tensor y = conv2d(x, w, b, 1, 0);
  CHECK(max_abs_diff(x, y) == 0.f);
}

TEST_CASE("conv2d shape arithmetic") {
  RandomSource rng(2);
  Tensor x = Tensor::randn({2, 4, 16, 16}, rng);
  Tensor w = Tensor::randn({8, 4, 3, 3}, rng);
  Tensor b = Tensor::zeros({8});
  Tensor y = conv2d(x, w, b, 1, 1);
  CHECK(y.shape() == Shape{2, 8, 16, 16});
}

TEST_CASE("conv2d matches quadruple-loop oracle") {
  RandomSource rng(3);
  Tensor x = Tensor::randn({1, 2, 4, 4}, rng);
  Tensor w = Tensor::randn({3, 2, 3, 3}, rng);
  Tensor b = Tensor::randn({3}, rng);
  Tensor y = conv2d(x, w, b, 1, 1);
  Tensor ref = naive_conv2d(x, w, b, 1, 1);
  CHECK(max_abs_diff(y, ref) < 1e-5f);

  // strided case on odd extents (exact division)
  Tensor xs = Tensor::randn({2, 3, 9, 9}, rng);
  Tensor ws = Tensor::randn({4, 3, 3, 3}, rng);
  Tensor bs = Tensor::randn({4}, rng);
  Tensor ys = conv2d(xs, ws, bs, 2, 0);
  CHECK(ys.shape() == Shape{2, 4, 4, 4});
  CHECK(max_abs_diff(ys, naive_conv2d(xs, ws, bs, 2, 0)) < 1e-5f);
}

TEST_CASE("conv2d errors name the offending dimension") {
  RandomSource rng(4);
  Tensor x = Tensor::randn({1, 3, 8, 8}, rng);
  Tensor w = Tensor::randn({2, 4, 3, 3}, rng);
  Tensor b = Tensor::zeros({2});
  CHECK_THROWS_WITH_AS(conv2d(x, w, b, 1, 1),
                       doctest::Contains("channel extent"), Error);

  Tensor w_even = Tensor::randn({2, 3, 2, 2}, rng);
  CHECK_THROWS_WITH_AS(conv2d(x, w_even, Tensor::zeros({2}), 1, 0),
                       doctest::Contains("odd"), Error);

  // 8 + 0 - 3 = 5, not divisible by stride 2
  Tensor w3 = Tensor::randn({2, 3, 3, 3}, rng);
  CHECK_THROWS_WITH_AS(conv2d(x, w3, Tensor::zeros({2}), 2, 0),
                       doctest::Contains("not exact"), Error);
}

TEST_CASE("cross_attention single token reduces to residual broadcast") {
  RandomSource rng(5);
  const std::int64_t C = 3, H = 2, W = 2, D = 5, Dk = 4;
  Tensor q_map = Tensor::randn({1, C, H, W}, rng);
  Tensor tokens = Tensor::randn({1, 1, D}, rng);
  Tensor wq = Tensor::randn({Dk, C}, rng);
  Tensor wk = Tensor::randn({Dk, D}, rng);
  Tensor wv = Tensor::randn({C, D}, rng);

  Tensor y = cross_attention(q_map, tokens, wq, wk, wv);

  // value projection of the lone token, added everywhere
  for (std::int64_t c = 0; c < C; ++c) {
    double v = 0.0;
    for (std::int64_t d = 0; d < D; ++d) {
      v += static_cast<double>(wv.at(c * D + d)) * tokens.at(d);
    }
    for (std::int64_t p = 0; p < H * W; ++p) {
      const float expect = q_map.at(c * H * W + p) + static_cast<float>(v);
      CHECK(y.at(c * H * W + p) == doctest::Approx(expect).epsilon(1e-5));
    }
  }

  // two identical tokens = same result (softmax symmetry)
  Tensor tokens2 = Tensor::zeros({1, 2, D});
  for (std::int64_t d = 0; d < D; ++d) {
    tokens2.at(d) = tokens.at(d);
    tokens2.at(D + d) = tokens.at(d);
  }
  Tensor y2 = cross_attention(q_map, tokens2, wq, wk, wv);
  CHECK(max_abs_diff(y, y2) < 1e-5f);
}

TEST_CASE("cross_attention matches per-pixel softmax oracle") {
  RandomSource rng(6);
  const std::int64_t C = 4, H = 2, W = 2, S = 3, D = 4, Dk = 4;
  Tensor q_map = Tensor::randn({1, C, H, W}, rng);
  Tensor tokens = Tensor::randn({1, S, D}, rng);
  Tensor wq = Tensor::randn({Dk, C}, rng);
  Tensor wk = Tensor::randn({Dk, D}, rng);
  Tensor wv = Tensor::randn({C, D}, rng);
  Tensor y = cross_attention(q_map, tokens, wq, wk, wv);

  for (std::int64_t p = 0; p < H * W; ++p) {
    // q = wq * pixel
    std::vector<double> q(Dk, 0.0), scores(S, 0.0);
    for (std::int64_t i = 0; i < Dk; ++i) {
      for (std::int64_t c = 0; c < C; ++c) {
        q[i] += static_cast<double>(wq.at(i * C + c)) * q_map.at(c * H * W + p);
      }
    }
    for (std::int64_t s = 0; s < S; ++s) {
      std::vector<double> kvec(Dk, 0.0);
      for (std::int64_t i = 0; i < Dk; ++i) {
        for (std::int64_t d = 0; d < D; ++d) {
          kvec[i] += static_cast<double>(wk.at(i * D + d)) * tokens.at(s * D + d);
        }
        scores[s] += q[i] * kvec[i];
      }
      scores[s] /= std::sqrt(static_cast<double>(Dk));
    }
    double mx = *std::max_element(scores.begin(), scores.end());
    double denom = 0.0;
    for (double& s : scores) {
      s = std::exp(s - mx);
      denom += s;
    }
    for (std::int64_t c = 0; c < C; ++c) {
      double out = 0.0;
      for (std::int64_t s = 0; s < S; ++s) {
        double v = 0.0;
        for (std::int64_t d = 0; d < D; ++d) {
          v += static_cast<double>(wv.at(c * D + d)) * tokens.at(s * D + d);
        }
        out += scores[s] / denom * v;
      }
      const float expect = q_map.at(c * H * W + p) + static_cast<float>(out);
      CHECK(y.at(c * H * W + p) == doctest::Approx(expect).epsilon(1e-5));
    }
  }
}

TEST_CASE("cross_attention rejects empty token set") {
  RandomSource rng(7);
  Tensor q_map = Tensor::randn({1, 4, 2, 2}, rng);
  Tensor tokens = Tensor::zeros({1, 0, 4});
  Tensor wq = Tensor::randn({4, 4}, rng);
  Tensor wk = Tensor::randn({4, 4}, rng);
  Tensor wv = Tensor::randn({4, 4}, rng);
  CHECK_THROWS_AS(cross_attention(q_map, tokens, wq, wk, wv), Error);
}

TEST_CASE("backward: quadratic gradient") {
  nn::Parameter w("w", Tensor::from_data({3}, {1.f, 2.f, 3.f}));
  Tape tape;
  {
    TapeScope scope(tape);
    Tensor loss = sum_all(mul(w.tensor, w.tensor));
    tape.backward(loss);
  }
  CHECK(w.tensor.grad()[0] == doctest::Approx(2.f));
  CHECK(w.tensor.grad()[1] == doctest::Approx(4.f));
  CHECK(w.tensor.grad()[2] == doctest::Approx(6.f));
}

TEST_CASE("backward: unreachable parameter keeps zero grad") {
  RandomSource rng(8);
  nn::Parameter used("used", Tensor::randn({4}, rng));
  nn::Parameter unused("unused", Tensor::randn({4}, rng));
  Tape tape;
  {
    TapeScope scope(tape);
    tape.backward(sum_all(mul(used.tensor, used.tensor)));
  }
  for (float g : unused.tensor.grad()) CHECK(g == 0.f);
}

TEST_CASE("backward errors: non-scalar loss, consumed tape, empty tape") {
  RandomSource rng(9);
  nn::Parameter w("w", Tensor::randn({3}, rng));
  Tape tape;
  Tensor vec;
  {
    TapeScope scope(tape);
    vec = mul(w.tensor, w.tensor);
  }
  CHECK_THROWS_AS(tape.backward(vec), Error);  // non-scalar

  Tape tape2;
  {
    TapeScope scope(tape2);
    Tensor loss = sum_all(mul(w.tensor, w.tensor));
    tape2.backward(loss);
    CHECK_THROWS_AS(tape2.backward(loss), Error);  // consumed
  }

  Tape empty;
  CHECK_THROWS_AS(empty.backward(Tensor::scalar(0.f)), Error);
}

TEST_CASE("backward is linear in the loss") {
  RandomSource rng(10);
  nn::Parameter w("w", Tensor::randn({6}, rng));
  Tensor c1 = Tensor::randn({6}, rng);
  Tensor c2 = Tensor::randn({6}, rng);
  const float a = 1.7f, b = -0.4f;

  auto grad_of = [&](const std::function<Tensor()>& loss_fn) {
    w.tensor.zero_grad();
    Tape tape;
    TapeScope scope(tape);
    tape.backward(loss_fn());
    std::vector<float> g(w.tensor.grad().begin(), w.tensor.grad().end());
    return g;
  };

  auto l1 = [&] { return sum_all(mul(w.tensor, c1)); };
  auto l2 = [&] { return sum_all(mul(mul(w.tensor, w.tensor), c2)); };
  auto combined = [&] {
    return add(mul_scalar(l1(), a), mul_scalar(l2(), b));
  };

  const auto g1 = grad_of(l1);
  const auto g2 = grad_of(l2);
  const auto gc = grad_of(combined);
  for (std::size_t i = 0; i < gc.size(); ++i) {
    CHECK(gc[i] == doctest::Approx(a * g1[i] + b * g2[i]).epsilon(1e-4));
  }
}

TEST_CASE("forward passes are deterministic") {
  RandomSource rng(11);
  Tensor x = Tensor::randn({2, 4, 8, 8}, rng);
  Tensor w = Tensor::randn({4, 4, 3, 3}, rng);
  Tensor b = Tensor::randn({4}, rng);
  Tensor y1 = conv2d(x, w, b, 1, 1);
  Tensor y2 = conv2d(x, w, b, 1, 1);
  CHECK(max_abs_diff(y1, y2) == 0.f);
}

TEST_CASE("non-finite values are a hard error") {
  Tensor x = Tensor::from_data({2}, {1.f, std::numeric_limits<float>::infinity()});
  Tensor y = Tensor::from_data({2}, {1.f, 1.f});
  CHECK_THROWS_AS(add(x, y), Error);
}

TEST_CASE("adamw: zero gradient and zero weight decay is a no-op") {
  nn::Parameter p("p", Tensor::from_data({2}, {0.5f, -1.5f}));
  nn::AdamWConfig cfg;
  cfg.weight_decay = 0.f;
  nn::ParamRefs params{&p};
  nn::AdamW opt(cfg, params);
  p.tensor.zero_grad();
  opt.step(params);
  CHECK(p.tensor.at(0) == 0.5f);
  CHECK(p.tensor.at(1) == -1.5f);
}

TEST_CASE("adamw defaults match the training recipe") {
  nn::AdamWConfig cfg;
  CHECK(cfg.beta1 == 0.95f);
  CHECK(cfg.beta2 == 0.999f);
  CHECK(cfg.eps == 1e-8f);
  CHECK(cfg.weight_decay == 1e-6f);
  CHECK(cfg.lr == 1e-4f);
}

TEST_CASE("adamw: first step from fresh state moves by lr") {
  // bias-corrected m/sqrt(v) = 1 at step 1 for unit gradient
  nn::Parameter p("p", Tensor::from_data({1}, {1.f}));
  nn::AdamWConfig cfg;
  cfg.weight_decay = 0.f;
  cfg.lr = 1e-4f;
  nn::ParamRefs params{&p};
  nn::AdamW opt(cfg, params);
  p.tensor.grad()[0] = 1.f;
  opt.step(params);
  CHECK(p.tensor.at(0) == doctest::Approx(1.f - 1e-4f).epsilon(1e-6));
}

TEST_CASE("adamw honors lr_multiplier") {
  nn::Parameter p("p", Tensor::from_data({1}, {1.f}), 10.f);
  nn::AdamWConfig cfg;
  cfg.weight_decay = 0.f;
  nn::ParamRefs params{&p};
  nn::AdamW opt(cfg, params);
  p.tensor.grad()[0] = 1.f;
  opt.step(params);
  CHECK(p.tensor.at(0) == doctest::Approx(1.f - 10.f * 1e-4f).epsilon(1e-6));
}

TEST_CASE("gradcheck: linear layer passes at 1e-3") {
  RandomSource rng(12);
  nn::LinearLayer layer("lin", 5, 4, rng);
  Tensor x = Tensor::randn({3, 5}, rng);
  Tensor probe = Tensor::randn({3, 4}, rng);
  nn::ParamRefs params;
  layer.collect(params);
  auto loss_fn = [&] { return sum_all(mul(layer.forward(x), probe)); };
  nn::GradCheckOptions opts;
  opts.tolerance = 1e-3f;
  auto report = nn::gradcheck(loss_fn, params, opts, rng);
  CHECK(report.pass);
}

TEST_CASE("gradcheck: conv + silu chain passes at 1e-2") {
  RandomSource rng(13);
  nn::Conv2dLayer conv("conv", 2, 3, 3, 1, 1, rng);
  Tensor x = Tensor::randn({2, 2, 5, 5}, rng);
  Tensor probe = Tensor::randn({2, 3, 5, 5}, rng);
  nn::ParamRefs params;
  conv.collect(params);
  auto loss_fn = [&] { return sum_all(mul(silu(conv.forward(x)), probe)); };
  nn::GradCheckOptions opts;
  opts.tolerance = 1e-2f;
  auto report = nn::gradcheck(loss_fn, params, opts, rng);
  CHECK(report.pass);
}

TEST_CASE("gradcheck: corrupted backward rule fails (negative control)") {
  RandomSource rng(14);
  nn::Parameter w("w", Tensor::randn({4}, rng));
  Tensor c = Tensor::randn({4}, rng);

  // op computes w^2 . c but its recorded backward pretends d/dw = c (wrong)
  auto bad_square_dot = [&]() {
    Tensor out = Tensor::scalar(0.f);
    double acc = 0.0;
    for (int i = 0; i < 4; ++i) {
      acc += static_cast<double>(w.tensor.at(i)) * w.tensor.at(i) * c.at(i);
    }
    out.data()[0] = static_cast<float>(acc);
    if (active_tape()) {
      out.enable_grad();
      Tensor wt = w.tensor;
      Tensor ct = c;
      Tensor o = out;
      active_tape()->record([wt, ct, o]() {
        Tensor wg = wt;
        for (int i = 0; i < 4; ++i) wg.grad()[i] += o.grad()[0] * ct.at(i);
      });
    }
    return out;
  };

  nn::ParamRefs params{&w};
  nn::GradCheckOptions opts;
  opts.tolerance = 1e-2f;
  auto report = nn::gradcheck(bad_square_dot, params, opts, rng);
  CHECK_FALSE(report.pass);
}

TEST_CASE("gradcheck: every op on randomized small shapes, 20 seeds") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    RandomSource rng(mix_seed(0xabcdef, seed));
    const std::int64_t n = rng.uniform_int(2, 4);
    const std::int64_t c = 4;
    const std::int64_t h = 2 * rng.uniform_int(1, 2), w2 = h;

    nn::GradCheckOptions opts;
    opts.tolerance = 1e-2f;

    auto check = [&](const char* what, const std::function<Tensor()>& fn,
                     nn::ParamRefs params) {
      auto report = nn::gradcheck(fn, params, opts, rng);
      INFO(what, " seed=", seed, " max_dev=", report.max_rel_dev);
      CHECK(report.pass);
    };

    {
      nn::Parameter a("a", Tensor::randn({n, c}, rng));
      nn::Parameter b("b", Tensor::randn({n, c}, rng));
      Tensor probe = Tensor::randn({n, c}, rng);
      check("add/mul/sub/scalar", [&] {
        Tensor t = add(mul(a.tensor, b.tensor), mul_scalar(sub(a.tensor, b.tensor), 0.7f));
        return sum_all(mul(add_scalar(t, 0.1f), probe));
      }, {&a, &b});
    }
    {
      nn::Parameter x("x", Tensor::randn({n, 5}, rng));
      nn::Parameter w("w", Tensor::randn({3, 5}, rng));
      nn::Parameter b("b", Tensor::randn({3}, rng));
      Tensor probe = Tensor::randn({n, 3}, rng);
      check("linear", [&] {
        return sum_all(mul(linear(x.tensor, w.tensor, b.tensor), probe));
      }, {&x, &w, &b});
    }
    {
      nn::Parameter a("a", Tensor::randn({2, 3, 4}, rng));
      nn::Parameter b("b", Tensor::randn({2, 4, 2}, rng));
      Tensor probe = Tensor::randn({2, 3, 2}, rng);
      check("bmm+transpose", [&] {
        return sum_all(mul(bmm(a.tensor, transpose_last2(transpose_last2(b.tensor))), probe));
      }, {&a, &b});
    }
    {
      nn::Parameter x("x", Tensor::randn({n, 2, 5, 5}, rng));
      nn::Parameter w("w", Tensor::randn({3, 2, 3, 3}, rng));
      nn::Parameter b("b", Tensor::randn({3}, rng));
      Tensor probe = Tensor::randn({n, 3, 5, 5}, rng);
      check("conv2d", [&] {
        return sum_all(mul(conv2d(x.tensor, w.tensor, b.tensor, 1, 1), probe));
      }, {&x, &w, &b});
    }
    {
      nn::Parameter x("x", Tensor::randn({1, 3, 9, 9}, rng));
      nn::Parameter w("w", Tensor::randn({2, 3, 3, 3}, rng));
      nn::Parameter b("b", Tensor::randn({2}, rng));
      Tensor probe = Tensor::randn({1, 2, 4, 4}, rng);
      check("conv2d strided", [&] {
        return sum_all(mul(conv2d(x.tensor, w.tensor, b.tensor, 2, 0), probe));
      }, {&x, &w, &b});
    }
    {
      nn::Parameter x("x", Tensor::randn({n, c, h, w2}, rng));
      Tensor probe = Tensor::randn({n, c, h, w2}, rng);
      check("silu", [&] { return sum_all(mul(silu(x.tensor), probe)); }, {&x});
    }
    {
      nn::Parameter x("x", Tensor::randn({n, c, h, w2}, rng));
      nn::Parameter g("g", Tensor::randn({c}, rng));
      nn::Parameter be("be", Tensor::randn({c}, rng));
      Tensor probe = Tensor::randn({n, c, h, w2}, rng);
      check("group_norm", [&] {
        return sum_all(mul(group_norm(x.tensor, g.tensor, be.tensor, 2), probe));
      }, {&x, &g, &be});
    }
    {
      nn::Parameter x("x", Tensor::randn({n, 5}, rng));
      Tensor probe = Tensor::randn({n, 5}, rng);
      check("softmax", [&] {
        return sum_all(mul(softmax_lastdim(x.tensor), probe));
      }, {&x});
    }
    {
      nn::Parameter a("a", Tensor::randn({n, 6}, rng));
      nn::Parameter b("b", Tensor::randn({n, 6}, rng));
      check("mse+mean", [&] {
        return add(mse_loss(a.tensor, b.tensor), mean_all(a.tensor));
      }, {&a, &b});
    }
    {
      nn::Parameter a("a", Tensor::randn({n, 2, h, w2}, rng));
      nn::Parameter b("b", Tensor::randn({n, 3, h, w2}, rng));
      Tensor probe = Tensor::randn({n, 5, h, w2}, rng);
      check("concat_channels", [&] {
        return sum_all(mul(concat_channels(a.tensor, b.tensor), probe));
      }, {&a, &b});
    }
    {
      nn::Parameter a("a", Tensor::randn({2, 4}, rng));
      nn::Parameter b("b", Tensor::randn({3, 4}, rng));
      Tensor probe = Tensor::randn({5, 4}, rng);
      check("concat0+slice0", [&] {
        Tensor cat = concat0({a.tensor, b.tensor});
        return add(sum_all(mul(cat, probe)), sum_all(slice0(cat, 1, 2)));
      }, {&a, &b});
    }
    {
      nn::Parameter a("a", Tensor::randn({3, 4}, rng));
      nn::Parameter b("b", Tensor::randn({3, 4}, rng));
      Tensor probe = Tensor::randn({2, 3, 4}, rng);
      check("stack0", [&] {
        return sum_all(mul(stack0({a.tensor, b.tensor}), probe));
      }, {&a, &b});
    }
    {
      nn::Parameter a("a", Tensor::randn({3, 2}, rng));
      nn::Parameter b("b", Tensor::randn({3, 5}, rng));
      Tensor probe = Tensor::randn({3, 7}, rng);
      check("concat_lastdim", [&] {
        return sum_all(mul(concat_lastdim(a.tensor, b.tensor), probe));
      }, {&a, &b});
    }
    {
      nn::Parameter e("e", Tensor::randn({3, 6}, rng));
      nn::Parameter w("w", Tensor::randn({3}, rng));
      Tensor probe = Tensor::randn({1, 6}, rng);
      check("weighted_sum_rows+softmax", [&] {
        return sum_all(mul(
            weighted_sum_rows(e.tensor, softmax_lastdim(w.tensor)), probe));
      }, {&e, &w});
    }
    {
      nn::Parameter x("x", Tensor::randn({n, c, h, w2}, rng));
      Tensor probe = Tensor::randn({n, h * w2, c}, rng);
      check("nchw_to_tokens roundtrip", [&] {
        Tensor t = nchw_to_tokens(x.tensor);
        Tensor back = tokens_to_nchw(t, h, w2);
        return add(sum_all(mul(t, probe)), mean_all(back));
      }, {&x});
    }
    {
      nn::Parameter x("x", Tensor::randn({n, c, h, w2}, rng));
      Tensor probe = Tensor::randn({n, c, 2 * h, 2 * w2}, rng);
      check("upsample+avgpool", [&] {
        Tensor up = upsample_nearest2(x.tensor);
        return add(sum_all(mul(up, probe)), sum_all(avg_pool2x2(x.tensor)));
      }, {&x});
    }
    {
      nn::Parameter x("x", Tensor::randn({n, c, h, w2}, rng));
      nn::Parameter s("s", Tensor::randn({n, c}, rng));
      Tensor probe = Tensor::randn({n, c, h, w2}, rng);
      Tensor probe2 = Tensor::randn({n, c}, rng);
      check("add_channel_bias+gap", [&] {
        Tensor y = add_channel_bias(x.tensor, s.tensor);
        return add(sum_all(mul(y, probe)),
                   sum_all(mul(global_avg_pool(y), probe2)));
      }, {&x, &s});
    }
    {
      nn::Parameter qm("qm", Tensor::randn({n, 4, 2, 2}, rng));
      nn::Parameter tok("tok", Tensor::randn({n, 3, 5}, rng));
      nn::Parameter wq("wq", Tensor::randn({3, 4}, rng));
      nn::Parameter wk("wk", Tensor::randn({3, 5}, rng));
      nn::Parameter wv("wv", Tensor::randn({4, 5}, rng));
      Tensor probe = Tensor::randn({n, 4, 2, 2}, rng);
      check("cross_attention", [&] {
        return sum_all(mul(cross_attention(qm.tensor, tok.tensor, wq.tensor,
                                           wk.tensor, wv.tensor), probe));
      }, {&qm, &tok, &wq, &wk, &wv});
    }
  }
}
