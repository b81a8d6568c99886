#include "timecast/ops.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "timecast/blas.hpp"
#include "timecast/errors.hpp"
#include "timecast/parallel.hpp"
#include "timecast/tape.hpp"

namespace timecast::ops {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(errtag::kShape, msg);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw Error(errtag::kShape, std::string(op) + ": shape mismatch " +
                                    shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
  }
}

bool track(std::initializer_list<const Tensor*> inputs) {
  if (!active_tape()) return false;
  for (const Tensor* t : inputs) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

// Accumulates a local gradient contribution into t.grad if t is tracked.
void accum(Tensor t, std::span<const float> g, const char* what) {
  if (!t.requires_grad()) return;
  check_finite(g, what);
  auto dst = t.grad();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
}

}  // namespace

// ---------------------------------------------------------------- elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor y = Tensor::zeros(a.shape());
  const auto pa = a.data(), pb = b.data();
  auto py = y.data();
  for (std::size_t i = 0; i < py.size(); ++i) py[i] = pa[i] + pb[i];
  check_finite(y, "add");
  if (track({&a, &b})) {
    y.enable_grad();
    active_tape()->record([a, b, y]() {
      accum(a, y.grad(), "add/backward");
      accum(b, y.grad(), "add/backward");
    });
  }
  return y;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor y = Tensor::zeros(a.shape());
  const auto pa = a.data(), pb = b.data();
  auto py = y.data();
  for (std::size_t i = 0; i < py.size(); ++i) py[i] = pa[i] - pb[i];
  check_finite(y, "sub");
  if (track({&a, &b})) {
    y.enable_grad();
    active_tape()->record([a, b, y]() {
      accum(a, y.grad(), "sub/backward");
      if (b.requires_grad()) {
        std::vector<float> neg(y.numel());
        auto g = y.grad();
        for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = -g[i];
        accum(b, neg, "sub/backward");
      }
    });
  }
  return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor y = Tensor::zeros(a.shape());
  const auto pa = a.data(), pb = b.data();
  auto py = y.data();
  for (std::size_t i = 0; i < py.size(); ++i) py[i] = pa[i] * pb[i];
  check_finite(y, "mul");
  if (track({&a, &b})) {
    y.enable_grad();
    active_tape()->record([a, b, y]() {
      auto g = y.grad();
      if (a.requires_grad()) {
        std::vector<float> da(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) da[i] = g[i] * b.data()[i];
        accum(a, da, "mul/backward");
      }
      if (b.requires_grad()) {
        std::vector<float> db(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) db[i] = g[i] * a.data()[i];
        accum(b, db, "mul/backward");
      }
    });
  }
  return y;
}

Tensor add_scalar(const Tensor& a, float s) {
  Tensor y = Tensor::zeros(a.shape());
  const auto pa = a.data();
  auto py = y.data();
  for (std::size_t i = 0; i < py.size(); ++i) py[i] = pa[i] + s;
  check_finite(y, "add_scalar");
  if (track({&a})) {
    y.enable_grad();
    active_tape()->record([a, y]() { accum(a, y.grad(), "add_scalar/backward"); });
  }
  return y;
}

Tensor mul_scalar(const Tensor& a, float s) {
  Tensor y = Tensor::zeros(a.shape());
  const auto pa = a.data();
  auto py = y.data();
  for (std::size_t i = 0; i < py.size(); ++i) py[i] = pa[i] * s;
  check_finite(y, "mul_scalar");
  if (track({&a})) {
    y.enable_grad();
    active_tape()->record([a, y, s]() {
      auto g = y.grad();
      std::vector<float> da(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) da[i] = g[i] * s;
      accum(a, da, "mul_scalar/backward");
    });
  }
  return y;
}

// -------------------------------------------------------------------- linear

namespace {
Tensor linear_impl(const Tensor& x, const Tensor& w, const Tensor* b) {
  require(w.rank() == 2, "linear: weight must be rank 2, got " + shape_str(w.shape()));
  require(x.rank() >= 1, "linear: input must have rank >= 1");
  const std::int64_t in = w.extent(1), out = w.extent(0);
  require(x.shape().back() == in,
          "linear: input last extent " + std::to_string(x.shape().back()) +
              " != weight in extent " + std::to_string(in));
  if (b) {
    require(b->rank() == 1 && b->extent(0) == out,
            "linear: bias shape " + shape_str(b->shape()) + " != [" +
                std::to_string(out) + "]");
  }
  const std::int64_t rows = x.numel() / in;

  Shape yshape = x.shape();
  yshape.back() = out;
  Tensor y = Tensor::zeros(yshape);
  sgemm(false, true, static_cast<int>(rows), static_cast<int>(out),
        static_cast<int>(in), 1.f, x.data_ptr(), static_cast<int>(in),
        w.data_ptr(), static_cast<int>(in), 0.f, y.data_ptr(),
        static_cast<int>(out));
  if (b) {
    float* py = y.data_ptr();
    const float* pb = b->data_ptr();
    for (std::int64_t r = 0; r < rows; ++r) {
      for (std::int64_t o = 0; o < out; ++o) py[r * out + o] += pb[o];
    }
  }
  check_finite(y, "linear");

  const bool has_bias = b != nullptr;
  const Tensor bias = has_bias ? *b : Tensor();
  if (track({&x, &w, b ? b : &x})) {
    y.enable_grad();
    active_tape()->record([x, w, bias, y, rows, in, out, has_bias]() {
      const float* gy = y.grad().data();
      check_finite(y.grad(), "linear/backward");
      if (x.requires_grad()) {
        Tensor xg = x;  // shallow
        sgemm(false, false, static_cast<int>(rows), static_cast<int>(in),
              static_cast<int>(out), 1.f, gy, static_cast<int>(out),
              w.data_ptr(), static_cast<int>(in), 1.f, xg.grad().data(),
              static_cast<int>(in));
      }
      if (w.requires_grad()) {
        Tensor wg = w;
        sgemm(true, false, static_cast<int>(out), static_cast<int>(in),
              static_cast<int>(rows), 1.f, gy, static_cast<int>(out),
              x.data_ptr(), static_cast<int>(in), 1.f, wg.grad().data(),
              static_cast<int>(in));
      }
      if (has_bias && bias.requires_grad()) {
        Tensor bg = bias;
        auto gb = bg.grad();
        for (std::int64_t r = 0; r < rows; ++r) {
          for (std::int64_t o = 0; o < out; ++o) gb[o] += gy[r * out + o];
        }
      }
    });
  }
  return y;
}
}  // namespace

Tensor linear(const Tensor& x, const Tensor& w) { return linear_impl(x, w, nullptr); }
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return linear_impl(x, w, &b);
}

// ----------------------------------------------------------------------- bmm

Tensor bmm(const Tensor& a, const Tensor& b) {
  require(a.rank() == 3 && b.rank() == 3,
          "bmm: both inputs must be rank 3, got " + shape_str(a.shape()) +
              " and " + shape_str(b.shape()));
  const std::int64_t B = a.extent(0), M = a.extent(1), K = a.extent(2);
  require(b.extent(0) == B, "bmm: batch extents differ");
  require(b.extent(1) == K,
          "bmm: inner extents differ: " + std::to_string(K) + " vs " +
              std::to_string(b.extent(1)));
  const std::int64_t N = b.extent(2);
  Tensor y = Tensor::zeros({B, M, N});
  for (std::int64_t i = 0; i < B; ++i) {
    sgemm(false, false, static_cast<int>(M), static_cast<int>(N),
          static_cast<int>(K), 1.f, a.data_ptr() + i * M * K,
          static_cast<int>(K), b.data_ptr() + i * K * N, static_cast<int>(N),
          0.f, y.data_ptr() + i * M * N, static_cast<int>(N));
  }
  check_finite(y, "bmm");
  if (track({&a, &b})) {
    y.enable_grad();
    active_tape()->record([a, b, y, B, M, K, N]() {
      check_finite(y.grad(), "bmm/backward");
      const float* gy = y.grad().data();
      if (a.requires_grad()) {
        Tensor ag = a;
        for (std::int64_t i = 0; i < B; ++i) {
          sgemm(false, true, static_cast<int>(M), static_cast<int>(K),
                static_cast<int>(N), 1.f, gy + i * M * N, static_cast<int>(N),
                b.data_ptr() + i * K * N, static_cast<int>(N), 1.f,
                ag.grad().data() + i * M * K, static_cast<int>(K));
        }
      }
      if (b.requires_grad()) {
        Tensor bg = b;
        for (std::int64_t i = 0; i < B; ++i) {
          sgemm(true, false, static_cast<int>(K), static_cast<int>(N),
                static_cast<int>(M), 1.f, a.data_ptr() + i * M * K,
                static_cast<int>(K), gy + i * M * N, static_cast<int>(N), 1.f,
                bg.grad().data() + i * K * N, static_cast<int>(N));
        }
      }
    });
  }
  return y;
}

Tensor transpose_last2(const Tensor& x) {
  require(x.rank() >= 2, "transpose_last2: rank must be >= 2");
  const std::int64_t M = x.shape()[x.rank() - 2];
  const std::int64_t N = x.shape().back();
  const std::int64_t B = x.numel() / (M * N);
  Shape yshape = x.shape();
  std::swap(yshape[yshape.size() - 2], yshape[yshape.size() - 1]);
  Tensor y = Tensor::zeros(yshape);
  const float* px = x.data_ptr();
  float* py = y.data_ptr();
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t i = 0; i < M; ++i) {
      for (std::int64_t j = 0; j < N; ++j) {
        py[b * M * N + j * M + i] = px[b * M * N + i * N + j];
      }
    }
  }
  if (track({&x})) {
    y.enable_grad();
    active_tape()->record([x, y, B, M, N]() {
      if (!x.requires_grad()) return;
      Tensor xg = x;
      const float* gy = y.grad().data();
      check_finite(y.grad(), "transpose_last2/backward");
      auto gx = xg.grad();
      for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t i = 0; i < M; ++i) {
          for (std::int64_t j = 0; j < N; ++j) {
            gx[b * M * N + i * N + j] += gy[b * M * N + j * M + i];
          }
        }
      }
    });
  }
  return y;
}

// -------------------------------------------------------------------- conv2d

namespace {

struct ConvDims {
  std::int64_t n, c, h, w, f, kh, kw, oh, ow;
  int stride, pad;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, const Tensor& b,
                   int stride, int padding) {
  require(x.rank() == 4, "conv2d: input must be [N,C,H,W], got " + shape_str(x.shape()));
  require(w.rank() == 4, "conv2d: weight must be [F,C,kh,kw], got " + shape_str(w.shape()));
  ConvDims d;
  d.n = x.extent(0);
  d.c = x.extent(1);
  d.h = x.extent(2);
  d.w = x.extent(3);
  d.f = w.extent(0);
  d.kh = w.extent(2);
  d.kw = w.extent(3);
  d.stride = stride;
  d.pad = padding;
  if (w.extent(1) != d.c) {
    throw Error(errtag::kShape,
                "conv2d: input channel extent " + std::to_string(d.c) +
                    " != weight channel extent " + std::to_string(w.extent(1)));
  }
  require(d.kh % 2 == 1 && d.kw % 2 == 1,
          "conv2d: kernel extents must be odd, got kh=" + std::to_string(d.kh) +
              " kw=" + std::to_string(d.kw));
  require(stride >= 1, "conv2d: stride must be >= 1");
  require(padding >= 0, "conv2d: padding must be >= 0");
  require(b.rank() == 1 && b.extent(0) == d.f,
          "conv2d: bias shape " + shape_str(b.shape()) + " != [" +
              std::to_string(d.f) + "]");
  const std::int64_t eh = d.h + 2 * padding - d.kh;
  const std::int64_t ew = d.w + 2 * padding - d.kw;
  require(eh >= 0 && ew >= 0, "conv2d: kernel larger than padded input");
  if (eh % stride != 0 || ew % stride != 0) {
    throw Error(errtag::kShape,
                "conv2d: output extent not exact: (H+2p-kh)=" +
                    std::to_string(eh) + ", (W+2p-kw)=" + std::to_string(ew) +
                    " must divide stride " + std::to_string(stride));
  }
  d.oh = eh / stride + 1;
  d.ow = ew / stride + 1;
  return d;
}

// x_n: [C,H,W] -> cols: [C*kh*kw, OH*OW]
void im2col(const float* x, const ConvDims& d, float* cols) {
  const std::int64_t patch = d.oh * d.ow;
  for (std::int64_t c = 0; c < d.c; ++c) {
    for (std::int64_t ki = 0; ki < d.kh; ++ki) {
      for (std::int64_t kj = 0; kj < d.kw; ++kj) {
        float* row = cols + ((c * d.kh + ki) * d.kw + kj) * patch;
        for (std::int64_t oi = 0; oi < d.oh; ++oi) {
          const std::int64_t ii = oi * d.stride + ki - d.pad;
          if (ii < 0 || ii >= d.h) {
            std::memset(row + oi * d.ow, 0, sizeof(float) * d.ow);
            continue;
          }
          const float* src = x + (c * d.h + ii) * d.w;
          for (std::int64_t oj = 0; oj < d.ow; ++oj) {
            const std::int64_t jj = oj * d.stride + kj - d.pad;
            row[oi * d.ow + oj] = (jj < 0 || jj >= d.w) ? 0.f : src[jj];
          }
        }
      }
    }
  }
}

// cols: [C*kh*kw, OH*OW] accumulated back into dx_n: [C,H,W]
void col2im_accum(const float* cols, const ConvDims& d, float* dx) {
  const std::int64_t patch = d.oh * d.ow;
  for (std::int64_t c = 0; c < d.c; ++c) {
    for (std::int64_t ki = 0; ki < d.kh; ++ki) {
      for (std::int64_t kj = 0; kj < d.kw; ++kj) {
        const float* row = cols + ((c * d.kh + ki) * d.kw + kj) * patch;
        for (std::int64_t oi = 0; oi < d.oh; ++oi) {
          const std::int64_t ii = oi * d.stride + ki - d.pad;
          if (ii < 0 || ii >= d.h) continue;
          float* dst = dx + (c * d.h + ii) * d.w;
          for (std::int64_t oj = 0; oj < d.ow; ++oj) {
            const std::int64_t jj = oj * d.stride + kj - d.pad;
            if (jj >= 0 && jj < d.w) dst[jj] += row[oi * d.ow + oj];
          }
        }
      }
    }
  }
}

bool conv_is_pointwise(const ConvDims& d) {
  return d.kh == 1 && d.kw == 1 && d.stride == 1 && d.pad == 0;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
              int padding) {
  const ConvDims d = conv_dims(x, w, b, stride, padding);
  const std::int64_t patch = d.oh * d.ow;
  const std::int64_t ckk = d.c * d.kh * d.kw;
  Tensor y = Tensor::zeros({d.n, d.f, d.oh, d.ow});

  const bool pointwise = conv_is_pointwise(d);
  parallel_tasks(static_cast<int>(d.n), [&](int n) {
    std::vector<float> cols;
    const float* cols_ptr;
    const float* xn = x.data_ptr() + n * d.c * d.h * d.w;
    if (pointwise) {
      cols_ptr = xn;
    } else {
      cols.resize(static_cast<std::size_t>(ckk * patch));
      im2col(xn, d, cols.data());
      cols_ptr = cols.data();
    }
    float* yn = y.data_ptr() + n * d.f * patch;
    sgemm(false, false, static_cast<int>(d.f), static_cast<int>(patch),
          static_cast<int>(ckk), 1.f, w.data_ptr(), static_cast<int>(ckk),
          cols_ptr, static_cast<int>(patch), 0.f, yn, static_cast<int>(patch));
    const float* pb = b.data_ptr();
    for (std::int64_t f = 0; f < d.f; ++f) {
      float* row = yn + f * patch;
      for (std::int64_t p = 0; p < patch; ++p) row[p] += pb[f];
    }
  });
  check_finite(y, "conv2d");

  if (track({&x, &w, &b})) {
    y.enable_grad();
    active_tape()->record([x, w, b, y, d, patch, ckk, pointwise]() {
      check_finite(y.grad(), "conv2d/backward");
      const float* gy = y.grad().data();
      const bool need_dx = x.requires_grad();
      const bool need_dw = w.requires_grad();
      const bool need_db = b.requires_grad();

      // Per-sample weight/bias partials, reduced afterwards in sample order
      // so the result does not depend on thread count.
      std::vector<float> dw_part;
      std::vector<float> db_part;
      if (need_dw) dw_part.assign(static_cast<std::size_t>(d.n * d.f * ckk), 0.f);
      if (need_db) db_part.assign(static_cast<std::size_t>(d.n * d.f), 0.f);
      Tensor xg = x;

      parallel_tasks(static_cast<int>(d.n), [&](int n) {
        std::vector<float> cols;
        const float* cols_ptr = nullptr;
        const float* xn = x.data_ptr() + n * d.c * d.h * d.w;
        if (need_dw) {
          if (pointwise) {
            cols_ptr = xn;
          } else {
            cols.resize(static_cast<std::size_t>(ckk * patch));
            im2col(xn, d, cols.data());
            cols_ptr = cols.data();
          }
        }
        const float* gyn = gy + n * d.f * patch;
        if (need_dx) {
          if (pointwise) {
            // dcols == dx slice directly
            sgemm(true, false, static_cast<int>(ckk), static_cast<int>(patch),
                  static_cast<int>(d.f), 1.f, w.data_ptr(),
                  static_cast<int>(ckk), gyn, static_cast<int>(patch), 1.f,
                  xg.grad().data() + n * d.c * d.h * d.w,
                  static_cast<int>(patch));
          } else {
            std::vector<float> dcols(static_cast<std::size_t>(ckk * patch));
            sgemm(true, false, static_cast<int>(ckk), static_cast<int>(patch),
                  static_cast<int>(d.f), 1.f, w.data_ptr(),
                  static_cast<int>(ckk), gyn, static_cast<int>(patch), 0.f,
                  dcols.data(), static_cast<int>(patch));
            col2im_accum(dcols.data(), d,
                         xg.grad().data() + n * d.c * d.h * d.w);
          }
        }
        if (need_dw) {
          sgemm(false, true, static_cast<int>(d.f), static_cast<int>(ckk),
                static_cast<int>(patch), 1.f, gyn, static_cast<int>(patch),
                cols_ptr, static_cast<int>(patch), 0.f,
                dw_part.data() + n * d.f * ckk, static_cast<int>(ckk));
        }
        if (need_db) {
          float* dbn = db_part.data() + n * d.f;
          for (std::int64_t f = 0; f < d.f; ++f) {
            double s = 0.0;
            const float* row = gyn + f * patch;
            for (std::int64_t p = 0; p < patch; ++p) s += row[p];
            dbn[f] = static_cast<float>(s);
          }
        }
      });

      if (need_dw) {
        Tensor wg = w;
        auto gw = wg.grad();
        for (std::int64_t n = 0; n < d.n; ++n) {
          const float* part = dw_part.data() + n * d.f * ckk;
          for (std::int64_t i = 0; i < d.f * ckk; ++i) gw[i] += part[i];
        }
        check_finite(gw, "conv2d/backward dW");
      }
      if (need_db) {
        Tensor bg = b;
        auto gb = bg.grad();
        for (std::int64_t n = 0; n < d.n; ++n) {
          for (std::int64_t f = 0; f < d.f; ++f) gb[f] += db_part[n * d.f + f];
        }
        check_finite(gb, "conv2d/backward db");
      }
      if (need_dx) check_finite(xg.grad(), "conv2d/backward dX");
    });
  }
  return y;
}

// ------------------------------------------------------- activations & norms

Tensor silu(const Tensor& x) {
  Tensor y = Tensor::zeros(x.shape());
  const auto px = x.data();
  auto py = y.data();
  for (std::size_t i = 0; i < py.size(); ++i) {
    const float s = 1.f / (1.f + std::exp(-px[i]));
    py[i] = px[i] * s;
  }
  check_finite(y, "silu");
  if (track({&x})) {
    y.enable_grad();
    active_tape()->record([x, y]() {
      if (!x.requires_grad()) return;
      auto g = y.grad();
      std::vector<float> dx(g.size());
      const auto px = x.data();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const float s = 1.f / (1.f + std::exp(-px[i]));
        dx[i] = g[i] * (s + px[i] * s * (1.f - s));
      }
      accum(x, dx, "silu/backward");
    });
  }
  return y;
}

Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  int groups, float eps) {
  require(x.rank() == 4, "group_norm: input must be [N,C,H,W]");
  const std::int64_t N = x.extent(0), C = x.extent(1), H = x.extent(2),
                     W = x.extent(3);
  require(groups >= 1 && C % groups == 0,
          "group_norm: channels " + std::to_string(C) +
              " not divisible by groups " + std::to_string(groups));
  require(gamma.rank() == 1 && gamma.extent(0) == C, "group_norm: gamma must be [C]");
  require(beta.rank() == 1 && beta.extent(0) == C, "group_norm: beta must be [C]");
  const std::int64_t cg = C / groups;
  const std::int64_t spatial = H * W;
  const std::int64_t m = cg * spatial;

  Tensor y = Tensor::zeros(x.shape());
  const float* px = x.data_ptr();
  float* py = y.data_ptr();
  const float* pg = gamma.data_ptr();
  const float* pb = beta.data_ptr();

  for (std::int64_t n = 0; n < N; ++n) {
    for (std::int64_t g = 0; g < groups; ++g) {
      const float* base = px + (n * C + g * cg) * spatial;
      double sum = 0.0, sq = 0.0;
      for (std::int64_t i = 0; i < m; ++i) {
        sum += base[i];
        sq += static_cast<double>(base[i]) * base[i];
      }
      const double mean = sum / m;
      const double var = sq / m - mean * mean;
      const float inv = static_cast<float>(1.0 / std::sqrt(var + eps));
      float* out = py + (n * C + g * cg) * spatial;
      for (std::int64_t c = 0; c < cg; ++c) {
        const float ga = pg[g * cg + c], be = pb[g * cg + c];
        const float* xi = base + c * spatial;
        float* yo = out + c * spatial;
        for (std::int64_t p = 0; p < spatial; ++p) {
          yo[p] = (xi[p] - static_cast<float>(mean)) * inv * ga + be;
        }
      }
    }
  }
  check_finite(y, "group_norm");

  if (track({&x, &gamma, &beta})) {
    y.enable_grad();
    active_tape()->record([x, gamma, beta, y, N, C, H, W, groups, cg, spatial,
                           m, eps]() {
      check_finite(y.grad(), "group_norm/backward");
      const float* px = x.data_ptr();
      const float* pg = gamma.data_ptr();
      const float* gy = y.grad().data();
      std::vector<float> dx(x.requires_grad() ? x.numel() : 0, 0.f);
      std::vector<float> dgamma(gamma.requires_grad() ? C : 0, 0.f);
      std::vector<float> dbeta(beta.requires_grad() ? C : 0, 0.f);

      for (std::int64_t n = 0; n < N; ++n) {
        for (std::int64_t g = 0; g < groups; ++g) {
          const float* base = px + (n * C + g * cg) * spatial;
          const float* gyb = gy + (n * C + g * cg) * spatial;
          double sum = 0.0, sq = 0.0;
          for (std::int64_t i = 0; i < m; ++i) {
            sum += base[i];
            sq += static_cast<double>(base[i]) * base[i];
          }
          const double mean = sum / m;
          const double var = sq / m - mean * mean;
          const double inv = 1.0 / std::sqrt(var + eps);

          // group sums of dy' and dy' * xhat (dy' = dy * gamma)
          double s1 = 0.0, s2 = 0.0;
          for (std::int64_t c = 0; c < cg; ++c) {
            const float ga = pg[g * cg + c];
            for (std::int64_t p = 0; p < spatial; ++p) {
              const double xh = (base[c * spatial + p] - mean) * inv;
              const double dyp = static_cast<double>(gyb[c * spatial + p]) * ga;
              s1 += dyp;
              s2 += dyp * xh;
            }
          }
          for (std::int64_t c = 0; c < cg; ++c) {
            const std::int64_t ch = g * cg + c;
            const float ga = pg[ch];
            double dg = 0.0, db = 0.0;
            for (std::int64_t p = 0; p < spatial; ++p) {
              const double xh = (base[c * spatial + p] - mean) * inv;
              const double dy = gyb[c * spatial + p];
              if (!dx.empty()) {
                const double dyp = dy * ga;
                dx[((n * C + ch) * spatial) + p] += static_cast<float>(
                    inv * (dyp - s1 / m - xh * s2 / m));
              }
              dg += dy * xh;
              db += dy;
            }
            if (!dgamma.empty()) dgamma[ch] += static_cast<float>(dg);
            if (!dbeta.empty()) dbeta[ch] += static_cast<float>(db);
          }
        }
      }
      if (!dx.empty()) accum(x, dx, "group_norm/backward dx");
      if (!dgamma.empty()) accum(gamma, dgamma, "group_norm/backward dgamma");
      if (!dbeta.empty()) accum(beta, dbeta, "group_norm/backward dbeta");
    });
  }
  return y;
}

Tensor softmax_lastdim(const Tensor& x) {
  require(x.rank() >= 1, "softmax: rank must be >= 1");
  const std::int64_t S = x.shape().back();
  require(S >= 1, "softmax: last extent must be >= 1");
  const std::int64_t rows = x.numel() / S;
  Tensor y = Tensor::zeros(x.shape());
  const float* px = x.data_ptr();
  float* py = y.data_ptr();
  for (std::int64_t r = 0; r < rows; ++r) {
    const float* xi = px + r * S;
    float* yo = py + r * S;
    float mx = xi[0];
    for (std::int64_t i = 1; i < S; ++i) mx = std::max(mx, xi[i]);
    double denom = 0.0;
    for (std::int64_t i = 0; i < S; ++i) {
      yo[i] = std::exp(xi[i] - mx);
      denom += yo[i];
    }
    const float inv = static_cast<float>(1.0 / denom);
    for (std::int64_t i = 0; i < S; ++i) yo[i] *= inv;
  }
  check_finite(y, "softmax");
  if (track({&x})) {
    y.enable_grad();
    active_tape()->record([x, y, rows, S]() {
      if (!x.requires_grad()) return;
      auto g = y.grad();
      const float* py = y.data_ptr();
      std::vector<float> dx(g.size());
      for (std::int64_t r = 0; r < rows; ++r) {
        double dot = 0.0;
        for (std::int64_t i = 0; i < S; ++i) {
          dot += static_cast<double>(g[r * S + i]) * py[r * S + i];
        }
        for (std::int64_t i = 0; i < S; ++i) {
          dx[r * S + i] = static_cast<float>(
              (static_cast<double>(g[r * S + i]) - dot) * py[r * S + i]);
        }
      }
      accum(x, dx, "softmax/backward");
    });
  }
  return y;
}

// --------------------------------------------------------------- reductions

Tensor sum_all(const Tensor& x) {
  double s = 0.0;
  for (float v : x.data()) s += v;
  Tensor y = Tensor::scalar(static_cast<float>(s));
  check_finite(y, "sum_all");
  if (track({&x})) {
    y.enable_grad();
    active_tape()->record([x, y]() {
      if (!x.requires_grad()) return;
      const float g = y.grad()[0];
      std::vector<float> dx(x.numel(), g);
      accum(x, dx, "sum_all/backward");
    });
  }
  return y;
}

Tensor mean_all(const Tensor& x) {
  const std::int64_t n = x.numel();
  require(n > 0, "mean_all: empty tensor");
  double s = 0.0;
  for (float v : x.data()) s += v;
  Tensor y = Tensor::scalar(static_cast<float>(s / n));
  check_finite(y, "mean_all");
  if (track({&x})) {
    y.enable_grad();
    active_tape()->record([x, y, n]() {
      if (!x.requires_grad()) return;
      const float g = y.grad()[0] / static_cast<float>(n);
      std::vector<float> dx(x.numel(), g);
      accum(x, dx, "mean_all/backward");
    });
  }
  return y;
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "mse_loss");
  const std::int64_t n = pred.numel();
  require(n > 0, "mse_loss: empty tensors");
  const auto pp = pred.data(), pt = target.data();
  double s = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(pp[i]) - pt[i];
    s += d * d;
  }
  Tensor y = Tensor::scalar(static_cast<float>(s / n));
  check_finite(y, "mse_loss");
  if (track({&pred, &target})) {
    y.enable_grad();
    active_tape()->record([pred, target, y, n]() {
      const float g = y.grad()[0] * 2.f / static_cast<float>(n);
      const auto pp = pred.data(), pt = target.data();
      if (pred.requires_grad()) {
        std::vector<float> d(static_cast<std::size_t>(n));
        for (std::int64_t i = 0; i < n; ++i) d[i] = g * (pp[i] - pt[i]);
        accum(pred, d, "mse_loss/backward");
      }
      if (target.requires_grad()) {
        std::vector<float> d(static_cast<std::size_t>(n));
        for (std::int64_t i = 0; i < n; ++i) d[i] = g * (pt[i] - pp[i]);
        accum(target, d, "mse_loss/backward");
      }
    });
  }
  return y;
}

// --------------------------------------------------------------- layout ops

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require(a.rank() == 4 && b.rank() == 4, "concat_channels: inputs must be rank 4");
  require(a.extent(0) == b.extent(0) && a.extent(2) == b.extent(2) &&
              a.extent(3) == b.extent(3),
          "concat_channels: non-channel extents differ: " +
              shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const std::int64_t N = a.extent(0), Ca = a.extent(1), Cb = b.extent(1),
                     S = a.extent(2) * a.extent(3);
  Tensor y = Tensor::zeros({N, Ca + Cb, a.extent(2), a.extent(3)});
  float* py = y.data_ptr();
  for (std::int64_t n = 0; n < N; ++n) {
    std::memcpy(py + n * (Ca + Cb) * S, a.data_ptr() + n * Ca * S,
                sizeof(float) * Ca * S);
    std::memcpy(py + (n * (Ca + Cb) + Ca) * S, b.data_ptr() + n * Cb * S,
                sizeof(float) * Cb * S);
  }
  if (track({&a, &b})) {
    y.enable_grad();
    active_tape()->record([a, b, y, N, Ca, Cb, S]() {
      check_finite(y.grad(), "concat_channels/backward");
      const float* gy = y.grad().data();
      if (a.requires_grad()) {
        Tensor ag = a;
        auto ga = ag.grad();
        for (std::int64_t n = 0; n < N; ++n) {
          const float* src = gy + n * (Ca + Cb) * S;
          for (std::int64_t i = 0; i < Ca * S; ++i) ga[n * Ca * S + i] += src[i];
        }
      }
      if (b.requires_grad()) {
        Tensor bg = b;
        auto gb = bg.grad();
        for (std::int64_t n = 0; n < N; ++n) {
          const float* src = gy + (n * (Ca + Cb) + Ca) * S;
          for (std::int64_t i = 0; i < Cb * S; ++i) gb[n * Cb * S + i] += src[i];
        }
      }
    });
  }
  return y;
}

namespace {
Shape tail_shape(const Tensor& t) {
  Shape s = t.shape();
  s.erase(s.begin());
  return s;
}
}  // namespace

Tensor concat0(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat0: no parts");
  const Shape tail = tail_shape(parts[0]);
  std::int64_t total = 0;
  for (const Tensor& p : parts) {
    require(p.rank() >= 1, "concat0: parts must have rank >= 1");
    require(tail_shape(p) == tail, "concat0: trailing shapes differ");
    total += p.extent(0);
  }
  Shape yshape = parts[0].shape();
  yshape[0] = total;
  Tensor y = Tensor::zeros(yshape);
  float* py = y.data_ptr();
  std::int64_t off = 0;
  for (const Tensor& p : parts) {
    std::memcpy(py + off, p.data_ptr(), sizeof(float) * p.numel());
    off += p.numel();
  }
  bool any = false;
  for (const Tensor& p : parts) any = any || p.requires_grad();
  if (active_tape() && any) {
    y.enable_grad();
    std::vector<Tensor> captured = parts;
    active_tape()->record([captured, y]() {
      check_finite(y.grad(), "concat0/backward");
      const float* gy = y.grad().data();
      std::int64_t off = 0;
      for (const Tensor& p : captured) {
        if (p.requires_grad()) {
          Tensor pg = p;
          auto g = pg.grad();
          for (std::int64_t i = 0; i < p.numel(); ++i) g[i] += gy[off + i];
        }
        off += p.numel();
      }
    });
  }
  return y;
}

Tensor stack0(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "stack0: no parts");
  for (const Tensor& p : parts) {
    require(p.shape() == parts[0].shape(), "stack0: part shapes differ");
  }
  Shape yshape = parts[0].shape();
  yshape.insert(yshape.begin(), static_cast<std::int64_t>(parts.size()));
  Tensor y = Tensor::zeros(yshape);
  float* py = y.data_ptr();
  const std::int64_t per = parts[0].numel();
  for (std::size_t i = 0; i < parts.size(); ++i) {
    std::memcpy(py + static_cast<std::int64_t>(i) * per, parts[i].data_ptr(),
                sizeof(float) * per);
  }
  bool any = false;
  for (const Tensor& p : parts) any = any || p.requires_grad();
  if (active_tape() && any) {
    y.enable_grad();
    std::vector<Tensor> captured = parts;
    active_tape()->record([captured, y, per]() {
      check_finite(y.grad(), "stack0/backward");
      const float* gy = y.grad().data();
      for (std::size_t i = 0; i < captured.size(); ++i) {
        const Tensor& p = captured[i];
        if (!p.requires_grad()) continue;
        Tensor pg = p;
        auto g = pg.grad();
        const float* src = gy + static_cast<std::int64_t>(i) * per;
        for (std::int64_t j = 0; j < per; ++j) g[j] += src[j];
      }
    });
  }
  return y;
}

Tensor concat_lastdim(const Tensor& a, const Tensor& b) {
  require(a.rank() == b.rank() && a.rank() >= 1, "concat_lastdim: rank mismatch");
  for (int i = 0; i + 1 < a.rank(); ++i) {
    require(a.extent(i) == b.extent(i), "concat_lastdim: leading extents differ");
  }
  const std::int64_t Da = a.shape().back(), Db = b.shape().back();
  const std::int64_t rows = a.numel() / Da;
  Shape yshape = a.shape();
  yshape.back() = Da + Db;
  Tensor y = Tensor::zeros(yshape);
  float* py = y.data_ptr();
  for (std::int64_t r = 0; r < rows; ++r) {
    std::memcpy(py + r * (Da + Db), a.data_ptr() + r * Da, sizeof(float) * Da);
    std::memcpy(py + r * (Da + Db) + Da, b.data_ptr() + r * Db,
                sizeof(float) * Db);
  }
  if (track({&a, &b})) {
    y.enable_grad();
    active_tape()->record([a, b, y, rows, Da, Db]() {
      check_finite(y.grad(), "concat_lastdim/backward");
      const float* gy = y.grad().data();
      if (a.requires_grad()) {
        Tensor ag = a;
        auto g = ag.grad();
        for (std::int64_t r = 0; r < rows; ++r) {
          for (std::int64_t i = 0; i < Da; ++i) g[r * Da + i] += gy[r * (Da + Db) + i];
        }
      }
      if (b.requires_grad()) {
        Tensor bg = b;
        auto g = bg.grad();
        for (std::int64_t r = 0; r < rows; ++r) {
          for (std::int64_t i = 0; i < Db; ++i) {
            g[r * Db + i] += gy[r * (Da + Db) + Da + i];
          }
        }
      }
    });
  }
  return y;
}

Tensor slice0(const Tensor& x, std::int64_t start, std::int64_t count) {
  require(x.rank() >= 1, "slice0: rank must be >= 1");
  require(start >= 0 && count >= 1 && start + count <= x.extent(0),
          "slice0: range [" + std::to_string(start) + "," +
              std::to_string(start + count) + ") out of extent " +
              std::to_string(x.extent(0)));
  Shape yshape = x.shape();
  yshape[0] = count;
  const std::int64_t per = x.numel() / x.extent(0);
  Tensor y = Tensor::zeros(yshape);
  std::memcpy(y.data_ptr(), x.data_ptr() + start * per,
              sizeof(float) * count * per);
  if (track({&x})) {
    y.enable_grad();
    active_tape()->record([x, y, start, count, per]() {
      if (!x.requires_grad()) return;
      check_finite(y.grad(), "slice0/backward");
      Tensor xg = x;
      auto g = xg.grad();
      const float* gy = y.grad().data();
      for (std::int64_t i = 0; i < count * per; ++i) g[start * per + i] += gy[i];
    });
  }
  return y;
}

Tensor weighted_sum_rows(const Tensor& e, const Tensor& w) {
  require(e.rank() == 2, "weighted_sum_rows: e must be [K,D]");
  require(w.rank() == 1 && w.extent(0) == e.extent(0),
          "weighted_sum_rows: w must be [K] with K = " + std::to_string(e.extent(0)));
  const std::int64_t K = e.extent(0), D = e.extent(1);
  Tensor y = Tensor::zeros({1, D});
  float* py = y.data_ptr();
  const float* pe = e.data_ptr();
  const float* pw = w.data_ptr();
  for (std::int64_t k = 0; k < K; ++k) {
    for (std::int64_t i = 0; i < D; ++i) py[i] += pw[k] * pe[k * D + i];
  }
  check_finite(y, "weighted_sum_rows");
  if (track({&e, &w})) {
    y.enable_grad();
    active_tape()->record([e, w, y, K, D]() {
      check_finite(y.grad(), "weighted_sum_rows/backward");
      const float* gy = y.grad().data();
      if (e.requires_grad()) {
        Tensor eg = e;
        auto g = eg.grad();
        const float* pw = w.data_ptr();
        for (std::int64_t k = 0; k < K; ++k) {
          for (std::int64_t i = 0; i < D; ++i) g[k * D + i] += pw[k] * gy[i];
        }
      }
      if (w.requires_grad()) {
        Tensor wg = w;
        auto g = wg.grad();
        const float* pe = e.data_ptr();
        for (std::int64_t k = 0; k < K; ++k) {
          double dot = 0.0;
          for (std::int64_t i = 0; i < D; ++i) {
            dot += static_cast<double>(pe[k * D + i]) * gy[i];
          }
          g[k] += static_cast<float>(dot);
        }
      }
    });
  }
  return y;
}

Tensor nchw_to_tokens(const Tensor& x) {
  require(x.rank() == 4, "nchw_to_tokens: input must be [N,C,H,W]");
  const std::int64_t N = x.extent(0), C = x.extent(1),
                     P = x.extent(2) * x.extent(3);
  Tensor y = Tensor::zeros({N, P, C});
  const float* px = x.data_ptr();
  float* py = y.data_ptr();
  for (std::int64_t n = 0; n < N; ++n) {
    for (std::int64_t c = 0; c < C; ++c) {
      for (std::int64_t p = 0; p < P; ++p) {
        py[(n * P + p) * C + c] = px[(n * C + c) * P + p];
      }
    }
  }
  if (track({&x})) {
    y.enable_grad();
    active_tape()->record([x, y, N, C, P]() {
      if (!x.requires_grad()) return;
      check_finite(y.grad(), "nchw_to_tokens/backward");
      Tensor xg = x;
      auto g = xg.grad();
      const float* gy = y.grad().data();
      for (std::int64_t n = 0; n < N; ++n) {
        for (std::int64_t c = 0; c < C; ++c) {
          for (std::int64_t p = 0; p < P; ++p) {
            g[(n * C + c) * P + p] += gy[(n * P + p) * C + c];
          }
        }
      }
    });
  }
  return y;
}

Tensor tokens_to_nchw(const Tensor& x, std::int64_t h, std::int64_t w) {
  require(x.rank() == 3, "tokens_to_nchw: input must be [N,P,C]");
  require(x.extent(1) == h * w, "tokens_to_nchw: P != H*W");
  const std::int64_t N = x.extent(0), P = x.extent(1), C = x.extent(2);
  Tensor y = Tensor::zeros({N, C, h, w});
  const float* px = x.data_ptr();
  float* py = y.data_ptr();
  for (std::int64_t n = 0; n < N; ++n) {
    for (std::int64_t p = 0; p < P; ++p) {
      for (std::int64_t c = 0; c < C; ++c) {
        py[(n * C + c) * P + p] = px[(n * P + p) * C + c];
      }
    }
  }
  if (track({&x})) {
    y.enable_grad();
    active_tape()->record([x, y, N, C, P]() {
      if (!x.requires_grad()) return;
      check_finite(y.grad(), "tokens_to_nchw/backward");
      Tensor xg = x;
      auto g = xg.grad();
      const float* gy = y.grad().data();
      for (std::int64_t n = 0; n < N; ++n) {
        for (std::int64_t p = 0; p < P; ++p) {
          for (std::int64_t c = 0; c < C; ++c) {
            g[(n * P + p) * C + c] += gy[(n * C + c) * P + p];
          }
        }
      }
    });
  }
  return y;
}

Tensor upsample_nearest2(const Tensor& x) {
  require(x.rank() == 4, "upsample_nearest2: input must be [N,C,H,W]");
  const std::int64_t N = x.extent(0), C = x.extent(1), H = x.extent(2),
                     W = x.extent(3);
  Tensor y = Tensor::zeros({N, C, 2 * H, 2 * W});
  const float* px = x.data_ptr();
  float* py = y.data_ptr();
  for (std::int64_t nc = 0; nc < N * C; ++nc) {
    for (std::int64_t i = 0; i < H; ++i) {
      for (std::int64_t j = 0; j < W; ++j) {
        const float v = px[(nc * H + i) * W + j];
        float* base = py + (nc * 2 * H + 2 * i) * 2 * W + 2 * j;
        base[0] = v;
        base[1] = v;
        base[2 * W] = v;
        base[2 * W + 1] = v;
      }
    }
  }
  if (track({&x})) {
    y.enable_grad();
    active_tape()->record([x, y, N, C, H, W]() {
      if (!x.requires_grad()) return;
      check_finite(y.grad(), "upsample_nearest2/backward");
      Tensor xg = x;
      auto g = xg.grad();
      const float* gy = y.grad().data();
      for (std::int64_t nc = 0; nc < N * C; ++nc) {
        for (std::int64_t i = 0; i < H; ++i) {
          for (std::int64_t j = 0; j < W; ++j) {
            const float* base = gy + (nc * 2 * H + 2 * i) * 2 * W + 2 * j;
            g[(nc * H + i) * W + j] +=
                base[0] + base[1] + base[2 * W] + base[2 * W + 1];
          }
        }
      }
    });
  }
  return y;
}

Tensor avg_pool2x2(const Tensor& x) {
  require(x.rank() == 4, "avg_pool2x2: input must be [N,C,H,W]");
  const std::int64_t N = x.extent(0), C = x.extent(1), H = x.extent(2),
                     W = x.extent(3);
  require(H % 2 == 0 && W % 2 == 0, "avg_pool2x2: H and W must be even");
  Tensor y = Tensor::zeros({N, C, H / 2, W / 2});
  const float* px = x.data_ptr();
  float* py = y.data_ptr();
  for (std::int64_t nc = 0; nc < N * C; ++nc) {
    for (std::int64_t i = 0; i < H / 2; ++i) {
      for (std::int64_t j = 0; j < W / 2; ++j) {
        const float* base = px + (nc * H + 2 * i) * W + 2 * j;
        py[(nc * (H / 2) + i) * (W / 2) + j] =
            0.25f * (base[0] + base[1] + base[W] + base[W + 1]);
      }
    }
  }
  if (track({&x})) {
    y.enable_grad();
    active_tape()->record([x, y, N, C, H, W]() {
      if (!x.requires_grad()) return;
      check_finite(y.grad(), "avg_pool2x2/backward");
      Tensor xg = x;
      auto g = xg.grad();
      const float* gy = y.grad().data();
      for (std::int64_t nc = 0; nc < N * C; ++nc) {
        for (std::int64_t i = 0; i < H / 2; ++i) {
          for (std::int64_t j = 0; j < W / 2; ++j) {
            const float q = 0.25f * gy[(nc * (H / 2) + i) * (W / 2) + j];
            float* base = g.data() + (nc * H + 2 * i) * W + 2 * j;
            base[0] += q;
            base[1] += q;
            base[W] += q;
            base[W + 1] += q;
          }
        }
      }
    });
  }
  return y;
}

Tensor global_avg_pool(const Tensor& x) {
  require(x.rank() == 4, "global_avg_pool: input must be [N,C,H,W]");
  const std::int64_t N = x.extent(0), C = x.extent(1),
                     P = x.extent(2) * x.extent(3);
  Tensor y = Tensor::zeros({N, C});
  const float* px = x.data_ptr();
  float* py = y.data_ptr();
  for (std::int64_t nc = 0; nc < N * C; ++nc) {
    double s = 0.0;
    for (std::int64_t p = 0; p < P; ++p) s += px[nc * P + p];
    py[nc] = static_cast<float>(s / P);
  }
  if (track({&x})) {
    y.enable_grad();
    active_tape()->record([x, y, N, C, P]() {
      if (!x.requires_grad()) return;
      check_finite(y.grad(), "global_avg_pool/backward");
      Tensor xg = x;
      auto g = xg.grad();
      const float* gy = y.grad().data();
      for (std::int64_t nc = 0; nc < N * C; ++nc) {
        const float q = gy[nc] / static_cast<float>(P);
        for (std::int64_t p = 0; p < P; ++p) g[nc * P + p] += q;
      }
    });
  }
  return y;
}

Tensor add_channel_bias(const Tensor& x, const Tensor& s) {
  require(x.rank() == 4, "add_channel_bias: x must be [N,C,H,W]");
  require(s.rank() == 2 && s.extent(0) == x.extent(0) &&
              s.extent(1) == x.extent(1),
          "add_channel_bias: s must be [N,C] matching x");
  const std::int64_t NC = x.extent(0) * x.extent(1),
                     P = x.extent(2) * x.extent(3);
  Tensor y = Tensor::zeros(x.shape());
  const float* px = x.data_ptr();
  const float* ps = s.data_ptr();
  float* py = y.data_ptr();
  for (std::int64_t nc = 0; nc < NC; ++nc) {
    for (std::int64_t p = 0; p < P; ++p) py[nc * P + p] = px[nc * P + p] + ps[nc];
  }
  check_finite(y, "add_channel_bias");
  if (track({&x, &s})) {
    y.enable_grad();
    active_tape()->record([x, s, y, NC, P]() {
      check_finite(y.grad(), "add_channel_bias/backward");
      const float* gy = y.grad().data();
      if (x.requires_grad()) {
        Tensor xg = x;
        auto g = xg.grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
      }
      if (s.requires_grad()) {
        Tensor sg = s;
        auto g = sg.grad();
        for (std::int64_t nc = 0; nc < NC; ++nc) {
          double acc = 0.0;
          for (std::int64_t p = 0; p < P; ++p) acc += gy[nc * P + p];
          g[nc] += static_cast<float>(acc);
        }
      }
    });
  }
  return y;
}

// ----------------------------------------------------------- cross-attention

Tensor cross_attention(const Tensor& query_map, const Tensor& tokens,
                       const Tensor& wq, const Tensor& wk, const Tensor& wv) {
  require(query_map.rank() == 4, "cross_attention: query_map must be [N,C,H,W]");
  require(tokens.rank() == 3, "cross_attention: tokens must be [N,S,D]");
  const std::int64_t N = query_map.extent(0), C = query_map.extent(1),
                     H = query_map.extent(2), W = query_map.extent(3);
  const std::int64_t S = tokens.extent(1), D = tokens.extent(2);
  require(tokens.extent(0) == N, "cross_attention: batch extents differ");
  if (S < 1) {
    throw Error(errtag::kShape,
                "cross_attention: empty token set (S=0); null conditioning "
                "must use the explicit null token");
  }
  require(wq.rank() == 2 && wq.extent(1) == C,
          "cross_attention: wq must be [Dk,C] with C = " + std::to_string(C));
  const std::int64_t Dk = wq.extent(0);
  require(wk.rank() == 2 && wk.extent(0) == Dk && wk.extent(1) == D,
          "cross_attention: wk must be [Dk,D]");
  require(wv.rank() == 2 && wv.extent(0) == C && wv.extent(1) == D,
          "cross_attention: wv must be [C,D]");

  const Tensor x_tok = nchw_to_tokens(query_map);          // [N,HW,C]
  const Tensor q = linear(x_tok, wq);                      // [N,HW,Dk]
  const Tensor k = linear(tokens, wk);                     // [N,S,Dk]
  const Tensor v = linear(tokens, wv);                     // [N,S,C]
  const Tensor scores = mul_scalar(
      bmm(q, transpose_last2(k)), 1.f / std::sqrt(static_cast<float>(Dk)));
  const Tensor attn = softmax_lastdim(scores);             // [N,HW,S]
  const Tensor out = bmm(attn, v);                         // [N,HW,C]
  return add(query_map, tokens_to_nchw(out, H, W));
}

}  // namespace timecast::ops
