#pragma once

#include <vector>

#include "timecast/tensor.hpp"

namespace timecast::ops {

// Elementwise; shapes must match exactly.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, float s);
Tensor mul_scalar(const Tensor& a, float s);

// y = x @ W^T (+ b). x: [..., in], W: [out, in], b: [out].
Tensor linear(const Tensor& x, const Tensor& w);
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// Batched matmul: [B,M,K] x [B,K,N] -> [B,M,N].
Tensor bmm(const Tensor& a, const Tensor& b);
Tensor transpose_last2(const Tensor& x);

// x: [N,C,H,W], w: [F,C,kh,kw], b: [F]. kh/kw odd; output extents must
// divide exactly: H' = (H + 2*padding - kh)/stride + 1.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
              int padding);

Tensor silu(const Tensor& x);
Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  int groups, float eps = 1e-5f);
Tensor softmax_lastdim(const Tensor& x);

Tensor sum_all(const Tensor& x);   // -> rank-0 scalar
Tensor mean_all(const Tensor& x);  // -> rank-0 scalar
Tensor mse_loss(const Tensor& pred, const Tensor& target);  // mean over all

// Layout ops (all materialize copies; backward routes gradients exactly).
Tensor concat_channels(const Tensor& a, const Tensor& b);  // [N,*,H,W]
Tensor concat0(const std::vector<Tensor>& parts);          // along axis 0
Tensor stack0(const std::vector<Tensor>& parts);           // new leading axis
Tensor concat_lastdim(const Tensor& a, const Tensor& b);
Tensor slice0(const Tensor& x, std::int64_t start, std::int64_t count);

// y[0,:] = sum_i w[i] * e[i,:]. e: [K,D], w: [K] -> [1,D].
Tensor weighted_sum_rows(const Tensor& e, const Tensor& w);

Tensor nchw_to_tokens(const Tensor& x);  // [N,C,H,W] -> [N,H*W,C]
Tensor tokens_to_nchw(const Tensor& x, std::int64_t h, std::int64_t w);

Tensor upsample_nearest2(const Tensor& x);            // [N,C,H,W] -> 2H,2W
Tensor avg_pool2x2(const Tensor& x);                  // H,W even
Tensor global_avg_pool(const Tensor& x);              // [N,C,H,W] -> [N,C]
Tensor add_channel_bias(const Tensor& x, const Tensor& s);  // s: [N,C]

// Per-pixel softmax attention of a feature map over S conditioning tokens,
// added residually to the map. wq: [Dk,C], wk: [Dk,D], wv: [C,D]. S >= 1.
Tensor cross_attention(const Tensor& query_map, const Tensor& tokens,
                       const Tensor& wq, const Tensor& wk, const Tensor& wv);

}  // namespace timecast::ops
