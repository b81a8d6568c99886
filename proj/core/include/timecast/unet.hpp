#pragma once

#include <optional>
#include <vector>

#include "timecast/conditioning.hpp"
#include "timecast/nn.hpp"

namespace timecast::diffusion {

struct ModelConfig {
  int image_size = 32;
  int k_context = 3;
  // channel widths at the three resolutions (image_size, /2, /4)
  std::vector<int> widths = {32, 48, 64};
  int groups = 4;
  int key_dim = 32;
  int step_embed_dim = 64;
  bool use_cross_attention = true;
  bool anchor_timestamps = true;  // false: condition on absolute times
  cond::ConditioningConfig conditioning;

  static ModelConfig defaults();
  static ModelConfig tiny16();  // gradcheck-scale configuration
};

// Residual block: GN -> SiLU -> conv, + step-embedding projection,
// GN -> SiLU -> conv (zero-init), + skip; cross-attention over the
// conditioning tokens on the output.
struct ResBlock {
  nn::GroupNormLayer n1;
  nn::Conv2dLayer c1;
  nn::LinearLayer step_proj;
  nn::GroupNormLayer n2;
  nn::Conv2dLayer c2;
  std::optional<nn::Conv2dLayer> skip;
  std::optional<nn::CrossAttentionLayer> attn;

  ResBlock() = default;
  ResBlock(const std::string& name, int in_ch, int out_ch, int step_dim,
           int token_dim, int key_dim, int groups, bool with_attention,
           RandomSource& rng);

  Tensor forward(const Tensor& x, const Tensor& step_emb,
                 const Tensor& tokens) const;
  void collect(nn::ParamRefs& out);
};

// Denoiser: input is the noisy frame channel-concatenated with the K context
// frames; conditioning tokens are cross-attended at every resolution; the
// diffusion-step embedding is added in every block. Output is the predicted
// noise at frame shape.
struct UNet {
  ModelConfig cfg;
  nn::LinearLayer step_mlp1, step_mlp2;
  nn::Conv2dLayer stem;
  ResBlock enc0, enc1, mid, dec1, dec0;
  nn::Conv2dLayer down0, down1;  // conv after 2x2 mean-pool
  nn::Conv2dLayer up1, up0;      // conv after nearest-neighbor 2x upsample
  nn::GroupNormLayer head_norm;
  nn::Conv2dLayer head_conv;

  UNet() = default;
  UNet(const ModelConfig& cfg, RandomSource& rng);

  // x_in: [N,1+K,H,W]; steps: per-sample diffusion step indices;
  // tokens: [N,S,D] (ignored when cross-attention is disabled)
  Tensor forward(const Tensor& x_in, const std::vector<int>& steps,
                 const Tensor& tokens) const;
  void collect(nn::ParamRefs& out);
};

// Sinusoidal embedding of integer diffusion steps (classic 10000-base).
Tensor step_embedding(const std::vector<int>& steps, int dim);

}  // namespace timecast::diffusion
