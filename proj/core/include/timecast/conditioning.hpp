#pragma once

#include <vector>

#include "timecast/nn.hpp"
#include "timecast/scene.hpp"

namespace timecast::cond {

// gamma(t) = (sin 2^0 pi t, cos 2^0 pi t, ..., sin 2^{L-1} pi t,
// cos 2^{L-1} pi t). 2-periodic in t; callers scale timestamps into one
// period first (see ConditioningConfig::time_scale).
std::vector<float> encode_timestamp(float t, int l_freqs);

struct ConditioningConfig {
  int k_context = 3;
  int l_freqs = 8;
  int d_embed = 32;
  // Timestamps are divided by this before encoding; encodings are unique on
  // t in (-time_scale, time_scale].
  float time_scale = 12.f;
  int image_size = 32;
  int groups = 4;
  bool use_context_embedding = true;

  int token_dim() const { return d_embed + 2 * l_freqs; }
  int token_count() const { return k_context + 2; }
};

// Four downsampling conv stages (conv3x3 + 2x2 mean-pool), then a global
// average pool and a linear head to d_embed. Trained jointly with the
// denoiser; stands in for a pretrained image encoder at this scale.
struct ContextEncoder {
  nn::Conv2dLayer c1, c2, c3, c4;
  nn::GroupNormLayer n1, n2, n3, n4;
  nn::LinearLayer head;

  ContextEncoder() = default;
  ContextEncoder(const std::string& name, const ConditioningConfig& cfg,
                 RandomSource& rng);

  // frames: [B,1,H,W] in model domain -> [B, d_embed]
  Tensor forward(const Tensor& frames) const;
  void collect(nn::ParamRefs& out);
};

struct ConditioningParams {
  ConditioningConfig cfg;
  ContextEncoder encoder;          // unused when !use_context_embedding
  nn::Parameter residual_weights;  // [K]
  nn::Parameter null_token;        // [1, token_dim]

  ConditioningParams() = default;
  ConditioningParams(const ConditioningConfig& cfg, RandomSource& rng);
  void collect(nn::ParamRefs& out);
};

// Realization of f(c, t): K context frames stacked channel-wise for the
// denoiser input, plus K+2 cross-attention tokens (K frame tokens, one
// residual-target token carrying the query timestamp, one learned null
// token). Frames inside are in the model's [-1,1] domain.
struct ConditioningBundle {
  Tensor concat_channels;  // [K,H,W]; zeros when is_null
  Tensor tokens;           // [K+2, token_dim]
  bool is_null = false;
};

// Sum softmax(weights)_i * embeddings_i.
Tensor residual_embedding(const Tensor& embeddings, const Tensor& weights);

float frame_to_model(float v);
Tensor frames_to_model_tensor(const std::vector<const scene::Frame*>& frames,
                              int h, int w);  // [K,H,W]

// Timestamps must be anchored by the caller.
ConditioningBundle assemble(const std::vector<const scene::Frame*>& context,
                            const std::vector<float>& context_times,
                            float query_time, const ConditioningParams& params);

ConditioningBundle make_null_bundle(const ConditioningParams& params);

// With probability p_drop returns the null bundle, else the input unchanged.
ConditioningBundle drop_for_cfg(const ConditioningBundle& bundle,
                                RandomSource& rng, float p_drop,
                                const ConditioningParams& params);

bool bundles_equal(const ConditioningBundle& a, const ConditioningBundle& b);

// Stacked views for batched model evaluation.
struct BundleBatch {
  Tensor concat_channels;  // [B,K,H,W]
  Tensor tokens;           // [B,K+2,D]
};
BundleBatch stack_bundles(const std::vector<ConditioningBundle>& bundles);

}  // namespace timecast::cond
