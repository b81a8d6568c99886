#include "timecast/unet.hpp"

#include <cmath>

#include "timecast/errors.hpp"
#include "timecast/ops.hpp"

namespace timecast::diffusion {

ModelConfig ModelConfig::defaults() {
  ModelConfig cfg;
  cfg.conditioning.image_size = cfg.image_size;
  cfg.conditioning.k_context = cfg.k_context;
  return cfg;
}

ModelConfig ModelConfig::tiny16() {
  ModelConfig cfg;
  cfg.image_size = 16;
  cfg.widths = {8, 12, 16};
  cfg.key_dim = 8;
  cfg.step_embed_dim = 16;
  cfg.conditioning.image_size = 16;
  cfg.conditioning.d_embed = 8;
  cfg.conditioning.l_freqs = 4;
  return cfg;
}

ResBlock::ResBlock(const std::string& name, int in_ch, int out_ch, int step_dim,
                   int token_dim, int key_dim, int groups, bool with_attention,
                   RandomSource& rng) {
  n1 = nn::GroupNormLayer(name + ".n1", in_ch, groups);
  c1 = nn::Conv2dLayer(name + ".c1", in_ch, out_ch, 3, 1, 1, rng);
  step_proj = nn::LinearLayer(name + ".step_proj", step_dim, out_ch, rng);
  n2 = nn::GroupNormLayer(name + ".n2", out_ch, groups);
  c2 = nn::Conv2dLayer(name + ".c2", out_ch, out_ch, 3, 1, 1, rng, /*zero_init=*/true);
  if (in_ch != out_ch) {
    skip = nn::Conv2dLayer(name + ".skip", in_ch, out_ch, 1, 1, 0, rng);
  }
  if (with_attention) {
    attn = nn::CrossAttentionLayer(name + ".attn", out_ch, token_dim, key_dim, rng);
  }
}

Tensor ResBlock::forward(const Tensor& x, const Tensor& step_emb,
                         const Tensor& tokens) const {
  using namespace ops;
  Tensor h = c1.forward(silu(n1.forward(x)));
  h = add_channel_bias(h, step_proj.forward(silu(step_emb)));
  h = c2.forward(silu(n2.forward(h)));
  Tensor s = skip ? skip->forward(x) : x;
  Tensor y = add(h, s);
  if (attn) y = attn->forward(y, tokens);
  return y;
}

void ResBlock::collect(nn::ParamRefs& out) {
  n1.collect(out);
  c1.collect(out);
  step_proj.collect(out);
  n2.collect(out);
  c2.collect(out);
  if (skip) skip->collect(out);
  if (attn) attn->collect(out);
}

UNet::UNet(const ModelConfig& cfg_, RandomSource& rng) : cfg(cfg_) {
  if (cfg.widths.size() != 3) {
    throw Error(errtag::kConfig, "UNet expects exactly 3 resolution widths");
  }
  const int w0 = cfg.widths[0], w1 = cfg.widths[1], w2 = cfg.widths[2];
  const int sd = cfg.step_embed_dim;
  const int td = cfg.conditioning.token_dim();
  const int kd = cfg.key_dim;
  const int g = cfg.groups;
  const bool xa = cfg.use_cross_attention;

  step_mlp1 = nn::LinearLayer("unet.step_mlp1", sd / 2, sd, rng);
  step_mlp2 = nn::LinearLayer("unet.step_mlp2", sd, sd, rng);
  stem = nn::Conv2dLayer("unet.stem", 1 + cfg.k_context, w0, 3, 1, 1, rng);
  enc0 = ResBlock("unet.enc0", w0, w0, sd, td, kd, g, xa, rng);
  down0 = nn::Conv2dLayer("unet.down0", w0, w1, 3, 1, 1, rng);
  enc1 = ResBlock("unet.enc1", w1, w1, sd, td, kd, g, xa, rng);
  down1 = nn::Conv2dLayer("unet.down1", w1, w2, 3, 1, 1, rng);
  mid = ResBlock("unet.mid", w2, w2, sd, td, kd, g, xa, rng);
  up1 = nn::Conv2dLayer("unet.up1", w2, w1, 3, 1, 1, rng);
  dec1 = ResBlock("unet.dec1", 2 * w1, w1, sd, td, kd, g, xa, rng);
  up0 = nn::Conv2dLayer("unet.up0", w1, w0, 3, 1, 1, rng);
  dec0 = ResBlock("unet.dec0", 2 * w0, w0, sd, td, kd, g, xa, rng);
  head_norm = nn::GroupNormLayer("unet.head_norm", w0, g);
  head_conv = nn::Conv2dLayer("unet.head_conv", w0, 1, 3, 1, 1, rng, /*zero_init=*/true);
}

Tensor step_embedding(const std::vector<int>& steps, int dim) {
  if (dim % 2 != 0) throw Error(errtag::kConfig, "step embedding dim must be even");
  const int half = dim / 2;
  Tensor out = Tensor::zeros({static_cast<std::int64_t>(steps.size()), dim});
  float* p = out.data_ptr();
  for (std::size_t n = 0; n < steps.size(); ++n) {
    for (int j = 0; j < half; ++j) {
      const double freq =
          std::exp(-std::log(10000.0) * static_cast<double>(j) / half);
      const double phase = static_cast<double>(steps[n]) * freq;
      p[n * static_cast<std::size_t>(dim) + static_cast<std::size_t>(j)] =
          static_cast<float>(std::sin(phase));
      p[n * static_cast<std::size_t>(dim) + static_cast<std::size_t>(half + j)] =
          static_cast<float>(std::cos(phase));
    }
  }
  return out;
}

Tensor UNet::forward(const Tensor& x_in, const std::vector<int>& steps,
                     const Tensor& tokens) const {
  using namespace ops;
  const std::int64_t n = x_in.extent(0);
  if (static_cast<std::int64_t>(steps.size()) != n) {
    throw Error(errtag::kShape, "UNet: steps count != batch size");
  }
  if (x_in.extent(1) != 1 + cfg.k_context) {
    throw Error(errtag::kShape,
                "UNet: expected " + std::to_string(1 + cfg.k_context) +
                    " input channels, got " + std::to_string(x_in.extent(1)));
  }
  if (cfg.use_cross_attention && !tokens.defined()) {
    throw Error(errtag::kShape, "UNet: cross-attention enabled but no tokens given");
  }

  Tensor e = step_mlp2.forward(silu(step_mlp1.forward(
      step_embedding(steps, cfg.step_embed_dim / 2))));

  Tensor h0 = enc0.forward(stem.forward(x_in), e, tokens);
  Tensor h1 = enc1.forward(down0.forward(avg_pool2x2(h0)), e, tokens);
  Tensor m = mid.forward(down1.forward(avg_pool2x2(h1)), e, tokens);
  Tensor u1 = dec1.forward(
      concat_channels(up1.forward(upsample_nearest2(m)), h1), e, tokens);
  Tensor u0 = dec0.forward(
      concat_channels(up0.forward(upsample_nearest2(u1)), h0), e, tokens);
  return head_conv.forward(silu(head_norm.forward(u0)));
}

void UNet::collect(nn::ParamRefs& out) {
  step_mlp1.collect(out);
  step_mlp2.collect(out);
  stem.collect(out);
  enc0.collect(out);
  down0.collect(out);
  enc1.collect(out);
  down1.collect(out);
  mid.collect(out);
  up1.collect(out);
  dec1.collect(out);
  up0.collect(out);
  dec0.collect(out);
  head_norm.collect(out);
  head_conv.collect(out);
}

}  // namespace timecast::diffusion
