#include "timecast/conditioning.hpp"

#include <cmath>
#include <cstring>

#include "timecast/errors.hpp"
#include "timecast/ops.hpp"

namespace timecast::cond {

std::vector<float> encode_timestamp(float t, int l_freqs) {
  if (l_freqs < 1) throw Error(errtag::kRange, "encode_timestamp: L must be >= 1");
  if (!std::isfinite(t)) {
    throw Error(errtag::kRange, "encode_timestamp: timestamp must be finite");
  }
  std::vector<float> out(static_cast<std::size_t>(2 * l_freqs));
  const double pi = 3.14159265358979323846;
  double freq = pi;
  for (int k = 0; k < l_freqs; ++k) {
    const double phase = freq * t;
    out[static_cast<std::size_t>(2 * k)] = static_cast<float>(std::sin(phase));
    out[static_cast<std::size_t>(2 * k + 1)] = static_cast<float>(std::cos(phase));
    freq *= 2.0;
  }
  return out;
}

ContextEncoder::ContextEncoder(const std::string& name,
                               const ConditioningConfig& cfg, RandomSource& rng) {
  const int g = cfg.groups;
  c1 = nn::Conv2dLayer(name + ".c1", 1, 16, 3, 1, 1, rng);
  n1 = nn::GroupNormLayer(name + ".n1", 16, g);
  c2 = nn::Conv2dLayer(name + ".c2", 16, 24, 3, 1, 1, rng);
  n2 = nn::GroupNormLayer(name + ".n2", 24, g);
  c3 = nn::Conv2dLayer(name + ".c3", 24, 32, 3, 1, 1, rng);
  n3 = nn::GroupNormLayer(name + ".n3", 32, g);
  c4 = nn::Conv2dLayer(name + ".c4", 32, 32, 3, 1, 1, rng);
  n4 = nn::GroupNormLayer(name + ".n4", 32, g);
  head = nn::LinearLayer(name + ".head", 32, cfg.d_embed, rng);
}

Tensor ContextEncoder::forward(const Tensor& frames) const {
  using namespace ops;
  Tensor h = avg_pool2x2(silu(n1.forward(c1.forward(frames))));
  h = avg_pool2x2(silu(n2.forward(c2.forward(h))));
  h = avg_pool2x2(silu(n3.forward(c3.forward(h))));
  h = avg_pool2x2(silu(n4.forward(c4.forward(h))));
  return head.forward(global_avg_pool(h));
}

void ContextEncoder::collect(nn::ParamRefs& out) {
  c1.collect(out);
  n1.collect(out);
  c2.collect(out);
  n2.collect(out);
  c3.collect(out);
  n3.collect(out);
  c4.collect(out);
  n4.collect(out);
  head.collect(out);
}

ConditioningParams::ConditioningParams(const ConditioningConfig& cfg_,
                                       RandomSource& rng)
    : cfg(cfg_) {
  if (cfg.use_context_embedding) {
    encoder = ContextEncoder("cond.encoder", cfg, rng);
  }
  residual_weights =
      nn::Parameter("cond.residual_weights", Tensor::zeros({cfg.k_context}));
  Tensor null_init = Tensor::randn({1, cfg.token_dim()}, rng);
  for (float& v : null_init.data()) v *= 0.02f;
  null_token = nn::Parameter("cond.null_token", std::move(null_init));
}

void ConditioningParams::collect(nn::ParamRefs& out) {
  if (cfg.use_context_embedding) encoder.collect(out);
  out.push_back(&residual_weights);
  out.push_back(&null_token);
}

Tensor residual_embedding(const Tensor& embeddings, const Tensor& weights) {
  return ops::weighted_sum_rows(embeddings, ops::softmax_lastdim(weights));
}

float frame_to_model(float v) { return 2.f * v - 1.f; }

Tensor frames_to_model_tensor(const std::vector<const scene::Frame*>& frames,
                              int h, int w) {
  const std::int64_t k = static_cast<std::int64_t>(frames.size());
  Tensor out = Tensor::zeros({k, h, w});
  float* p = out.data_ptr();
  const std::size_t per = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  for (std::int64_t i = 0; i < k; ++i) {
    const scene::Frame& f = *frames[static_cast<std::size_t>(i)];
    if (f.size() != per) {
      throw Error(errtag::kShape,
                  "context frame " + std::to_string(i) + " has " +
                      std::to_string(f.size()) + " pixels, expected " +
                      std::to_string(per));
    }
    for (std::size_t j = 0; j < per; ++j) {
      p[static_cast<std::size_t>(i) * per + j] = frame_to_model(f[j]);
    }
  }
  return out;
}

namespace {
Tensor timestamp_row(float t, const ConditioningConfig& cfg) {
  std::vector<float> enc = encode_timestamp(t / cfg.time_scale, cfg.l_freqs);
  return Tensor::from_data({1, static_cast<std::int64_t>(enc.size())},
                           std::move(enc));
}
}  // namespace

ConditioningBundle assemble(const std::vector<const scene::Frame*>& context,
                            const std::vector<float>& context_times,
                            float query_time, const ConditioningParams& params) {
  const ConditioningConfig& cfg = params.cfg;
  if (static_cast<int>(context.size()) != cfg.k_context ||
      static_cast<int>(context_times.size()) != cfg.k_context) {
    throw Error(errtag::kShape,
                "assemble: expected K=" + std::to_string(cfg.k_context) +
                    " context frames with timestamps, got " +
                    std::to_string(context.size()) + "/" +
                    std::to_string(context_times.size()));
  }

  ConditioningBundle bundle;
  bundle.concat_channels =
      frames_to_model_tensor(context, cfg.image_size, cfg.image_size);

  Tensor embeddings;  // [K, d_embed]
  if (cfg.use_context_embedding) {
    // encoder sees each frame as its own batch row
    Tensor stacked = Tensor::zeros({cfg.k_context, 1, cfg.image_size, cfg.image_size});
    std::memcpy(stacked.data_ptr(), bundle.concat_channels.data_ptr(),
                sizeof(float) * static_cast<std::size_t>(stacked.numel()));
    embeddings = params.encoder.forward(stacked);
  } else {
    embeddings = Tensor::zeros({cfg.k_context, cfg.d_embed});
  }

  std::vector<Tensor> rows;
  rows.reserve(static_cast<std::size_t>(cfg.token_count()));
  for (int i = 0; i < cfg.k_context; ++i) {
    rows.push_back(ops::concat_lastdim(
        ops::slice0(embeddings, i, 1),
        timestamp_row(context_times[static_cast<std::size_t>(i)], cfg)));
  }
  rows.push_back(ops::concat_lastdim(
      residual_embedding(embeddings, params.residual_weights.tensor),
      timestamp_row(query_time, cfg)));
  rows.push_back(params.null_token.tensor);
  bundle.tokens = ops::concat0(rows);
  bundle.is_null = false;
  return bundle;
}

ConditioningBundle make_null_bundle(const ConditioningParams& params) {
  const ConditioningConfig& cfg = params.cfg;
  ConditioningBundle bundle;
  bundle.concat_channels =
      Tensor::zeros({cfg.k_context, cfg.image_size, cfg.image_size});
  std::vector<Tensor> rows(static_cast<std::size_t>(cfg.token_count()),
                           params.null_token.tensor);
  bundle.tokens = ops::concat0(rows);
  bundle.is_null = true;
  return bundle;
}

ConditioningBundle drop_for_cfg(const ConditioningBundle& bundle,
                                RandomSource& rng, float p_drop,
                                const ConditioningParams& params) {
  if (p_drop < 0.f || p_drop > 1.f) {
    throw Error(errtag::kRange, "drop_for_cfg: p_drop must be in [0,1]");
  }
  if (rng.bernoulli(p_drop)) return make_null_bundle(params);
  return bundle;
}

bool bundles_equal(const ConditioningBundle& a, const ConditioningBundle& b) {
  if (a.is_null != b.is_null) return false;
  if (a.concat_channels.shape() != b.concat_channels.shape()) return false;
  if (a.tokens.shape() != b.tokens.shape()) return false;
  const auto ac = a.concat_channels.data(), bc = b.concat_channels.data();
  if (std::memcmp(ac.data(), bc.data(), ac.size() * sizeof(float)) != 0) return false;
  const auto at = a.tokens.data(), bt = b.tokens.data();
  return std::memcmp(at.data(), bt.data(), at.size() * sizeof(float)) == 0;
}

BundleBatch stack_bundles(const std::vector<ConditioningBundle>& bundles) {
  if (bundles.empty()) throw Error(errtag::kShape, "stack_bundles: empty batch");
  std::vector<Tensor> frames, tokens;
  frames.reserve(bundles.size());
  tokens.reserve(bundles.size());
  for (const ConditioningBundle& b : bundles) {
    frames.push_back(b.concat_channels);
    tokens.push_back(b.tokens);
  }
  return BundleBatch{ops::stack0(frames), ops::stack0(tokens)};
}

}  // namespace timecast::cond
