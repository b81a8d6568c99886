#include "timecast/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "timecast/errors.hpp"
#include "timecast/ops.hpp"

namespace timecast::diffusion {

Tensor forward_noise(const Tensor& x, int i, const Tensor& eps,
                     const NoiseSchedule& schedule) {
  if (i < 0 || i >= schedule.n_steps) {
    throw Error(errtag::kRange,
                "forward_noise: step " + std::to_string(i) + " outside [0," +
                    std::to_string(schedule.n_steps) + ")");
  }
  if (x.shape() != eps.shape()) {
    throw Error(errtag::kShape, "forward_noise: x and eps shapes differ");
  }
  const float ab = schedule.alpha_bars[static_cast<std::size_t>(i)];
  const float a = std::sqrt(ab);
  const float b = std::sqrt(1.f - ab);
  Tensor z = Tensor::zeros(x.shape());
  const auto px = x.data(), pe = eps.data();
  auto pz = z.data();
  for (std::size_t j = 0; j < pz.size(); ++j) pz[j] = a * px[j] + b * pe[j];
  return z;
}

Tensor cfg_combine(const Tensor& eps_cond, const Tensor& eps_uncond, float g) {
  if (eps_cond.shape() != eps_uncond.shape()) {
    throw Error(errtag::kShape, "cfg_combine: shapes differ");
  }
  if (g < 0.f) throw Error(errtag::kRange, "cfg_combine: guidance must be >= 0");
  if (g == 1.f) return eps_cond;
  if (g == 0.f) return eps_uncond;
  Tensor out = Tensor::zeros(eps_cond.shape());
  const auto c = eps_cond.data(), u = eps_uncond.data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = u[i] + g * (c[i] - u[i]);
  return out;
}

// ------------------------------------------------------------ ForecastModel

ForecastModel::ForecastModel(const ModelConfig& cfg_, std::uint64_t init_seed)
    : cfg(cfg_) {
  RandomSource rng(mix_seed(init_seed, 0x10de1u));
  if (cfg.use_cross_attention) {
    conditioning.emplace(cfg.conditioning, rng);
  }
  unet = UNet(cfg, rng);
}

nn::ParamRefs ForecastModel::parameters() {
  nn::ParamRefs out;
  if (conditioning) conditioning->collect(out);
  unet.collect(out);
  nn::check_unique_names(out);
  return out;
}

Tensor ForecastModel::predict_eps(
    const Tensor& z, const std::vector<int>& steps,
    const std::vector<cond::ConditioningBundle>& bundles) const {
  if (static_cast<std::int64_t>(bundles.size()) != z.extent(0)) {
    throw Error(errtag::kShape, "predict_eps: bundle count != batch size");
  }
  std::vector<Tensor> frames;
  frames.reserve(bundles.size());
  for (const auto& b : bundles) frames.push_back(b.concat_channels);
  Tensor x_in = ops::concat_channels(z, ops::stack0(frames));
  Tensor tokens;
  if (cfg.use_cross_attention) {
    std::vector<Tensor> tok;
    tok.reserve(bundles.size());
    for (const auto& b : bundles) tok.push_back(b.tokens);
    tokens = ops::stack0(tok);
  }
  return unet.forward(x_in, steps, tokens);
}

EpsModel ForecastModel::eps_model() const {
  return [this](const Tensor& z, const std::vector<int>& steps,
                const std::vector<cond::ConditioningBundle>& bundles) {
    return predict_eps(z, steps, bundles);
  };
}

cond::ConditioningBundle ForecastModel::make_bundle(
    const std::vector<const scene::Frame*>& context,
    const std::vector<float>& context_times, float query_time) const {
  if (conditioning) {
    return cond::assemble(context, context_times, query_time, *conditioning);
  }
  cond::ConditioningBundle bundle;
  bundle.concat_channels = cond::frames_to_model_tensor(
      context, cfg.image_size, cfg.image_size);
  bundle.is_null = false;
  return bundle;
}

cond::ConditioningBundle ForecastModel::make_null() const {
  if (conditioning) return cond::make_null_bundle(*conditioning);
  cond::ConditioningBundle bundle;
  bundle.concat_channels =
      Tensor::zeros({cfg.k_context, cfg.image_size, cfg.image_size});
  bundle.is_null = true;
  return bundle;
}

scene::Frame ForecastModel::predict_frame(
    const std::vector<const scene::Frame*>& context,
    const std::vector<float>& context_times, float query_time) const {
  const cond::ConditioningBundle bundle =
      make_bundle(context, context_times, query_time);
  Tensor z = Tensor::zeros({1, 1, cfg.image_size, cfg.image_size});
  Tensor out = predict_eps(z, {0}, {bundle});
  return frame_from_latent_row(out, 0);
}

// ------------------------------------------------------------ training loss

Tensor training_loss(
    const std::vector<scene::TrainingSample>& batch, const EpsModel& model,
    const std::function<cond::ConditioningBundle(const scene::TrainingSample&)>&
        make_bundle,
    const std::function<cond::ConditioningBundle()>& make_null,
    const NoiseSchedule& schedule, RandomSource& rng, float p_drop) {
  if (batch.empty()) throw Error(errtag::kShape, "training_loss: empty batch");
  if (p_drop < 0.f || p_drop > 1.f) {
    throw Error(errtag::kRange, "training_loss: p_drop must be in [0,1]");
  }
  const std::int64_t b = static_cast<std::int64_t>(batch.size());
  const std::size_t pixels = batch[0].target.size();
  const std::int64_t hw = static_cast<std::int64_t>(std::lround(
      std::sqrt(static_cast<double>(pixels))));
  if (hw * hw != static_cast<std::int64_t>(pixels)) {
    throw Error(errtag::kShape, "training_loss: target frames must be square");
  }

  Tensor z = Tensor::zeros({b, 1, hw, hw});
  Tensor eps_target = Tensor::zeros({b, 1, hw, hw});
  std::vector<int> steps(static_cast<std::size_t>(b));
  std::vector<cond::ConditioningBundle> bundles;
  bundles.reserve(static_cast<std::size_t>(b));

  for (std::int64_t s = 0; s < b; ++s) {
    const scene::TrainingSample& sample = batch[static_cast<std::size_t>(s)];
    if (sample.target.size() != pixels) {
      throw Error(errtag::kShape, "training_loss: inconsistent frame sizes");
    }
    const int i = rng.uniform_int(0, schedule.n_steps - 1);
    steps[static_cast<std::size_t>(s)] = i;

    float* eps_row = eps_target.data_ptr() + s * hw * hw;
    rng.fill_normal(std::span<float>(eps_row, static_cast<std::size_t>(hw * hw)));

    cond::ConditioningBundle bundle = make_bundle(sample);
    if (rng.bernoulli(p_drop)) bundle = make_null();
    bundles.push_back(std::move(bundle));

    const float ab = schedule.alpha_bars[static_cast<std::size_t>(i)];
    const float ca = std::sqrt(ab), cb = std::sqrt(1.f - ab);
    float* z_row = z.data_ptr() + s * hw * hw;
    for (std::size_t p = 0; p < pixels; ++p) {
      const float x = cond::frame_to_model(sample.target[p]);
      z_row[p] = ca * x + cb * eps_row[p];
    }
  }

  Tensor eps_hat = model(z, steps, bundles);
  return ops::mse_loss(eps_hat, eps_target);
}

// ---------------------------------------------------------------- sampling

Tensor guided_eps(const Tensor& z, int step,
                  const std::vector<cond::ConditioningBundle>& bundles,
                  const cond::ConditioningBundle& null_bundle, float guidance,
                  const EpsModel& model) {
  const std::int64_t b = z.extent(0);
  const std::vector<int> steps(static_cast<std::size_t>(b), step);
  if (guidance == 1.f) return model(z, steps, bundles);
  if (guidance == 0.f) {
    const std::vector<cond::ConditioningBundle> nulls(
        static_cast<std::size_t>(b), null_bundle);
    return model(z, steps, nulls);
  }
  // one evaluation over [conditioned rows; null rows]
  Tensor z2 = Tensor::zeros({2 * b, z.extent(1), z.extent(2), z.extent(3)});
  const std::int64_t per = z.numel() / b;
  std::memcpy(z2.data_ptr(), z.data_ptr(), sizeof(float) * z.numel());
  std::memcpy(z2.data_ptr() + z.numel(), z.data_ptr(), sizeof(float) * z.numel());
  std::vector<cond::ConditioningBundle> both = bundles;
  both.insert(both.end(), static_cast<std::size_t>(b), null_bundle);
  const std::vector<int> steps2(static_cast<std::size_t>(2 * b), step);
  Tensor eps2 = model(z2, steps2, both);

  Tensor out = Tensor::zeros(z.shape());
  const float* pc = eps2.data_ptr();
  const float* pu = eps2.data_ptr() + b * per;
  float* po = out.data_ptr();
  for (std::int64_t i = 0; i < b * per; ++i) {
    po[i] = pu[i] + guidance * (pc[i] - pu[i]);
  }
  return out;
}

DdpmStepper::DdpmStepper(const NoiseSchedule& s, int n_inference_steps)
    : schedule(&s), steps(select_inference_steps(s.n_steps, n_inference_steps)) {}

namespace {
inline float clamp_latent(float v) { return std::clamp(v, -1.f, 1.f); }
}  // namespace

Tensor DdpmStepper::transition(const Tensor& z, const Tensor& eps_hat, int t,
                               std::vector<RandomSource>& noise) const {
  if (t < 1 || t >= static_cast<int>(steps.size())) {
    throw Error(errtag::kRange, "DdpmStepper::transition: bad step index");
  }
  const float ab_t = schedule->alpha_bars[static_cast<std::size_t>(
      steps[static_cast<std::size_t>(t)])];
  const float ab_p = schedule->alpha_bars[static_cast<std::size_t>(
      steps[static_cast<std::size_t>(t - 1)])];
  const float alpha_eff = ab_t / ab_p;
  const float sqrt_ab_t = std::sqrt(ab_t);
  const float sqrt_om_ab_t = std::sqrt(1.f - ab_t);
  const float c0 = std::sqrt(ab_p) * (1.f - alpha_eff) / (1.f - ab_t);
  const float cz = std::sqrt(alpha_eff) * (1.f - ab_p) / (1.f - ab_t);
  const float sigma =
      std::sqrt((1.f - alpha_eff) * (1.f - ab_p) / (1.f - ab_t));

  const std::int64_t b = z.extent(0);
  const std::int64_t per = z.numel() / b;
  if (static_cast<std::int64_t>(noise.size()) != b) {
    throw Error(errtag::kShape, "DdpmStepper: one noise source per batch row");
  }
  Tensor out = Tensor::zeros(z.shape());
  const float* pz = z.data_ptr();
  const float* pe = eps_hat.data_ptr();
  float* po = out.data_ptr();
  for (std::int64_t r = 0; r < b; ++r) {
    RandomSource& src = noise[static_cast<std::size_t>(r)];
    for (std::int64_t i = r * per; i < (r + 1) * per; ++i) {
      const float x0 = clamp_latent((pz[i] - sqrt_om_ab_t * pe[i]) / sqrt_ab_t);
      po[i] = c0 * x0 + cz * pz[i] + sigma * src.normal();
    }
  }
  check_finite(out, "ddpm_transition");
  return out;
}

Tensor DdpmStepper::final_decode(const Tensor& z, const Tensor& eps_hat) const {
  const float ab = schedule->alpha_bars[static_cast<std::size_t>(steps.front())];
  const float sa = std::sqrt(ab), sb = std::sqrt(1.f - ab);
  Tensor out = Tensor::zeros(z.shape());
  const float* pz = z.data_ptr();
  const float* pe = eps_hat.data_ptr();
  float* po = out.data_ptr();
  for (std::int64_t i = 0; i < z.numel(); ++i) {
    po[i] = clamp_latent((pz[i] - sb * pe[i]) / sa);
  }
  check_finite(out, "ddpm_final_decode");
  return out;
}

float frame_from_latent(float v) {
  return std::clamp(0.5f * (v + 1.f), 0.f, 1.f);
}

scene::Frame frame_from_latent_row(const Tensor& frames, std::int64_t row) {
  const std::int64_t per = frames.numel() / frames.extent(0);
  scene::Frame out(static_cast<std::size_t>(per));
  const float* p = frames.data_ptr() + row * per;
  for (std::int64_t i = 0; i < per; ++i) {
    out[static_cast<std::size_t>(i)] = frame_from_latent(p[i]);
  }
  return out;
}

Tensor ddpm_sample_batch(const std::vector<cond::ConditioningBundle>& bundles,
                         const EpsModel& model, const NoiseSchedule& schedule,
                         const SamplerConfig& config,
                         std::vector<RandomSource>& noise,
                         const cond::ConditioningBundle& null_bundle) {
  if (bundles.empty()) throw Error(errtag::kShape, "ddpm_sample_batch: no bundles");
  if (noise.size() != bundles.size()) {
    throw Error(errtag::kShape, "ddpm_sample_batch: one noise source per bundle");
  }
  const std::int64_t b = static_cast<std::int64_t>(bundles.size());
  const std::int64_t hw = bundles[0].concat_channels.extent(1);
  const std::int64_t ww = bundles[0].concat_channels.extent(2);

  DdpmStepper stepper(schedule, config.n_inference_steps);
  Tensor z = Tensor::zeros({b, 1, hw, ww});
  for (std::int64_t r = 0; r < b; ++r) {
    float* row = z.data_ptr() + r * hw * ww;
    noise[static_cast<std::size_t>(r)].fill_normal(
        std::span<float>(row, static_cast<std::size_t>(hw * ww)));
  }

  for (int t = static_cast<int>(stepper.steps.size()) - 1; t >= 1; --t) {
    const Tensor eps = guided_eps(z, stepper.steps[static_cast<std::size_t>(t)],
                                  bundles, null_bundle, config.guidance, model);
    z = stepper.transition(z, eps, t, noise);
  }
  const Tensor eps = guided_eps(z, stepper.steps.front(), bundles, null_bundle,
                                config.guidance, model);
  const Tensor x0 = stepper.final_decode(z, eps);

  Tensor frames = Tensor::zeros(x0.shape());
  const float* p = x0.data_ptr();
  float* q = frames.data_ptr();
  for (std::int64_t i = 0; i < x0.numel(); ++i) q[i] = frame_from_latent(p[i]);
  return frames;
}

Tensor ddpm_sample(const cond::ConditioningBundle& bundle, const EpsModel& model,
                   const NoiseSchedule& schedule, const SamplerConfig& config,
                   RandomSource& noise,
                   const cond::ConditioningBundle& null_bundle) {
  std::vector<cond::ConditioningBundle> bundles{bundle};
  std::vector<RandomSource> sources{noise};
  Tensor out = ddpm_sample_batch(bundles, model, schedule, config, sources,
                                 null_bundle);
  noise = sources[0];  // hand the advanced stream back to the caller
  return out;
}

}  // namespace timecast::diffusion
