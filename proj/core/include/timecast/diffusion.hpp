#pragma once

#include <functional>
#include <optional>

#include "timecast/conditioning.hpp"
#include "timecast/noise_schedule.hpp"
#include "timecast/unet.hpp"

namespace timecast::diffusion {

// z_i = sqrt(alpha_bar_i) * x + sqrt(1 - alpha_bar_i) * eps
Tensor forward_noise(const Tensor& x, int i, const Tensor& eps,
                     const NoiseSchedule& schedule);

// eps_uncond + g * (eps_cond - eps_uncond); exact at g == 0 and g == 1.
Tensor cfg_combine(const Tensor& eps_cond, const Tensor& eps_uncond, float g);

struct SamplerConfig {
  int n_inference_steps = 40;
  float guidance = 2.0f;
};

// Batched noise predictor: z [B,1,H,W], per-sample steps, per-sample bundles.
using EpsModel =
    std::function<Tensor(const Tensor&, const std::vector<int>&,
                         const std::vector<cond::ConditioningBundle>&)>;

// Full model: conditioning parameters plus the denoising UNet. With
// cross-attention disabled (the regression baseline) no conditioning
// parameters exist and the token stream is absent.
struct ForecastModel {
  ModelConfig cfg;
  std::optional<cond::ConditioningParams> conditioning;
  UNet unet;

  ForecastModel(const ModelConfig& cfg, std::uint64_t init_seed);

  nn::ParamRefs parameters();

  Tensor predict_eps(const Tensor& z, const std::vector<int>& steps,
                     const std::vector<cond::ConditioningBundle>& bundles) const;
  EpsModel eps_model() const;

  cond::ConditioningBundle make_bundle(
      const std::vector<const scene::Frame*>& context,
      const std::vector<float>& context_times, float query_time) const;
  cond::ConditioningBundle make_null() const;

  // Deterministic single forward (regression baseline): the network output
  // is read as the frame itself.
  scene::Frame predict_frame(const std::vector<const scene::Frame*>& context,
                             const std::vector<float>& context_times,
                             float query_time) const;
};

// Eq.-style noise-prediction objective: per sample draw i ~ U[0, n_steps),
// draw eps, apply CFG dropout to the bundle, and return the batch-mean MSE
// between eps and the model's prediction.
Tensor training_loss(
    const std::vector<scene::TrainingSample>& batch, const EpsModel& model,
    const std::function<cond::ConditioningBundle(const scene::TrainingSample&)>&
        make_bundle,
    const std::function<cond::ConditioningBundle()>& make_null,
    const NoiseSchedule& schedule, RandomSource& rng, float p_drop);

// Classifier-free-guided noise prediction on a shared batch: evaluates the
// conditioned and null branches and combines with `guidance`.
Tensor guided_eps(const Tensor& z, int step,
                  const std::vector<cond::ConditioningBundle>& bundles,
                  const cond::ConditioningBundle& null_bundle, float guidance,
                  const EpsModel& model);

// Reverse-process stepping over an ascending selected-step subsequence.
// Transitions use the alpha_bar ratio of consecutive selected steps and add
// posterior-variance noise; the final decode is noise-free.
struct DdpmStepper {
  const NoiseSchedule* schedule = nullptr;
  std::vector<int> steps;  // ascending

  DdpmStepper(const NoiseSchedule& s, int n_inference_steps);

  // t indexes into `steps`, t >= 1: z at steps[t] -> z at steps[t-1].
  Tensor transition(const Tensor& z, const Tensor& eps_hat, int t,
                    std::vector<RandomSource>& noise) const;
  // At steps[0]: predicted x0, clamped to the model domain [-1,1].
  Tensor final_decode(const Tensor& z, const Tensor& eps_hat) const;
};

// Strided DDPM with classifier-free guidance. One noise source per batch
// row; output frames are in [0,1], shape [B,1,H,W].
Tensor ddpm_sample_batch(const std::vector<cond::ConditioningBundle>& bundles,
                         const EpsModel& model, const NoiseSchedule& schedule,
                         const SamplerConfig& config,
                         std::vector<RandomSource>& noise,
                         const cond::ConditioningBundle& null_bundle);

Tensor ddpm_sample(const cond::ConditioningBundle& bundle, const EpsModel& model,
                   const NoiseSchedule& schedule, const SamplerConfig& config,
                   RandomSource& noise,
                   const cond::ConditioningBundle& null_bundle);

// Domain maps between [0,1] frames and the [-1,1] model domain.
float frame_from_latent(float v);
scene::Frame frame_from_latent_row(const Tensor& frames, std::int64_t row);

}  // namespace timecast::diffusion
