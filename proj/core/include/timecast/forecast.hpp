#pragma once

#include <functional>
#include <string>
#include <vector>

#include "timecast/diffusion.hpp"

namespace timecast::forecast {

enum class SamplerKind {
  kDirect,
  kAutoregressive,
  kHierarchical,
  kMixed,
  kConstant,
  kLinear,
  kRegression,
};

std::string sampler_name(SamplerKind kind);
SamplerKind parse_sampler(const std::string& name);
bool sampler_needs_model(SamplerKind kind);

struct ForecastRequest {
  std::vector<scene::Frame> history;   // K frames, oldest first
  std::vector<float> history_times;    // strictly increasing, raw seconds
  std::vector<float> queries;          // raw seconds, same time base, distinct
  int samples_per_query = 1;           // k trajectories
  float w_m = 2.0f;                    // mixing guidance
  diffusion::SamplerConfig sampler;
  std::uint64_t seed = 0;
};

// Which frames conditioned each generated frame.
struct FrameProvenance {
  std::vector<float> window_times;     // raw seconds
  std::vector<bool> window_predicted;  // false = real history
};

struct TrajectorySample {
  std::vector<scene::Frame> frames;  // aligned to request.queries
  std::vector<FrameProvenance> provenance;
};

// Model access used by the samplers; mocked by tests with stub predictors.
// make_bundle receives anchored context times, the anchored query, and the
// raw anchor time (so absolute-timestamp models can undo the shift).
struct ModelHooks {
  diffusion::EpsModel eps;
  std::function<cond::ConditioningBundle(
      const std::vector<const scene::Frame*>&, const std::vector<float>&,
      float, float)>
      make_bundle;
  std::function<cond::ConditioningBundle()> make_null;
};

ModelHooks hooks_for(const diffusion::ForecastModel& model);

// Every query conditioned on the real history only; accepts fractional and
// negative (non-forward) query timestamps.
std::vector<TrajectorySample> sample_direct(const ForecastRequest& request,
                                            const ModelHooks& hooks,
                                            const diffusion::NoiseSchedule& schedule);

// Query j conditioned on the K most recent frames among history and
// previously generated frames, re-anchored per step. Queries must be sorted
// strictly ascending and lie after the last history frame.
std::vector<TrajectorySample> sample_autoregressive(
    const ForecastRequest& request, const ModelHooks& hooks,
    const diffusion::NoiseSchedule& schedule);

// Coarse-to-fine filling over evenly spaced queries: the final query first,
// then midpoints of already-fixed neighbors, conditioning on the K
// temporally nearest fixed frames.
std::vector<TrajectorySample> sample_hierarchical(
    const ForecastRequest& request, const ModelHooks& hooks,
    const diffusion::NoiseSchedule& schedule);

// Autoregressive rollout whose per-step noise prediction is
// eps_A + w_m * (eps_D - eps_A) on a shared latent, with eps_D conditioned
// on the real history. w_m = 0 is bit-identical to sample_autoregressive.
std::vector<TrajectorySample> sample_mixed(const ForecastRequest& request,
                                           const ModelHooks& hooks,
                                           const diffusion::NoiseSchedule& schedule);

// Hierarchical deterministic fill order over query indices, grouped by
// recursion depth (e.g. T=8 -> {8},{4},{2,6},{1,3,5,7} in 1-based terms).
std::vector<std::vector<int>> hierarchical_fill_order(int n_queries);

std::vector<TrajectorySample> baseline_constant(const ForecastRequest& request);
std::vector<TrajectorySample> baseline_linear(const ForecastRequest& request);

// Deterministic single-frame predictor applied autoregressively for
// multi-query requests.
using FramePredictor = std::function<scene::Frame(
    const std::vector<const scene::Frame*>&, const std::vector<float>&, float)>;
std::vector<TrajectorySample> baseline_regression(const ForecastRequest& request,
                                                  const FramePredictor& predict);

// Dispatch by kind (model hooks may be empty for the non-learned baselines).
std::vector<TrajectorySample> run_sampler(SamplerKind kind,
                                          const ForecastRequest& request,
                                          const ModelHooks* hooks,
                                          const FramePredictor* regressor,
                                          const diffusion::NoiseSchedule& schedule);

}  // namespace timecast::forecast
