#include "timecast/forecast.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "timecast/errors.hpp"

namespace timecast::forecast {

std::string sampler_name(SamplerKind kind) {
  switch (kind) {
    case SamplerKind::kDirect: return "direct";
    case SamplerKind::kAutoregressive: return "autoregressive";
    case SamplerKind::kHierarchical: return "hierarchical";
    case SamplerKind::kMixed: return "mixed";
    case SamplerKind::kConstant: return "constant";
    case SamplerKind::kLinear: return "linear";
    case SamplerKind::kRegression: return "regression";
  }
  throw Error(errtag::kArgs, "unknown sampler kind");
}

SamplerKind parse_sampler(const std::string& name) {
  if (name == "direct") return SamplerKind::kDirect;
  if (name == "autoregressive") return SamplerKind::kAutoregressive;
  if (name == "hierarchical") return SamplerKind::kHierarchical;
  if (name == "mixed") return SamplerKind::kMixed;
  if (name == "constant") return SamplerKind::kConstant;
  if (name == "linear") return SamplerKind::kLinear;
  if (name == "regression") return SamplerKind::kRegression;
  throw Error(errtag::kArgs, "unknown sampler: " + name);
}

bool sampler_needs_model(SamplerKind kind) {
  return kind == SamplerKind::kDirect || kind == SamplerKind::kAutoregressive ||
         kind == SamplerKind::kHierarchical || kind == SamplerKind::kMixed;
}

ModelHooks hooks_for(const diffusion::ForecastModel& model) {
  ModelHooks hooks;
  hooks.eps = model.eps_model();
  hooks.make_bundle = [&model](const std::vector<const scene::Frame*>& ctx,
                               const std::vector<float>& times, float query,
                               float anchor) {
    if (model.cfg.anchor_timestamps) return model.make_bundle(ctx, times, query);
    std::vector<float> absolute = times;
    for (float& t : absolute) t += anchor;
    return model.make_bundle(ctx, absolute, query + anchor);
  };
  hooks.make_null = [&model]() { return model.make_null(); };
  return hooks;
}

namespace {

void validate_common(const ForecastRequest& req) {
  if (req.history.empty() || req.history.size() != req.history_times.size()) {
    throw Error(errtag::kShape, "forecast: history frames/timestamps mismatch");
  }
  for (std::size_t i = 1; i < req.history_times.size(); ++i) {
    if (!(req.history_times[i] > req.history_times[i - 1])) {
      throw Error(errtag::kRange, "forecast: history timestamps must increase");
    }
  }
  if (req.queries.empty()) {
    throw Error(errtag::kRange, "forecast: at least one query timestamp");
  }
  std::set<float> uniq(req.queries.begin(), req.queries.end());
  if (uniq.size() != req.queries.size()) {
    throw Error(errtag::kRange, "forecast: query timestamps must be distinct");
  }
  if (req.samples_per_query < 1) {
    throw Error(errtag::kRange, "forecast: samples_per_query must be >= 1");
  }
}

void validate_forward_sorted(const ForecastRequest& req, const char* who) {
  for (std::size_t i = 1; i < req.queries.size(); ++i) {
    if (!(req.queries[i] > req.queries[i - 1])) {
      throw Error(errtag::kRange,
                  std::string(who) + ": queries must be sorted strictly ascending");
    }
  }
  if (!(req.queries.front() > req.history_times.back())) {
    throw Error(errtag::kRange,
                std::string(who) +
                    ": non-forward queries are only supported by the direct "
                    "sampler (and the non-learned baselines)");
  }
}

struct PoolEntry {
  scene::Frame frame;
  float time = 0.f;
  bool predicted = false;
};

struct Window {
  std::vector<const scene::Frame*> frames;
  std::vector<float> raw_times;
  std::vector<bool> predicted;
  std::vector<float> anchored_times;
  float anchor = 0.f;
};

Window window_from_entries(std::vector<const PoolEntry*> entries) {
  std::sort(entries.begin(), entries.end(),
            [](const PoolEntry* a, const PoolEntry* b) { return a->time < b->time; });
  Window w;
  for (const PoolEntry* e : entries) {
    w.frames.push_back(&e->frame);
    w.raw_times.push_back(e->time);
    w.predicted.push_back(e->predicted);
  }
  w.anchor = w.raw_times.back();
  for (float t : w.raw_times) w.anchored_times.push_back(t - w.anchor);
  return w;
}

Window last_k_window(const std::vector<PoolEntry>& pool, std::size_t k) {
  std::vector<const PoolEntry*> entries;
  for (std::size_t i = pool.size() - k; i < pool.size(); ++i) {
    entries.push_back(&pool[i]);
  }
  return window_from_entries(std::move(entries));
}

Window nearest_k_window(const std::vector<PoolEntry>& pool, std::size_t k,
                        float query) {
  std::vector<const PoolEntry*> entries;
  for (const PoolEntry& e : pool) entries.push_back(&e);
  std::sort(entries.begin(), entries.end(),
            [query](const PoolEntry* a, const PoolEntry* b) {
              const float da = std::fabs(a->time - query);
              const float db = std::fabs(b->time - query);
              if (da != db) return da < db;
              return a->time < b->time;
            });
  entries.resize(k);
  return window_from_entries(std::move(entries));
}

FrameProvenance provenance_of(const Window& w) {
  return FrameProvenance{w.raw_times, w.predicted};
}

std::vector<PoolEntry> history_pool(const ForecastRequest& req) {
  std::vector<PoolEntry> pool;
  for (std::size_t i = 0; i < req.history.size(); ++i) {
    pool.push_back(PoolEntry{req.history[i], req.history_times[i], false});
  }
  return pool;
}

}  // namespace

std::vector<TrajectorySample> sample_direct(const ForecastRequest& req,
                                            const ModelHooks& hooks,
                                            const diffusion::NoiseSchedule& schedule) {
  validate_common(req);
  const int k = req.samples_per_query;
  const std::vector<PoolEntry> pool = history_pool(req);
  const Window window = last_k_window(pool, pool.size());
  const cond::ConditioningBundle null_bundle = hooks.make_null();

  std::vector<TrajectorySample> results(static_cast<std::size_t>(k));
  for (auto& r : results) {
    r.frames.resize(req.queries.size());
    r.provenance.resize(req.queries.size());
  }

  for (std::size_t qi = 0; qi < req.queries.size(); ++qi) {
    const float q = req.queries[qi];
    const cond::ConditioningBundle bundle = hooks.make_bundle(
        window.frames, window.anchored_times, q - window.anchor, window.anchor);
    std::vector<cond::ConditioningBundle> bundles(static_cast<std::size_t>(k),
                                                  bundle);
    std::vector<RandomSource> noise;
    for (int j = 0; j < k; ++j) {
      noise.emplace_back(mix_seed(req.seed, static_cast<std::uint64_t>(j),
                                  static_cast<std::uint64_t>(qi)));
    }
    const Tensor frames = diffusion::ddpm_sample_batch(
        bundles, hooks.eps, schedule, req.sampler, noise, null_bundle);
    const std::int64_t per = frames.numel() / frames.extent(0);
    for (int j = 0; j < k; ++j) {
      scene::Frame& f = results[static_cast<std::size_t>(j)].frames[qi];
      const float* p = frames.data_ptr() + j * per;
      f.assign(p, p + per);
      results[static_cast<std::size_t>(j)].provenance[qi] = provenance_of(window);
    }
  }
  return results;
}

namespace {

// Shared rollout for autoregressive and mixed sampling. With mixing disabled
// (or w_m == 0) this is plain autoregressive sampling; the two must stay one
// code path so sample_mixed(w_m=0) is bit-identical to sample_autoregressive.
std::vector<TrajectorySample> rollout(const ForecastRequest& req,
                                      const ModelHooks& hooks,
                                      const diffusion::NoiseSchedule& schedule,
                                      bool mixing) {
  validate_common(req);
  validate_forward_sorted(req, mixing ? "mixed" : "autoregressive");
  const int k = req.samples_per_query;
  const std::size_t kw = req.history.size();  // window size
  const float w_m = mixing ? req.w_m : 0.f;
  if (mixing && w_m < 0.f) {
    throw Error(errtag::kRange, "mixed: w_m must be >= 0");
  }
  const cond::ConditioningBundle null_bundle = hooks.make_null();

  std::vector<std::vector<PoolEntry>> pools(static_cast<std::size_t>(k),
                                            history_pool(req));
  const Window direct_window = last_k_window(pools[0], kw);

  std::vector<TrajectorySample> results(static_cast<std::size_t>(k));
  for (auto& r : results) {
    r.frames.resize(req.queries.size());
    r.provenance.resize(req.queries.size());
  }

  diffusion::DdpmStepper stepper(schedule, req.sampler.n_inference_steps);
  const std::int64_t hw =
      static_cast<std::int64_t>(std::lround(std::sqrt(
          static_cast<double>(req.history.front().size()))));

  for (std::size_t qi = 0; qi < req.queries.size(); ++qi) {
    const float q = req.queries[qi];
    std::vector<cond::ConditioningBundle> bundles_a, bundles_d;
    std::vector<Window> windows;
    bool all_equal = true;
    for (int j = 0; j < k; ++j) {
      Window w = last_k_window(pools[static_cast<std::size_t>(j)], kw);
      bundles_a.push_back(
          hooks.make_bundle(w.frames, w.anchored_times, q - w.anchor, w.anchor));
      if (mixing && w_m != 0.f) {
        bundles_d.push_back(hooks.make_bundle(
            direct_window.frames, direct_window.anchored_times,
            q - direct_window.anchor, direct_window.anchor));
        all_equal =
            all_equal && cond::bundles_equal(bundles_a.back(), bundles_d.back());
      }
      windows.push_back(std::move(w));
    }
    const bool use_mixing = mixing && w_m != 0.f && !all_equal;

    std::vector<RandomSource> noise;
    for (int j = 0; j < k; ++j) {
      noise.emplace_back(mix_seed(req.seed, static_cast<std::uint64_t>(j),
                                  static_cast<std::uint64_t>(qi)));
    }
    Tensor z = Tensor::zeros({k, 1, hw, hw});
    for (int j = 0; j < k; ++j) {
      float* row = z.data_ptr() + j * hw * hw;
      noise[static_cast<std::size_t>(j)].fill_normal(
          std::span<float>(row, static_cast<std::size_t>(hw * hw)));
    }

    auto mixed_eps = [&](const Tensor& zt, int step) {
      const Tensor eps_a = diffusion::guided_eps(zt, step, bundles_a, null_bundle,
                                                 req.sampler.guidance, hooks.eps);
      if (!use_mixing) return eps_a;
      const Tensor eps_d = diffusion::guided_eps(zt, step, bundles_d, null_bundle,
                                                 req.sampler.guidance, hooks.eps);
      Tensor out = Tensor::zeros(eps_a.shape());
      const auto pa = eps_a.data(), pd = eps_d.data();
      auto po = out.data();
      for (std::size_t i = 0; i < po.size(); ++i) {
        po[i] = pa[i] + w_m * (pd[i] - pa[i]);
      }
      return out;
    };

    for (int t = static_cast<int>(stepper.steps.size()) - 1; t >= 1; --t) {
      z = stepper.transition(
          z, mixed_eps(z, stepper.steps[static_cast<std::size_t>(t)]), t, noise);
    }
    const Tensor x0 = stepper.final_decode(z, mixed_eps(z, stepper.steps.front()));

    for (int j = 0; j < k; ++j) {
      scene::Frame frame = diffusion::frame_from_latent_row(x0, j);
      results[static_cast<std::size_t>(j)].provenance[qi] =
          provenance_of(windows[static_cast<std::size_t>(j)]);
      pools[static_cast<std::size_t>(j)].push_back(PoolEntry{frame, q, true});
      results[static_cast<std::size_t>(j)].frames[qi] = std::move(frame);
    }
  }
  return results;
}

}  // namespace

std::vector<TrajectorySample> sample_autoregressive(
    const ForecastRequest& req, const ModelHooks& hooks,
    const diffusion::NoiseSchedule& schedule) {
  return rollout(req, hooks, schedule, /*mixing=*/false);
}

std::vector<TrajectorySample> sample_mixed(const ForecastRequest& req,
                                           const ModelHooks& hooks,
                                           const diffusion::NoiseSchedule& schedule) {
  return rollout(req, hooks, schedule, /*mixing=*/true);
}

std::vector<std::vector<int>> hierarchical_fill_order(int n_queries) {
  if (n_queries < 1) throw Error(errtag::kRange, "fill order needs >= 1 query");
  std::vector<std::vector<int>> groups;
  groups.push_back({n_queries - 1});
  // segments over index space, with -1 standing for the history anchor
  std::vector<std::pair<int, int>> level{{-1, n_queries - 1}};
  while (!level.empty()) {
    std::vector<int> mids;
    std::vector<std::pair<int, int>> next;
    for (const auto& [lo, hi] : level) {
      if (hi - lo < 2) continue;
      const int mid = (lo + hi) / 2;
      mids.push_back(mid);
      next.emplace_back(lo, mid);
      next.emplace_back(mid, hi);
    }
    if (!mids.empty()) groups.push_back(std::move(mids));
    level = std::move(next);
  }
  return groups;
}

std::vector<TrajectorySample> sample_hierarchical(
    const ForecastRequest& req, const ModelHooks& hooks,
    const diffusion::NoiseSchedule& schedule) {
  validate_common(req);
  validate_forward_sorted(req, "hierarchical");
  if (req.queries.size() < 2) {
    throw Error(errtag::kRange, "hierarchical: needs at least 2 queries");
  }
  const float spacing = req.queries[1] - req.queries[0];
  for (std::size_t i = 1; i < req.queries.size(); ++i) {
    const float d = req.queries[i] - req.queries[i - 1];
    if (std::fabs(d - spacing) > 1e-4f * std::fabs(spacing)) {
      throw Error(errtag::kRange,
                  "hierarchical: queries must be evenly spaced (refinement "
                  "recursion requires it)");
    }
  }

  const int k = req.samples_per_query;
  const std::size_t kw = req.history.size();
  const cond::ConditioningBundle null_bundle = hooks.make_null();

  std::vector<std::vector<PoolEntry>> pools(static_cast<std::size_t>(k),
                                            history_pool(req));
  std::vector<TrajectorySample> results(static_cast<std::size_t>(k));
  for (auto& r : results) {
    r.frames.resize(req.queries.size());
    r.provenance.resize(req.queries.size());
  }

  const auto groups = hierarchical_fill_order(static_cast<int>(req.queries.size()));
  for (const std::vector<int>& group : groups) {
    for (int qi : group) {
      const float q = req.queries[static_cast<std::size_t>(qi)];
      std::vector<cond::ConditioningBundle> bundles;
      std::vector<Window> windows;
      for (int j = 0; j < k; ++j) {
        Window w = nearest_k_window(pools[static_cast<std::size_t>(j)], kw, q);
        bundles.push_back(hooks.make_bundle(w.frames, w.anchored_times,
                                            q - w.anchor, w.anchor));
        windows.push_back(std::move(w));
      }
      std::vector<RandomSource> noise;
      for (int j = 0; j < k; ++j) {
        noise.emplace_back(mix_seed(req.seed, static_cast<std::uint64_t>(j),
                                    static_cast<std::uint64_t>(qi)));
      }
      const Tensor frames = diffusion::ddpm_sample_batch(
          bundles, hooks.eps, schedule, req.sampler, noise, null_bundle);
      const std::int64_t per = frames.numel() / frames.extent(0);
      for (int j = 0; j < k; ++j) {
        scene::Frame f(static_cast<std::size_t>(per));
        const float* p = frames.data_ptr() + j * per;
        f.assign(p, p + per);
        results[static_cast<std::size_t>(j)].provenance[static_cast<std::size_t>(qi)] =
            provenance_of(windows[static_cast<std::size_t>(j)]);
        pools[static_cast<std::size_t>(j)].push_back(PoolEntry{f, q, true});
        results[static_cast<std::size_t>(j)].frames[static_cast<std::size_t>(qi)] =
            std::move(f);
      }
    }
  }
  return results;
}

std::vector<TrajectorySample> baseline_constant(const ForecastRequest& req) {
  validate_common(req);
  TrajectorySample sample;
  for (std::size_t qi = 0; qi < req.queries.size(); ++qi) {
    sample.frames.push_back(req.history.back());
    sample.provenance.push_back(
        FrameProvenance{{req.history_times.back()}, {false}});
  }
  return std::vector<TrajectorySample>(
      static_cast<std::size_t>(req.samples_per_query), sample);
}

std::vector<TrajectorySample> baseline_linear(const ForecastRequest& req) {
  validate_common(req);
  if (req.history.size() < 2) {
    throw Error(errtag::kRange, "linear baseline: needs >= 2 history frames");
  }
  const scene::Frame& f0 = req.history[req.history.size() - 2];
  const scene::Frame& f1 = req.history.back();
  const float t0 = req.history_times[req.history.size() - 2];
  const float t1 = req.history_times.back();

  TrajectorySample sample;
  for (float q : req.queries) {
    const float a = (q - t1) / (t1 - t0);
    scene::Frame out(f1.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = std::clamp(f1[i] + (f1[i] - f0[i]) * a, 0.f, 1.f);
    }
    sample.frames.push_back(std::move(out));
    sample.provenance.push_back(FrameProvenance{{t0, t1}, {false, false}});
  }
  return std::vector<TrajectorySample>(
      static_cast<std::size_t>(req.samples_per_query), sample);
}

std::vector<TrajectorySample> baseline_regression(const ForecastRequest& req,
                                                  const FramePredictor& predict) {
  validate_common(req);
  if (req.queries.size() > 1) validate_forward_sorted(req, "regression");
  const std::size_t kw = req.history.size();

  std::vector<PoolEntry> pool = history_pool(req);
  TrajectorySample sample;
  for (float q : req.queries) {
    const Window w = last_k_window(pool, kw);
    scene::Frame frame = predict(w.frames, w.anchored_times, q - w.anchor);
    sample.provenance.push_back(provenance_of(w));
    pool.push_back(PoolEntry{frame, q, true});
    sample.frames.push_back(std::move(frame));
  }
  return std::vector<TrajectorySample>(
      static_cast<std::size_t>(req.samples_per_query), sample);
}

std::vector<TrajectorySample> run_sampler(SamplerKind kind,
                                          const ForecastRequest& req,
                                          const ModelHooks* hooks,
                                          const FramePredictor* regressor,
                                          const diffusion::NoiseSchedule& schedule) {
  if (sampler_needs_model(kind) && hooks == nullptr) {
    throw Error(errtag::kArgs,
                sampler_name(kind) + " sampling requires a trained model");
  }
  switch (kind) {
    case SamplerKind::kDirect: return sample_direct(req, *hooks, schedule);
    case SamplerKind::kAutoregressive:
      return sample_autoregressive(req, *hooks, schedule);
    case SamplerKind::kHierarchical:
      return sample_hierarchical(req, *hooks, schedule);
    case SamplerKind::kMixed: return sample_mixed(req, *hooks, schedule);
    case SamplerKind::kConstant: return baseline_constant(req);
    case SamplerKind::kLinear: return baseline_linear(req);
    case SamplerKind::kRegression:
      if (regressor == nullptr) {
        throw Error(errtag::kArgs, "regression sampling requires a regressor");
      }
      return baseline_regression(req, *regressor);
  }
  throw Error(errtag::kArgs, "unknown sampler kind");
}

}  // namespace timecast::forecast
