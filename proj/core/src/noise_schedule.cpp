#include "timecast/noise_schedule.hpp"

#include "timecast/errors.hpp"

namespace timecast::diffusion {

NoiseSchedule NoiseSchedule::linear(int n_steps, float beta_start, float beta_end) {
  if (n_steps < 2) throw Error(errtag::kRange, "schedule needs >= 2 steps");
  if (!(beta_start > 0.f && beta_end < 1.f && beta_start < beta_end)) {
    throw Error(errtag::kRange, "betas must satisfy 0 < beta_start < beta_end < 1");
  }
  NoiseSchedule s;
  s.n_steps = n_steps;
  s.betas.resize(static_cast<std::size_t>(n_steps));
  s.alphas.resize(static_cast<std::size_t>(n_steps));
  s.alpha_bars.resize(static_cast<std::size_t>(n_steps));
  double bar = 1.0;
  for (int i = 0; i < n_steps; ++i) {
    const float beta =
        beta_start + (beta_end - beta_start) * static_cast<float>(i) /
                         static_cast<float>(n_steps - 1);
    s.betas[static_cast<std::size_t>(i)] = beta;
    s.alphas[static_cast<std::size_t>(i)] = 1.f - beta;
    bar *= static_cast<double>(1.f - beta);
    s.alpha_bars[static_cast<std::size_t>(i)] = static_cast<float>(bar);
  }
  return s;
}

std::vector<int> select_inference_steps(int n_steps, int n_inference_steps) {
  if (n_inference_steps < 1 || n_inference_steps > n_steps) {
    throw Error(errtag::kRange,
                "n_inference_steps must be in [1, " + std::to_string(n_steps) + "]");
  }
  if (n_inference_steps == 1) return {n_steps - 1};
  std::vector<int> steps;
  steps.reserve(static_cast<std::size_t>(n_inference_steps));
  for (int j = 0; j < n_inference_steps; ++j) {
    const int idx = static_cast<int>(
        (static_cast<long long>(j) * (n_steps - 1)) / (n_inference_steps - 1));
    if (steps.empty() || steps.back() != idx) steps.push_back(idx);
  }
  return steps;
}

}  // namespace timecast::diffusion
