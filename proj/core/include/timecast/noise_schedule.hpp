#pragma once

#include <vector>

namespace timecast::diffusion {

// DDPM process constants. Linear betas rising from beta_start to beta_end;
// alpha_bar[i] is the running product of (1 - beta).
struct NoiseSchedule {
  int n_steps = 1000;
  std::vector<float> betas;
  std::vector<float> alphas;
  std::vector<float> alpha_bars;

  static NoiseSchedule linear(int n_steps = 1000, float beta_start = 1e-4f,
                              float beta_end = 2e-2f);
};

// Evenly spaced inference steps over [0, n_steps), ascending, including both
// step 0 and step n_steps-1 (a single step selects only the last).
std::vector<int> select_inference_steps(int n_steps, int n_inference_steps);

}  // namespace timecast::diffusion
