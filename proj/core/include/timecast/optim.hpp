#pragma once

#include <cstdint>
#include <vector>

#include "timecast/nn.hpp"

namespace timecast::nn {

struct AdamWConfig {
  float lr = 1e-4f;
  float beta1 = 0.95f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  float weight_decay = 1e-6f;
};

// AdamW with decoupled weight decay (applied to the parameter before the
// Adam update term) and bias-corrected moments. The per-parameter learning
// rate is lr * lr_multiplier.
class AdamW {
 public:
  AdamW(AdamWConfig config, const ParamRefs& params);

  void step(const ParamRefs& params);

  std::int64_t step_count() const { return step_count_; }

  // Flat views for checkpointing (same order as the params passed in).
  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }
  void set_step_count(std::int64_t n) { step_count_ = n; }

  const AdamWConfig& config() const { return config_; }

 private:
  AdamWConfig config_;
  std::int64_t step_count_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace timecast::nn
