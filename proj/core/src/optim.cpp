#include "timecast/optim.hpp"

#include <cmath>

#include "timecast/errors.hpp"

namespace timecast::nn {

AdamW::AdamW(AdamWConfig config, const ParamRefs& params) : config_(config) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const Parameter* p : params) {
    m_.push_back(Tensor::zeros(p->tensor.shape()));
    v_.push_back(Tensor::zeros(p->tensor.shape()));
  }
}

void AdamW::step(const ParamRefs& params) {
  if (params.size() != m_.size()) {
    throw Error(errtag::kShape, "AdamW::step: parameter count changed");
  }
  ++step_count_;
  const float b1 = config_.beta1, b2 = config_.beta2;
  const float bc1 = 1.f - std::pow(b1, static_cast<float>(step_count_));
  const float bc2 = 1.f - std::pow(b2, static_cast<float>(step_count_));

  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    if (p.tensor.shape() != m_[i].shape()) {
      throw Error(errtag::kShape, "AdamW::step: moment shape mismatch for " + p.name);
    }
    const float lr = config_.lr * p.lr_multiplier;
    auto w = p.tensor.data();
    auto g = p.tensor.grad();
    auto m = m_[i].data();
    auto v = v_[i].data();
    for (std::size_t j = 0; j < w.size(); ++j) {
      // decoupled weight decay first
      w[j] -= lr * config_.weight_decay * w[j];
      m[j] = b1 * m[j] + (1.f - b1) * g[j];
      v[j] = b2 * v[j] + (1.f - b2) * g[j] * g[j];
      const float mhat = m[j] / bc1;
      const float vhat = v[j] / bc2;
      w[j] -= lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
    check_finite(p.tensor, "adamw_step");
  }
}

}  // namespace timecast::nn
