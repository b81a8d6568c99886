#pragma once

#include <functional>
#include <string>
#include <vector>

#include "timecast/nn.hpp"
#include "timecast/random.hpp"

namespace timecast::nn {

struct GradCheckBlock {
  std::string name;
  float max_rel_dev = 0.f;
  int entries_checked = 0;
};

struct GradCheckReport {
  bool pass = false;
  float tolerance = 0.f;
  float max_rel_dev = 0.f;
  std::vector<GradCheckBlock> blocks;
};

struct GradCheckOptions {
  float tolerance = 1e-2f;
  float step = 1e-3f;      // central-difference half-width
  int entries_per_block = 0;  // 0 = every entry
  float rel_floor = 0.1f;  // denominator floor: dev = |fd-an|/max(|fd|,|an|,floor)
};

// Compares tape gradients of loss_fn against central finite differences over
// the given parameters. loss_fn must be a deterministic function of the
// parameter values. Failures are reported in the result, never thrown.
GradCheckReport gradcheck(const std::function<Tensor()>& loss_fn,
                          const ParamRefs& params, const GradCheckOptions& opts,
                          RandomSource& rng);

}  // namespace timecast::nn
