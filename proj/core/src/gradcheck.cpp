#include "timecast/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "timecast/tape.hpp"

namespace timecast::nn {

GradCheckReport gradcheck(const std::function<Tensor()>& loss_fn,
                          const ParamRefs& params, const GradCheckOptions& opts,
                          RandomSource& rng) {
  GradCheckReport report;
  report.tolerance = opts.tolerance;

  zero_grads(params);
  Tape tape;
  {
    TapeScope scope(tape);
    Tensor loss = loss_fn();
    tape.backward(loss);
  }

  for (Parameter* p : params) {
    GradCheckBlock block;
    block.name = p->name;
    const std::int64_t n = p->tensor.numel();
    std::vector<std::int64_t> entries;
    if (opts.entries_per_block <= 0 || opts.entries_per_block >= n) {
      entries.resize(static_cast<std::size_t>(n));
      for (std::int64_t i = 0; i < n; ++i) entries[static_cast<std::size_t>(i)] = i;
    } else {
      for (int i = 0; i < opts.entries_per_block; ++i) {
        entries.push_back(rng.uniform_int(0, static_cast<int>(n - 1)));
      }
    }

    auto w = p->tensor.data();
    const auto g = p->tensor.grad();
    for (std::int64_t idx : entries) {
      const float saved = w[static_cast<std::size_t>(idx)];
      w[static_cast<std::size_t>(idx)] = saved + opts.step;
      const float plus = loss_fn().item();
      w[static_cast<std::size_t>(idx)] = saved - opts.step;
      const float minus = loss_fn().item();
      w[static_cast<std::size_t>(idx)] = saved;

      const float fd = (plus - minus) / (2.f * opts.step);
      const float an = g[static_cast<std::size_t>(idx)];
      const float denom =
          std::max({std::fabs(fd), std::fabs(an), opts.rel_floor});
      const float dev = std::fabs(fd - an) / denom;
      block.max_rel_dev = std::max(block.max_rel_dev, dev);
      ++block.entries_checked;
    }
    report.max_rel_dev = std::max(report.max_rel_dev, block.max_rel_dev);
    report.blocks.push_back(std::move(block));
  }
  report.pass = report.max_rel_dev <= opts.tolerance;
  return report;
}

}  // namespace timecast::nn
