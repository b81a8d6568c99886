#include "timecast/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "timecast/errors.hpp"

namespace timecast::metrics {

AlignedDepthError scale_shift_align(std::span<const float> d,
                                    std::span<const float> d_star,
                                    const std::vector<std::uint8_t>* mask) {
  if (d.size() != d_star.size()) {
    throw Error(errtag::kShape, "scale_shift_align: size mismatch");
  }
  if (mask && mask->size() != d.size()) {
    throw Error(errtag::kShape, "scale_shift_align: mask size mismatch");
  }
  double sum_d = 0.0, sum_dd = 0.0, sum_g = 0.0, sum_dg = 0.0;
  std::int64_t m = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (mask && !(*mask)[i]) continue;
    const double di = d[i], gi = d_star[i];
    sum_d += di;
    sum_dd += di * di;
    sum_g += gi;
    sum_dg += di * gi;
    ++m;
  }
  if (m < 2) {
    throw Error(errtag::kRange,
                "scale_shift_align: needs >= 2 valid pixels, got " +
                    std::to_string(m));
  }

  AlignedDepthError out;
  out.valid = m;
  const double var_d = sum_dd / m - (sum_d / m) * (sum_d / m);
  if (var_d < 1e-12) {
    out.degenerate = true;
    out.scale = 0.0;
    out.shift = sum_g / m;
  } else {
    out.scale = (m * sum_dg - sum_d * sum_g) / (m * sum_dd - sum_d * sum_d);
    out.shift = (sum_g - out.scale * sum_d) / m;
  }

  double abs_sum = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (mask && !(*mask)[i]) continue;
    abs_sum += std::fabs(out.scale * d[i] + out.shift - d_star[i]);
  }
  out.error = abs_sum / m;
  return out;
}

double psnr(std::span<const float> pred, std::span<const float> gt,
            double max_value) {
  if (pred.size() != gt.size()) {
    throw Error(errtag::kShape, "psnr: size mismatch");
  }
  if (pred.empty()) throw Error(errtag::kShape, "psnr: empty frames");
  double mse = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double diff = static_cast<double>(pred[i]) - gt[i];
    mse += diff * diff;
  }
  mse /= static_cast<double>(pred.size());
  if (mse <= 0.0) return 100.0;
  return std::min(100.0, 10.0 * std::log10(max_value * max_value / mse));
}

double topk(std::span<const double> scores, int k, bool minimize) {
  if (k < 1 || k > static_cast<int>(scores.size())) {
    throw Error(errtag::kRange,
                "topk: k=" + std::to_string(k) + " outside [1," +
                    std::to_string(scores.size()) + "]");
  }
  double best = scores[0];
  for (int i = 1; i < k; ++i) {
    best = minimize ? std::min(best, scores[static_cast<std::size_t>(i)])
                    : std::max(best, scores[static_cast<std::size_t>(i)]);
  }
  return best;
}

double ate(const std::vector<scene::Frame>& pred,
           const std::vector<scene::Frame>& gt, const PerFrameMetric& metric) {
  if (pred.size() != gt.size()) {
    throw Error(errtag::kShape, "ate: trajectory length mismatch");
  }
  if (pred.empty()) throw Error(errtag::kShape, "ate: empty trajectories");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) sum += metric(pred[i], gt[i]);
  return sum / static_cast<double>(pred.size());
}

double ate_scale_shift_l1(const std::vector<scene::Frame>& pred,
                          const std::vector<scene::Frame>& gt) {
  return ate(pred, gt, [](const scene::Frame& p, const scene::Frame& g) {
    return scale_shift_align(p, g).error;
  });
}

}  // namespace timecast::metrics
