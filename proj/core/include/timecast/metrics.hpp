#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "timecast/scene.hpp"

namespace timecast::metrics {

// Closed-form scale/shift alignment minimizing sum (s*d_i + t - d*_i)^2 over
// valid pixels, then the mean absolute residual e. Zero-variance d yields
// the degenerate result s = 0, t = mean(d*), flagged.
struct AlignedDepthError {
  double scale = 0.0;
  double shift = 0.0;
  double error = 0.0;   // mean |s*d + t - d*|
  std::int64_t valid = 0;
  bool degenerate = false;
};

AlignedDepthError scale_shift_align(std::span<const float> d,
                                    std::span<const float> d_star,
                                    const std::vector<std::uint8_t>* mask = nullptr);

// 10*log10(max^2 / MSE), capped at 100 dB (zero MSE included).
double psnr(std::span<const float> pred, std::span<const float> gt,
            double max_value = 1.0);

// Best among the FIRST k scores (samples are seed-ordered; nested Top-k).
double topk(std::span<const double> scores, int k, bool minimize);

// Mean per-frame error over a trajectory; frames aligned independently.
using PerFrameMetric =
    std::function<double(const scene::Frame&, const scene::Frame&)>;
double ate(const std::vector<scene::Frame>& pred,
           const std::vector<scene::Frame>& gt, const PerFrameMetric& metric);
double ate_scale_shift_l1(const std::vector<scene::Frame>& pred,
                          const std::vector<scene::Frame>& gt);

}  // namespace timecast::metrics
