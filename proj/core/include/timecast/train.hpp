#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "timecast/config.hpp"
#include "timecast/diffusion.hpp"

namespace timecast::train {

struct TrainResult {
  std::filesystem::path checkpoint;
  std::vector<float> losses;      // per iteration
  std::vector<float> ema_losses;  // per iteration
  double wall_seconds = 0.0;
  std::string checkpoint_hash;

  float ema_at(int iteration) const;  // 1-based
};

// Trains cfg.objective (diffusion noise prediction, or direct L2 frame
// regression when the cross-attention ablation is active) on the dataset's
// train split and writes the checkpoint plus a sidecar manifest and a loss
// CSV (iteration, loss, ema).
TrainResult run_training(const RunConfig& cfg,
                         const scene::DatasetManifest& manifest,
                         const std::filesystem::path& dataset_dir,
                         const std::filesystem::path& out_checkpoint,
                         std::ostream* progress);

// Loads a trained model; refuses a checkpoint whose sidecar hash_core does
// not match cfg unless allow_hash_mismatch.
diffusion::ForecastModel load_model(const RunConfig& cfg,
                                    const std::filesystem::path& checkpoint,
                                    bool allow_hash_mismatch);

}  // namespace timecast::train
