#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "timecast/dataset.hpp"
#include "timecast/optim.hpp"
#include "timecast/unet.hpp"

namespace timecast {

// Flat-namespaced JSON configuration. Unknown keys are errors. Two hashes
// are derived: hash_core covers everything that defines the dataset and the
// trained model (dataset.*, model.*, train.*, ablation.*, modality);
// hash_full additionally covers sample.*. Artifacts embed both; consumers
// gate on hash_core so sampling flags can vary without retraining.
struct RunConfig {
  scene::Modality modality = scene::Modality::kDepth;

  // dataset
  int n_clips = 200;
  float train_fraction = 0.85f;
  std::uint64_t dataset_seed = 17;
  scene::SceneDistribution dist;

  // model
  int base_width = 32;
  int k_context = 3;
  int key_dim = 32;
  int d_embed = 32;
  int l_freqs = 8;
  int groups = 4;
  int step_embed_dim = 64;
  float time_scale = 12.f;

  // train
  int iterations = 5000;
  int batch_size = 12;
  float lr = 1e-4f;
  float beta1 = 0.95f;
  float beta2 = 0.999f;
  float adam_eps = 1e-8f;
  float weight_decay = 1e-6f;
  float cfg_drop = 0.1f;
  std::uint64_t train_seed = 7;
  float window_seconds = 8.f;
  int anchor_index = 2;
  float ema_alpha = 0.98f;
  int log_every = 25;
  std::string objective = "diffusion";  // diffusion | regression

  // sample
  int inference_steps = 40;
  float guidance = 2.0f;
  float w_m = 2.0f;
  int top_k = 5;
  std::vector<float> horizons = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::vector<float> context_offsets = {-1.f, -0.5f, 0.f};
  std::uint64_t sample_seed = 99;

  // ablation
  bool disable_anchoring = false;
  bool disable_timestamp_randomization = false;
  bool disable_context_embedding = false;
  bool disable_cross_attention = false;

  static RunConfig defaults() { return RunConfig{}; }
  static RunConfig from_file(const std::filesystem::path& path);
  static RunConfig from_json_text(const std::string& text);

  void validate() const;

  std::string canonical_text(bool include_sample) const;
  std::string hash_core() const;
  std::string hash_full() const;

  diffusion::ModelConfig model_config() const;
  nn::AdamWConfig adamw_config() const;
};

std::string fnv1a_hex(const std::string& text);

}  // namespace timecast
