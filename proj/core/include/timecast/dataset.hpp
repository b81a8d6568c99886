#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "timecast/scene.hpp"

namespace timecast::scene {

// Distribution over scene specs. Clips come in three families:
//  - sanity: static geometry, nonzero depth rate (exactly linearly
//    extrapolable per pixel; the linear baseline's designed regime),
//  - turn: moving objects where one object turns at a random post-anchor
//    time (the designed multi-modal regime),
//  - plain: turn-free constant-velocity motion.
struct SceneDistribution {
  int width = 32;
  int height = 32;
  float fps = 2.f;
  float duration = 12.f;
  int min_objects = 1;
  int max_objects = 3;
  float min_size = 5.f;
  float max_size = 11.f;
  float min_speed = 1.5f;
  float max_speed = 4.5f;
  float min_depth = 0.15f;
  float max_depth = 0.7f;
  float background_depth = 0.9f;
  float camera_speed_max = 0.6f;
  float sanity_fraction = 0.2f;
  float turn_fraction = 0.5f;
  float turn_window_lo = 2.0f;   // seconds, drawn turn time range
  float turn_window_hi = 6.0f;
  float depth_rate_max = 0.025f;
  float eval_anchor_time = 1.5f;  // must land on the frame grid
};

SceneSpec draw_scene(const SceneDistribution& dist, RandomSource& rng);

struct ClipRecord {
  std::string id;
  std::uint64_t seed = 0;
  SceneSpec spec;
  float eval_anchor_time = 0.f;
  std::vector<ResolvedTurn> turns;
  bool multimodal = false;  // a turn strictly after the eval anchor
  bool sanity = false;      // depth-rate-only dynamics, turn-free
};

struct DatasetManifest {
  SceneDistribution dist;
  std::uint64_t seed = 0;
  float train_fraction = 0.85f;
  Modality modality = Modality::kDepth;
  std::string config_hash;
  std::vector<ClipRecord> clips;
  std::vector<std::string> train_ids;
  std::vector<std::string> eval_ids;
};

// Disjoint clip-level split; every clip's spec and seed are recorded so the
// dataset regenerates exactly.
DatasetManifest build_dataset(int n_clips, const SceneDistribution& dist,
                              std::uint64_t seed, float train_fraction,
                              Modality modality,
                              const std::string& config_hash);

void write_dataset(const DatasetManifest& manifest,
                   const std::filesystem::path& out_dir);

DatasetManifest load_dataset_manifest(const std::filesystem::path& dir);

const ClipRecord& find_clip(const DatasetManifest& manifest, const std::string& id);

// Reads a clip back from its PGM frames.
VideoClip load_clip(const std::filesystem::path& dataset_dir,
                    const ClipRecord& record);

// Frame index of an on-grid timestamp; throws if off-grid.
int frame_index_at(const VideoClip& clip, float time_seconds);

}  // namespace timecast::scene
