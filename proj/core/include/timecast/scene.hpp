#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "timecast/random.hpp"

namespace timecast::scene {

struct Vec2 {
  float x = 0.f;
  float y = 0.f;
};

enum class ShapeKind { kDisc, kRectangle };
enum class Modality { kDepth, kGrayscale };

std::string modality_name(Modality m);
Modality parse_modality(const std::string& name);

// Position is piecewise linear with at most one breakpoint (the turn).
// turn_time < 0 requests a uniformly drawn time at clip generation; an
// unset (NaN) turn velocity requests a randomly rotated direction.
struct TurnEvent {
  bool enabled = false;
  float time = -1.f;
  Vec2 new_velocity{std::numeric_limits<float>::quiet_NaN(),
                    std::numeric_limits<float>::quiet_NaN()};
};

struct MovingObject {
  ShapeKind kind = ShapeKind::kDisc;
  float size = 6.f;  // diameter / rectangle width, pixels
  Vec2 position0;
  Vec2 velocity;       // pixels per second
  float depth = 0.5f;  // in (0,1), nearer = smaller
  float depth_rate = 0.f;  // per-second depth change
  float albedo = 0.8f;     // grayscale modality value
  TurnEvent turn;
};

struct SceneSpec {
  int width = 32;
  int height = 32;
  float fps = 2.f;
  float duration = 12.f;  // seconds
  std::vector<MovingObject> objects;
  Vec2 camera_velocity;
  float background_depth = 0.9f;
  float background_albedo = 0.1f;

  // Throws Error(E_DATASET) naming the violated constraint.
  void validate(int k_context = 3) const;
};

using Frame = std::vector<float>;

struct VideoClip {
  int width = 0;
  int height = 0;
  float fps = 0.f;
  std::vector<Frame> frames;      // values in [0,1]
  std::vector<float> timestamps;  // strictly increasing, spacing 1/fps
  std::uint64_t seed = 0;
};

// Turn events with randomness resolved; recorded in clip manifests so the
// multi-modal subset of a dataset is identifiable.
struct ResolvedTurn {
  int object_index = 0;
  float time = 0.f;
  Vec2 new_velocity;
};

std::vector<ResolvedTurn> resolve_turns(const SceneSpec& spec, std::uint64_t seed);

// Deterministic function of (spec, seed). Z-buffer rendering: each pixel
// takes the minimum depth among covering objects, else background_depth;
// grayscale renders the nearest object's albedo with the same geometry.
VideoClip generate_clip(const SceneSpec& spec, std::uint64_t seed,
                        Modality modality = Modality::kDepth);

struct TrainingSample {
  std::vector<Frame> context;         // K frames
  std::vector<float> context_times;   // anchored seconds
  Frame target;
  float target_time = 0.f;            // anchored
  float anchor_clip_time = 0.f;       // clip time of the anchor frame
  Modality modality = Modality::kDepth;
};

// Draws K+1 distinct frames from a random window of the clip. With
// randomize, the target role and context ordering are uniform over the K+1
// drawn frames; otherwise contexts are the earliest K (ascending) and the
// target is the latest. All timestamps are shifted so the context frame at
// anchor_index sits at t = 0.
TrainingSample sample_training_tuple(const VideoClip& clip, RandomSource& rng,
                                     float window_seconds, int anchor_index,
                                     bool randomize, int k_context = 3,
                                     Modality modality = Modality::kDepth);

}  // namespace timecast::scene
