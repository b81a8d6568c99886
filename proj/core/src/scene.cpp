#include "timecast/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "timecast/errors.hpp"

namespace timecast::scene {

std::string modality_name(Modality m) {
  return m == Modality::kDepth ? "depth" : "grayscale";
}

Modality parse_modality(const std::string& name) {
  if (name == "depth") return Modality::kDepth;
  if (name == "grayscale") return Modality::kGrayscale;
  throw Error(errtag::kConfig, "unknown modality: " + name);
}

void SceneSpec::validate(int k_context) const {
  auto fail = [](const std::string& constraint) {
    throw Error(errtag::kDataset, "invalid scene spec: " + constraint);
  };
  if (width < 4 || height < 4) fail("width/height must be >= 4");
  if (!(fps > 0.f)) fail("fps > 0");
  if (!(duration >= static_cast<float>(k_context + 1) / fps)) {
    fail("duration >= (K+1)/fps");
  }
  if (objects.empty()) fail("at least 1 object");
  if (!(background_depth > 0.f && background_depth <= 1.f)) {
    fail("background_depth in (0,1]");
  }
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const MovingObject& o = objects[i];
    const std::string who = "object " + std::to_string(i) + ": ";
    if (!(o.size > 0.f)) fail(who + "size > 0");
    if (!(o.depth > 0.f && o.depth < 1.f)) fail(who + "depth in (0,1)");
    if (!(o.depth < background_depth)) fail(who + "depth < background_depth");
    const float depth_end = o.depth + o.depth_rate * duration;
    if (!(depth_end > 0.f && depth_end < 1.f)) {
      fail(who + "depth stays in (0,1) over the clip");
    }
    if (!(o.albedo >= 0.f && o.albedo <= 1.f)) fail(who + "albedo in [0,1]");
  }
}

std::vector<ResolvedTurn> resolve_turns(const SceneSpec& spec,
                                        std::uint64_t seed) {
  RandomSource rng(mix_seed(seed, 0x7552e5u));
  std::vector<ResolvedTurn> turns;
  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    const MovingObject& o = spec.objects[i];
    if (!o.turn.enabled) continue;
    ResolvedTurn t;
    t.object_index = static_cast<int>(i);
    t.time = o.turn.time >= 0.f ? o.turn.time
                                : rng.uniform_range(0.f, spec.duration);
    if (std::isnan(o.turn.new_velocity.x)) {
      // rotate the incoming velocity by a random angle in +-[30, 150] deg
      const float mag = std::hypot(o.velocity.x, o.velocity.y);
      const float base = std::atan2(o.velocity.y, o.velocity.x);
      const float delta = rng.uniform_range(0.5236f, 2.618f) *
                          (rng.bernoulli(0.5) ? 1.f : -1.f);
      t.new_velocity = {mag * std::cos(base + delta),
                        mag * std::sin(base + delta)};
    } else {
      t.new_velocity = o.turn.new_velocity;
    }
    turns.push_back(t);
  }
  return turns;
}

namespace {

Vec2 object_position(const MovingObject& o, const ResolvedTurn* turn, float t,
                     const Vec2& camera_velocity) {
  float tx = o.position0.x, ty = o.position0.y;
  if (turn && t > turn->time) {
    tx += o.velocity.x * turn->time + turn->new_velocity.x * (t - turn->time);
    ty += o.velocity.y * turn->time + turn->new_velocity.y * (t - turn->time);
  } else {
    tx += o.velocity.x * t;
    ty += o.velocity.y * t;
  }
  return {tx - camera_velocity.x * t, ty - camera_velocity.y * t};
}

bool covers(const MovingObject& o, const Vec2& center, float px, float py) {
  const float dx = px - center.x;
  const float dy = py - center.y;
  if (o.kind == ShapeKind::kDisc) {
    const float r = o.size * 0.5f;
    return dx * dx + dy * dy <= r * r;
  }
  // rectangle with fixed 0.7 aspect
  return std::fabs(dx) <= o.size * 0.5f && std::fabs(dy) <= o.size * 0.35f;
}

}  // namespace

VideoClip generate_clip(const SceneSpec& spec, std::uint64_t seed,
                        Modality modality) {
  spec.validate();
  const std::vector<ResolvedTurn> turns = resolve_turns(spec, seed);
  std::vector<const ResolvedTurn*> turn_of(spec.objects.size(), nullptr);
  for (const ResolvedTurn& t : turns) turn_of[static_cast<std::size_t>(t.object_index)] = &t;

  VideoClip clip;
  clip.width = spec.width;
  clip.height = spec.height;
  clip.fps = spec.fps;
  clip.seed = seed;
  const int n_frames = static_cast<int>(std::lround(spec.duration * spec.fps));
  clip.frames.reserve(static_cast<std::size_t>(n_frames));
  clip.timestamps.reserve(static_cast<std::size_t>(n_frames));

  for (int j = 0; j < n_frames; ++j) {
    const float t = static_cast<float>(j) / spec.fps;
    clip.timestamps.push_back(t);
    Frame frame(static_cast<std::size_t>(spec.width * spec.height));

    std::vector<Vec2> centers(spec.objects.size());
    std::vector<float> depths(spec.objects.size());
    for (std::size_t i = 0; i < spec.objects.size(); ++i) {
      centers[i] = object_position(spec.objects[i], turn_of[i], t,
                                   spec.camera_velocity);
      depths[i] = std::clamp(
          spec.objects[i].depth + spec.objects[i].depth_rate * t, 0.001f, 0.999f);
    }

    for (int y = 0; y < spec.height; ++y) {
      for (int x = 0; x < spec.width; ++x) {
        const float px = static_cast<float>(x) + 0.5f;
        const float py = static_cast<float>(y) + 0.5f;
        float best_depth = spec.background_depth;
        float value = modality == Modality::kDepth ? spec.background_depth
                                                   : spec.background_albedo;
        for (std::size_t i = 0; i < spec.objects.size(); ++i) {
          if (depths[i] < best_depth && covers(spec.objects[i], centers[i], px, py)) {
            best_depth = depths[i];
            value = modality == Modality::kDepth ? depths[i]
                                                 : spec.objects[i].albedo;
          }
        }
        frame[static_cast<std::size_t>(y * spec.width + x)] =
            std::clamp(value, 0.f, 1.f);
      }
    }
    clip.frames.push_back(std::move(frame));
  }
  return clip;
}

TrainingSample sample_training_tuple(const VideoClip& clip, RandomSource& rng,
                                     float window_seconds, int anchor_index,
                                     bool randomize, int k_context,
                                     Modality modality) {
  const int n = static_cast<int>(clip.frames.size());
  const int need = k_context + 1;
  if (anchor_index < 0 || anchor_index >= k_context) {
    throw Error(errtag::kRange, "anchor_index must be in [0,K)");
  }
  int window_frames =
      static_cast<int>(std::floor(window_seconds * clip.fps)) + 1;
  window_frames = std::min(window_frames, n);
  if (window_frames < need) {
    throw Error(errtag::kDataset,
                "sampling window of " + std::to_string(window_frames) +
                    " frames is shorter than K+1 = " + std::to_string(need) +
                    " frame intervals");
  }

  const int start = rng.uniform_int(0, n - window_frames);

  // draw K+1 distinct frame indices from the window (partial Fisher-Yates)
  std::vector<int> pool(static_cast<std::size_t>(window_frames));
  std::iota(pool.begin(), pool.end(), start);
  for (int i = 0; i < need; ++i) {
    const int j = rng.uniform_int(i, window_frames - 1);
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
  }
  std::vector<int> chosen(pool.begin(), pool.begin() + need);

  if (randomize) {
    // roles are already uniform: the draw order is a uniform permutation,
    // so `chosen` is used as-is (first K contexts, last one target)
  } else {
    std::sort(chosen.begin(), chosen.end());
  }

  TrainingSample sample;
  sample.modality = modality;
  for (int i = 0; i < k_context; ++i) {
    const int f = chosen[static_cast<std::size_t>(i)];
    sample.context.push_back(clip.frames[static_cast<std::size_t>(f)]);
    sample.context_times.push_back(clip.timestamps[static_cast<std::size_t>(f)]);
  }
  const int tf = chosen[static_cast<std::size_t>(k_context)];
  sample.target = clip.frames[static_cast<std::size_t>(tf)];
  sample.target_time = clip.timestamps[static_cast<std::size_t>(tf)];

  const float anchor = sample.context_times[static_cast<std::size_t>(anchor_index)];
  sample.anchor_clip_time = anchor;
  for (float& t : sample.context_times) t -= anchor;
  sample.target_time -= anchor;
  return sample;
}

}  // namespace timecast::scene
