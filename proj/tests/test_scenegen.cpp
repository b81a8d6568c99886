#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "timecast/dataset.hpp"
#include "timecast/errors.hpp"
#include "timecast/pgm.hpp"
#include "timecast/scene.hpp"

using namespace timecast;
using namespace timecast::scene;
namespace fs = std::filesystem;

namespace {

SceneSpec single_disc_spec(Vec2 velocity) {
  SceneSpec spec;
  spec.width = 32;
  spec.height = 32;
  spec.fps = 2.f;
  spec.duration = 12.f;
  MovingObject o;
  o.kind = ShapeKind::kDisc;
  o.size = 8.f;
  o.position0 = {8.f, 16.f};
  o.velocity = velocity;
  o.depth = 0.4f;
  spec.objects.push_back(o);
  return spec;
}

}  // namespace

TEST_CASE("generate_clip is deterministic in (spec, seed)") {
  const SceneSpec spec = single_disc_spec({2.f, 0.f});
  const VideoClip a = generate_clip(spec, 99);
  const VideoClip b = generate_clip(spec, 99);
  REQUIRE(a.frames.size() == b.frames.size());
  for (std::size_t f = 0; f < a.frames.size(); ++f) {
    CHECK(a.frames[f] == b.frames[f]);  // bit-identical
  }
  const VideoClip c = generate_clip(spec, 100);
  CHECK(a.frames.size() == c.frames.size());
}

TEST_CASE("linear motion: rendered centroid tracks x0 + v*t to sub-pixel") {
  SceneSpec spec = single_disc_spec({2.f, 0.f});
  const VideoClip clip = generate_clip(spec, 1);
  for (std::size_t j = 0; j < 8; ++j) {
    const float t = clip.timestamps[j];
    const float expected_x = 8.f + 2.f * t;
    double cx = 0.0, mass = 0.0;
    for (int y = 0; y < 32; ++y) {
      for (int x = 0; x < 32; ++x) {
        if (clip.frames[j][static_cast<std::size_t>(y * 32 + x)] < 0.85f) {
          cx += x + 0.5;
          mass += 1.0;
        }
      }
    }
    REQUIRE(mass > 0.0);
    CHECK(std::fabs(cx / mass - expected_x) < 1.0);
  }
}

TEST_CASE("z-buffer: overlap pixels read the nearer depth") {
  SceneSpec spec;
  spec.fps = 2.f;
  spec.duration = 2.f;
  MovingObject near;
  near.size = 10.f;
  near.position0 = {16.f, 16.f};
  near.depth = 0.3f;
  MovingObject far = near;
  far.depth = 0.6f;
  spec.objects = {near, far};
  const VideoClip clip = generate_clip(spec, 5);
  CHECK(clip.frames[0][16 * 32 + 16] == doctest::Approx(0.3f));
}

TEST_CASE("invalid specs are rejected with the violated constraint") {
  SceneSpec spec = single_disc_spec({1.f, 0.f});
  spec.objects.clear();
  CHECK_THROWS_WITH_AS(generate_clip(spec, 1), doctest::Contains("at least 1"),
                       Error);

  SceneSpec bad_depth = single_disc_spec({1.f, 0.f});
  bad_depth.objects[0].depth = 1.5f;
  CHECK_THROWS_WITH_AS(generate_clip(bad_depth, 1),
                       doctest::Contains("depth in (0,1)"), Error);

  SceneSpec behind = single_disc_spec({1.f, 0.f});
  behind.objects[0].depth = 0.95f;  // background is 0.9
  CHECK_THROWS_WITH_AS(generate_clip(behind, 1),
                       doctest::Contains("background"), Error);

  SceneSpec short_clip = single_disc_spec({1.f, 0.f});
  short_clip.duration = 1.f;
  short_clip.fps = 2.f;  // (K+1)/fps = 2s > 1s
  CHECK_THROWS_AS(generate_clip(short_clip, 1), Error);
}

TEST_CASE("depth values stay in [0,1] and respect occlusion at every frame") {
  RandomSource rng(7);
  SceneDistribution dist;
  for (int trial = 0; trial < 5; ++trial) {
    const SceneSpec spec = draw_scene(dist, rng);
    const VideoClip clip = generate_clip(spec, 1000 + trial);
    for (const Frame& f : clip.frames) {
      for (float v : f) {
        CHECK(v >= 0.f);
        CHECK(v <= 1.f);
      }
    }
  }
}

TEST_CASE("training tuple anchoring puts zero at the anchor position") {
  const SceneSpec spec = single_disc_spec({2.f, 0.f});
  const VideoClip clip = generate_clip(spec, 3);
  RandomSource rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const int anchor = trial % 3;
    const TrainingSample s =
        sample_training_tuple(clip, rng, 8.f, anchor, true);
    CHECK(s.context_times[static_cast<std::size_t>(anchor)] == 0.f);
    // timestamps mutually distinct
    std::vector<float> all = s.context_times;
    all.push_back(s.target_time);
    std::sort(all.begin(), all.end());
    CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());
  }
}

TEST_CASE("non-randomized tuples are pure forecasting on a forced window") {
  // 1 fps clip; a window of exactly K+1 frames forces consecutive picks
  SceneSpec spec = single_disc_spec({1.f, 0.f});
  spec.fps = 1.f;
  spec.duration = 12.f;
  const VideoClip clip = generate_clip(spec, 4);
  RandomSource rng(13);
  const TrainingSample s = sample_training_tuple(clip, rng, 3.f, 2, false);
  CHECK(s.context_times[0] == doctest::Approx(-2.f));
  CHECK(s.context_times[1] == doctest::Approx(-1.f));
  CHECK(s.context_times[2] == doctest::Approx(0.f));
  CHECK(s.target_time == doctest::Approx(1.f));
}

TEST_CASE("randomized roles hit each target position uniformly") {
  const SceneSpec spec = single_disc_spec({2.f, 0.f});
  const VideoClip clip = generate_clip(spec, 8);
  RandomSource rng(17);
  const int draws = 10000;
  int target_latest = 0;
  std::vector<int> position_counts(4, 0);
  for (int i = 0; i < draws; ++i) {
    const TrainingSample s = sample_training_tuple(clip, rng, 8.f, 2, true);
    std::vector<float> all = s.context_times;
    all.push_back(s.target_time);
    // position of the target among the K+1 drawn frames, by time order
    std::vector<float> sorted = all;
    std::sort(sorted.begin(), sorted.end());
    const auto it = std::find(sorted.begin(), sorted.end(), s.target_time);
    position_counts[static_cast<std::size_t>(it - sorted.begin())]++;
    if (s.target_time > *std::max_element(s.context_times.begin(),
                                          s.context_times.end())) {
      ++target_latest;
    }
  }
  for (int count : position_counts) {
    CHECK(std::fabs(count / static_cast<double>(draws) - 0.25) < 0.02);
  }
  CHECK(std::fabs(target_latest / static_cast<double>(draws) - 0.25) < 0.02);
}

TEST_CASE("window shorter than K+1 frame intervals is an error") {
  const SceneSpec spec = single_disc_spec({2.f, 0.f});
  const VideoClip clip = generate_clip(spec, 9);
  RandomSource rng(19);
  CHECK_THROWS_WITH_AS(sample_training_tuple(clip, rng, 1.f, 2, true),
                       doctest::Contains("shorter than K+1"), Error);
}

TEST_CASE("pgm16 roundtrip is exact on the quantization grid") {
  const fs::path dir = fs::temp_directory_path() / "timecast_pgm_test";
  fs::create_directories(dir);
  RandomSource rng(23);
  std::vector<float> values(32 * 32);
  for (float& v : values) v = static_cast<float>(rng.uniform());
  pgm::write_pgm16(dir / "t.pgm", 32, 32, values);
  const pgm::Image img = pgm::read_pgm16(dir / "t.pgm");
  REQUIRE(img.width == 32);
  REQUIRE(img.height == 32);
  for (std::size_t i = 0; i < values.size(); ++i) {
    CHECK(std::fabs(img.values[i] - values[i]) <= 0.5f / 65535.f + 1e-7f);
  }
  // second roundtrip is bit-exact
  pgm::write_pgm16(dir / "t2.pgm", 32, 32, img.values);
  const pgm::Image img2 = pgm::read_pgm16(dir / "t2.pgm");
  CHECK(img.values == img2.values);
}

TEST_CASE("build_dataset splits clips disjointly with the right sizes") {
  SceneDistribution dist;
  const DatasetManifest m = build_dataset(10, dist, 5, 0.8f,
                                          Modality::kDepth, "hash");
  CHECK(m.train_ids.size() == 8);
  CHECK(m.eval_ids.size() == 2);
  for (const std::string& id : m.eval_ids) {
    CHECK(std::find(m.train_ids.begin(), m.train_ids.end(), id) ==
          m.train_ids.end());
  }
  CHECK_THROWS_AS(build_dataset(1, dist, 5, 0.8f, Modality::kDepth, "h"), Error);
}

TEST_CASE("dataset write + manifest regeneration reproduces identical clips") {
  const fs::path dir = fs::temp_directory_path() / "timecast_ds_test";
  fs::remove_all(dir);
  SceneDistribution dist;
  dist.duration = 6.f;
  const DatasetManifest m = build_dataset(4, dist, 77, 0.75f,
                                          Modality::kDepth, "hash");
  write_dataset(m, dir);

  const DatasetManifest loaded = load_dataset_manifest(dir);
  REQUIRE(loaded.clips.size() == 4);
  for (const ClipRecord& rec : loaded.clips) {
    const VideoClip regen = generate_clip(rec.spec, rec.seed, loaded.modality);
    const VideoClip from_disk = load_clip(dir, rec);
    REQUIRE(regen.frames.size() == from_disk.frames.size());
    for (std::size_t f = 0; f < regen.frames.size(); ++f) {
      for (std::size_t p = 0; p < regen.frames[f].size(); ++p) {
        // disk stores 16-bit quantized values
        CHECK(std::fabs(regen.frames[f][p] - from_disk.frames[f][p]) <=
              0.5f / 65535.f + 1e-7f);
      }
    }
  }

  // rerun writes identical bytes
  const fs::path dir2 = fs::temp_directory_path() / "timecast_ds_test2";
  fs::remove_all(dir2);
  write_dataset(m, dir2);
  for (const ClipRecord& rec : m.clips) {
    const auto a = fs::file_size(dir / "clips" / rec.id / "frame_0000.pgm");
    const auto b = fs::file_size(dir2 / "clips" / rec.id / "frame_0000.pgm");
    CHECK(a == b);
  }
}

TEST_CASE("grayscale modality renders albedo with the same geometry") {
  SceneSpec spec = single_disc_spec({0.f, 0.f});
  spec.objects[0].albedo = 0.77f;
  const VideoClip depth = generate_clip(spec, 2, Modality::kDepth);
  const VideoClip gray = generate_clip(spec, 2, Modality::kGrayscale);
  // same coverage: pixels where depth < background are the albedo pixels
  for (std::size_t p = 0; p < depth.frames[0].size(); ++p) {
    if (depth.frames[0][p] < 0.85f) {
      CHECK(gray.frames[0][p] == doctest::Approx(0.77f));
    } else {
      CHECK(gray.frames[0][p] == doctest::Approx(spec.background_albedo));
    }
  }
}
