#include "timecast/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "timecast/errors.hpp"
#include "timecast/pgm.hpp"

namespace timecast::scene {

using json = nlohmann::ordered_json;

SceneSpec draw_scene(const SceneDistribution& dist, RandomSource& rng) {
  SceneSpec spec;
  spec.width = dist.width;
  spec.height = dist.height;
  spec.fps = dist.fps;
  spec.duration = dist.duration;
  spec.background_depth = dist.background_depth;

  const double u = rng.uniform();
  const bool sanity = u < dist.sanity_fraction;
  const bool turning = !sanity && u < dist.sanity_fraction + dist.turn_fraction;

  const int n_objects = rng.uniform_int(dist.min_objects, dist.max_objects);
  for (int i = 0; i < n_objects; ++i) {
    MovingObject o;
    o.kind = rng.bernoulli(0.5) ? ShapeKind::kDisc : ShapeKind::kRectangle;
    o.size = rng.uniform_range(dist.min_size, dist.max_size);
    o.position0 = {rng.uniform_range(0.2f, 0.8f) * dist.width,
                   rng.uniform_range(0.2f, 0.8f) * dist.height};
    o.depth = rng.uniform_range(dist.min_depth, dist.max_depth);
    o.albedo = rng.uniform_range(0.5f, 1.f);
    if (sanity) {
      o.velocity = {0.f, 0.f};
      float rate = rng.uniform_range(0.4f * dist.depth_rate_max, dist.depth_rate_max) *
                   (rng.bernoulli(0.5) ? 1.f : -1.f);
      // keep depth inside (0,1) and below background over the whole clip
      const float end = o.depth + rate * dist.duration;
      if (end <= 0.05f || end >= dist.background_depth - 0.05f) rate = -rate;
      o.depth_rate = rate;
    } else {
      const float speed = rng.uniform_range(dist.min_speed, dist.max_speed);
      const float ang = rng.uniform_range(0.f, 6.2831853f);
      o.velocity = {speed * std::cos(ang), speed * std::sin(ang)};
      if (turning && i == 0) {
        o.turn.enabled = true;
        o.turn.time = rng.uniform_range(dist.turn_window_lo, dist.turn_window_hi);
      }
    }
    spec.objects.push_back(o);
  }
  if (!sanity) {
    spec.camera_velocity = {
        rng.uniform_range(-dist.camera_speed_max, dist.camera_speed_max),
        rng.uniform_range(-dist.camera_speed_max, dist.camera_speed_max)};
  }
  return spec;
}

namespace {

json vec2_to_json(const Vec2& v) { return json{{"x", v.x}, {"y", v.y}}; }
Vec2 vec2_from_json(const json& j) {
  return {j.at("x").get<float>(), j.at("y").get<float>()};
}

json object_to_json(const MovingObject& o) {
  json j;
  j["kind"] = o.kind == ShapeKind::kDisc ? "disc" : "rectangle";
  j["size"] = o.size;
  j["position0"] = vec2_to_json(o.position0);
  j["velocity"] = vec2_to_json(o.velocity);
  j["depth"] = o.depth;
  j["depth_rate"] = o.depth_rate;
  j["albedo"] = o.albedo;
  j["turn_enabled"] = o.turn.enabled;
  j["turn_time"] = o.turn.time;
  if (!std::isnan(o.turn.new_velocity.x)) {
    j["turn_velocity"] = vec2_to_json(o.turn.new_velocity);
  }
  return j;
}

MovingObject object_from_json(const json& j) {
  MovingObject o;
  o.kind = j.at("kind").get<std::string>() == "disc" ? ShapeKind::kDisc
                                                     : ShapeKind::kRectangle;
  o.size = j.at("size").get<float>();
  o.position0 = vec2_from_json(j.at("position0"));
  o.velocity = vec2_from_json(j.at("velocity"));
  o.depth = j.at("depth").get<float>();
  o.depth_rate = j.at("depth_rate").get<float>();
  o.albedo = j.at("albedo").get<float>();
  o.turn.enabled = j.at("turn_enabled").get<bool>();
  o.turn.time = j.at("turn_time").get<float>();
  if (j.contains("turn_velocity")) {
    o.turn.new_velocity = vec2_from_json(j.at("turn_velocity"));
  }
  return o;
}

json spec_to_json(const SceneSpec& s) {
  json j;
  j["width"] = s.width;
  j["height"] = s.height;
  j["fps"] = s.fps;
  j["duration"] = s.duration;
  j["camera_velocity"] = vec2_to_json(s.camera_velocity);
  j["background_depth"] = s.background_depth;
  j["background_albedo"] = s.background_albedo;
  j["objects"] = json::array();
  for (const MovingObject& o : s.objects) j["objects"].push_back(object_to_json(o));
  return j;
}

SceneSpec spec_from_json(const json& j) {
  SceneSpec s;
  s.width = j.at("width").get<int>();
  s.height = j.at("height").get<int>();
  s.fps = j.at("fps").get<float>();
  s.duration = j.at("duration").get<float>();
  s.camera_velocity = vec2_from_json(j.at("camera_velocity"));
  s.background_depth = j.at("background_depth").get<float>();
  s.background_albedo = j.at("background_albedo").get<float>();
  for (const json& o : j.at("objects")) s.objects.push_back(object_from_json(o));
  return s;
}

json dist_to_json(const SceneDistribution& d) {
  json j;
  j["width"] = d.width;
  j["height"] = d.height;
  j["fps"] = d.fps;
  j["duration"] = d.duration;
  j["min_objects"] = d.min_objects;
  j["max_objects"] = d.max_objects;
  j["min_size"] = d.min_size;
  j["max_size"] = d.max_size;
  j["min_speed"] = d.min_speed;
  j["max_speed"] = d.max_speed;
  j["min_depth"] = d.min_depth;
  j["max_depth"] = d.max_depth;
  j["background_depth"] = d.background_depth;
  j["camera_speed_max"] = d.camera_speed_max;
  j["sanity_fraction"] = d.sanity_fraction;
  j["turn_fraction"] = d.turn_fraction;
  j["turn_window_lo"] = d.turn_window_lo;
  j["turn_window_hi"] = d.turn_window_hi;
  j["depth_rate_max"] = d.depth_rate_max;
  j["eval_anchor_time"] = d.eval_anchor_time;
  return j;
}

SceneDistribution dist_from_json(const json& j) {
  SceneDistribution d;
  d.width = j.at("width").get<int>();
  d.height = j.at("height").get<int>();
  d.fps = j.at("fps").get<float>();
  d.duration = j.at("duration").get<float>();
  d.min_objects = j.at("min_objects").get<int>();
  d.max_objects = j.at("max_objects").get<int>();
  d.min_size = j.at("min_size").get<float>();
  d.max_size = j.at("max_size").get<float>();
  d.min_speed = j.at("min_speed").get<float>();
  d.max_speed = j.at("max_speed").get<float>();
  d.min_depth = j.at("min_depth").get<float>();
  d.max_depth = j.at("max_depth").get<float>();
  d.background_depth = j.at("background_depth").get<float>();
  d.camera_speed_max = j.at("camera_speed_max").get<float>();
  d.sanity_fraction = j.at("sanity_fraction").get<float>();
  d.turn_fraction = j.at("turn_fraction").get<float>();
  d.turn_window_lo = j.at("turn_window_lo").get<float>();
  d.turn_window_hi = j.at("turn_window_hi").get<float>();
  d.depth_rate_max = j.at("depth_rate_max").get<float>();
  d.eval_anchor_time = j.at("eval_anchor_time").get<float>();
  return d;
}

std::string clip_id(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "clip_%05d", index);
  return buf;
}

}  // namespace

DatasetManifest build_dataset(int n_clips, const SceneDistribution& dist,
                              std::uint64_t seed, float train_fraction,
                              Modality modality,
                              const std::string& config_hash) {
  if (n_clips < 2) {
    throw Error(errtag::kDataset, "n_clips must be >= 2 for a disjoint split");
  }
  if (!(train_fraction > 0.f && train_fraction < 1.f)) {
    throw Error(errtag::kDataset, "train_fraction must be in (0,1)");
  }
  const float anchor_grid = dist.eval_anchor_time * dist.fps;
  if (std::fabs(anchor_grid - std::lround(anchor_grid)) > 1e-4f) {
    throw Error(errtag::kDataset, "eval_anchor_time must land on the frame grid");
  }

  DatasetManifest m;
  m.dist = dist;
  m.seed = seed;
  m.train_fraction = train_fraction;
  m.modality = modality;
  m.config_hash = config_hash;

  for (int i = 0; i < n_clips; ++i) {
    ClipRecord rec;
    rec.id = clip_id(i);
    rec.seed = mix_seed(seed, 0xc11b5u, static_cast<std::uint64_t>(i));
    RandomSource spec_rng(mix_seed(seed, 0x57ec5u, static_cast<std::uint64_t>(i)));
    rec.spec = draw_scene(dist, spec_rng);
    rec.spec.validate();
    rec.eval_anchor_time = dist.eval_anchor_time;
    rec.turns = resolve_turns(rec.spec, rec.seed);
    rec.multimodal = std::any_of(rec.turns.begin(), rec.turns.end(),
                                 [&](const ResolvedTurn& t) {
                                   return t.time > dist.eval_anchor_time;
                                 });
    rec.sanity = rec.turns.empty() &&
                 std::all_of(rec.spec.objects.begin(), rec.spec.objects.end(),
                             [](const MovingObject& o) {
                               return o.velocity.x == 0.f && o.velocity.y == 0.f;
                             }) &&
                 rec.spec.camera_velocity.x == 0.f &&
                 rec.spec.camera_velocity.y == 0.f;
    m.clips.push_back(std::move(rec));
  }

  // clip-level split
  std::vector<int> order(static_cast<std::size_t>(n_clips));
  std::iota(order.begin(), order.end(), 0);
  RandomSource split_rng(mix_seed(seed, 0x5911fu));
  for (int i = n_clips - 1; i > 0; --i) {
    const int j = split_rng.uniform_int(0, i);
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  int n_train = static_cast<int>(std::lround(train_fraction * n_clips));
  n_train = std::clamp(n_train, 1, n_clips - 1);
  for (int i = 0; i < n_clips; ++i) {
    const std::string& id = m.clips[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])].id;
    (i < n_train ? m.train_ids : m.eval_ids).push_back(id);
  }
  std::sort(m.train_ids.begin(), m.train_ids.end());
  std::sort(m.eval_ids.begin(), m.eval_ids.end());
  return m;
}

void write_dataset(const DatasetManifest& manifest,
                   const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "clips");

  json root;
  root["schema"] = "timecast-dataset-v1";
  root["seed"] = manifest.seed;
  root["train_fraction"] = manifest.train_fraction;
  root["modality"] = modality_name(manifest.modality);
  root["config_hash"] = manifest.config_hash;
  root["distribution"] = dist_to_json(manifest.dist);
  root["train_ids"] = manifest.train_ids;
  root["eval_ids"] = manifest.eval_ids;
  root["clip_ids"] = json::array();

  for (const ClipRecord& rec : manifest.clips) {
    root["clip_ids"].push_back(rec.id);
    const fs::path clip_dir = out_dir / "clips" / rec.id;
    fs::create_directories(clip_dir);
    const VideoClip clip = generate_clip(rec.spec, rec.seed, manifest.modality);

    json cj;
    cj["id"] = rec.id;
    cj["seed"] = rec.seed;
    cj["fps"] = clip.fps;
    cj["width"] = clip.width;
    cj["height"] = clip.height;
    cj["eval_anchor_time"] = rec.eval_anchor_time;
    cj["multimodal"] = rec.multimodal;
    cj["sanity"] = rec.sanity;
    cj["timestamps"] = clip.timestamps;
    cj["spec"] = spec_to_json(rec.spec);
    cj["turns"] = json::array();
    for (const ResolvedTurn& t : rec.turns) {
      cj["turns"].push_back(json{{"object", t.object_index},
                                 {"time", t.time},
                                 {"velocity", vec2_to_json(t.new_velocity)}});
    }

    for (std::size_t f = 0; f < clip.frames.size(); ++f) {
      char name[32];
      std::snprintf(name, sizeof(name), "frame_%04zu.pgm", f);
      pgm::write_pgm16(clip_dir / name, clip.width, clip.height, clip.frames[f]);
    }
    std::ofstream os(clip_dir / "manifest.json");
    os << cj.dump(2) << "\n";
    if (!os.good()) throw Error(errtag::kIo, "failed writing clip manifest for " + rec.id);
  }

  std::ofstream os(out_dir / "dataset.json");
  os << root.dump(2) << "\n";
  if (!os.good()) throw Error(errtag::kIo, "failed writing dataset.json");
}

DatasetManifest load_dataset_manifest(const std::filesystem::path& dir) {
  std::ifstream is(dir / "dataset.json");
  if (!is) {
    throw Error(errtag::kDataset, "no dataset.json under " + dir.string());
  }
  json root = json::parse(is, nullptr, true);
  DatasetManifest m;
  m.seed = root.at("seed").get<std::uint64_t>();
  m.train_fraction = root.at("train_fraction").get<float>();
  m.modality = parse_modality(root.at("modality").get<std::string>());
  m.config_hash = root.at("config_hash").get<std::string>();
  m.dist = dist_from_json(root.at("distribution"));
  m.train_ids = root.at("train_ids").get<std::vector<std::string>>();
  m.eval_ids = root.at("eval_ids").get<std::vector<std::string>>();

  for (const json& idj : root.at("clip_ids")) {
    const std::string id = idj.get<std::string>();
    std::ifstream cis(dir / "clips" / id / "manifest.json");
    if (!cis) throw Error(errtag::kDataset, "missing clip manifest for " + id);
    json cj = json::parse(cis, nullptr, true);
    ClipRecord rec;
    rec.id = id;
    rec.seed = cj.at("seed").get<std::uint64_t>();
    rec.spec = spec_from_json(cj.at("spec"));
    rec.eval_anchor_time = cj.at("eval_anchor_time").get<float>();
    rec.multimodal = cj.at("multimodal").get<bool>();
    rec.sanity = cj.at("sanity").get<bool>();
    for (const json& tj : cj.at("turns")) {
      ResolvedTurn t;
      t.object_index = tj.at("object").get<int>();
      t.time = tj.at("time").get<float>();
      t.new_velocity = vec2_from_json(tj.at("velocity"));
      rec.turns.push_back(t);
    }
    m.clips.push_back(std::move(rec));
  }
  return m;
}

const ClipRecord& find_clip(const DatasetManifest& manifest, const std::string& id) {
  for (const ClipRecord& rec : manifest.clips) {
    if (rec.id == id) return rec;
  }
  throw Error(errtag::kDataset, "unknown clip id: " + id);
}

VideoClip load_clip(const std::filesystem::path& dataset_dir,
                    const ClipRecord& record) {
  namespace fs = std::filesystem;
  const fs::path clip_dir = dataset_dir / "clips" / record.id;
  std::ifstream cis(clip_dir / "manifest.json");
  if (!cis) throw Error(errtag::kDataset, "missing clip manifest for " + record.id);
  json cj = json::parse(cis, nullptr, true);

  VideoClip clip;
  clip.width = cj.at("width").get<int>();
  clip.height = cj.at("height").get<int>();
  clip.fps = cj.at("fps").get<float>();
  clip.seed = record.seed;
  clip.timestamps = cj.at("timestamps").get<std::vector<float>>();
  for (std::size_t f = 0; f < clip.timestamps.size(); ++f) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%04zu.pgm", f);
    pgm::Image img = pgm::read_pgm16(clip_dir / name);
    if (img.width != clip.width || img.height != clip.height) {
      throw Error(errtag::kDataset, "frame size mismatch in clip " + record.id);
    }
    clip.frames.push_back(std::move(img.values));
  }
  return clip;
}

int frame_index_at(const VideoClip& clip, float time_seconds) {
  const float idx = time_seconds * clip.fps;
  const long rounded = std::lround(idx);
  if (std::fabs(idx - static_cast<float>(rounded)) > 1e-3f || rounded < 0 ||
      rounded >= static_cast<long>(clip.frames.size())) {
    throw Error(errtag::kDataset,
                "time " + std::to_string(time_seconds) +
                    "s is off the frame grid or outside the clip");
  }
  return static_cast<int>(rounded);
}

}  // namespace timecast::scene
