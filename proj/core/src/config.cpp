#include "timecast/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>

#include <json.hpp>

#include "timecast/errors.hpp"

namespace timecast {

using json = nlohmann::json;

namespace {

struct FieldTable {
  std::map<std::string, std::function<void(RunConfig&, const json&)>> setters;
  std::map<std::string, std::function<json(const RunConfig&)>> getters;

  template <typename T, typename Member>
  void bind(const std::string& key, Member member) {
    setters[key] = [member](RunConfig& c, const json& v) {
      c.*member = v.get<T>();
    };
    getters[key] = [member](const RunConfig& c) { return json(c.*member); };
  }

  template <typename T, typename Member>
  void bind_dist(const std::string& key, Member member) {
    setters[key] = [member](RunConfig& c, const json& v) {
      c.dist.*member = v.get<T>();
    };
    getters[key] = [member](const RunConfig& c) { return json(c.dist.*member); };
  }
};

const FieldTable& fields() {
  static const FieldTable table = [] {
    FieldTable t;
    t.setters["modality"] = [](RunConfig& c, const json& v) {
      c.modality = scene::parse_modality(v.get<std::string>());
    };
    t.getters["modality"] = [](const RunConfig& c) {
      return json(scene::modality_name(c.modality));
    };

    t.bind<int>("dataset.n_clips", &RunConfig::n_clips);
    t.bind<float>("dataset.train_fraction", &RunConfig::train_fraction);
    t.bind<std::uint64_t>("dataset.seed", &RunConfig::dataset_seed);
    t.bind_dist<int>("dataset.width", &scene::SceneDistribution::width);
    t.bind_dist<int>("dataset.height", &scene::SceneDistribution::height);
    t.bind_dist<float>("dataset.fps", &scene::SceneDistribution::fps);
    t.bind_dist<float>("dataset.duration", &scene::SceneDistribution::duration);
    t.bind_dist<int>("dataset.min_objects", &scene::SceneDistribution::min_objects);
    t.bind_dist<int>("dataset.max_objects", &scene::SceneDistribution::max_objects);
    t.bind_dist<float>("dataset.min_size", &scene::SceneDistribution::min_size);
    t.bind_dist<float>("dataset.max_size", &scene::SceneDistribution::max_size);
    t.bind_dist<float>("dataset.min_speed", &scene::SceneDistribution::min_speed);
    t.bind_dist<float>("dataset.max_speed", &scene::SceneDistribution::max_speed);
    t.bind_dist<float>("dataset.min_depth", &scene::SceneDistribution::min_depth);
    t.bind_dist<float>("dataset.max_depth", &scene::SceneDistribution::max_depth);
    t.bind_dist<float>("dataset.background_depth",
                       &scene::SceneDistribution::background_depth);
    t.bind_dist<float>("dataset.camera_speed_max",
                       &scene::SceneDistribution::camera_speed_max);
    t.bind_dist<float>("dataset.sanity_fraction",
                       &scene::SceneDistribution::sanity_fraction);
    t.bind_dist<float>("dataset.turn_fraction",
                       &scene::SceneDistribution::turn_fraction);
    t.bind_dist<float>("dataset.turn_window_lo",
                       &scene::SceneDistribution::turn_window_lo);
    t.bind_dist<float>("dataset.turn_window_hi",
                       &scene::SceneDistribution::turn_window_hi);
    t.bind_dist<float>("dataset.depth_rate_max",
                       &scene::SceneDistribution::depth_rate_max);
    t.bind_dist<float>("dataset.eval_anchor_time",
                       &scene::SceneDistribution::eval_anchor_time);

    t.bind<int>("model.base_width", &RunConfig::base_width);
    t.bind<int>("model.k_context", &RunConfig::k_context);
    t.bind<int>("model.key_dim", &RunConfig::key_dim);
    t.bind<int>("model.d_embed", &RunConfig::d_embed);
    t.bind<int>("model.l_freqs", &RunConfig::l_freqs);
    t.bind<int>("model.groups", &RunConfig::groups);
    t.bind<int>("model.step_embed_dim", &RunConfig::step_embed_dim);
    t.bind<float>("model.time_scale", &RunConfig::time_scale);

    t.bind<int>("train.iterations", &RunConfig::iterations);
    t.bind<int>("train.batch_size", &RunConfig::batch_size);
    t.bind<float>("train.lr", &RunConfig::lr);
    t.bind<float>("train.beta1", &RunConfig::beta1);
    t.bind<float>("train.beta2", &RunConfig::beta2);
    t.bind<float>("train.eps", &RunConfig::adam_eps);
    t.bind<float>("train.weight_decay", &RunConfig::weight_decay);
    t.bind<float>("train.cfg_drop", &RunConfig::cfg_drop);
    t.bind<std::uint64_t>("train.seed", &RunConfig::train_seed);
    t.bind<float>("train.window_seconds", &RunConfig::window_seconds);
    t.bind<int>("train.anchor_index", &RunConfig::anchor_index);
    t.bind<float>("train.ema_alpha", &RunConfig::ema_alpha);
    t.bind<int>("train.log_every", &RunConfig::log_every);
    t.bind<std::string>("train.objective", &RunConfig::objective);

    t.bind<int>("sample.steps", &RunConfig::inference_steps);
    t.bind<float>("sample.guidance", &RunConfig::guidance);
    t.bind<float>("sample.w_m", &RunConfig::w_m);
    t.bind<int>("sample.k", &RunConfig::top_k);
    t.bind<std::vector<float>>("sample.horizons", &RunConfig::horizons);
    t.bind<std::vector<float>>("sample.context_offsets",
                               &RunConfig::context_offsets);
    t.bind<std::uint64_t>("sample.seed", &RunConfig::sample_seed);

    t.bind<bool>("ablation.disable_anchoring", &RunConfig::disable_anchoring);
    t.bind<bool>("ablation.disable_timestamp_randomization",
                 &RunConfig::disable_timestamp_randomization);
    t.bind<bool>("ablation.disable_context_embedding",
                 &RunConfig::disable_context_embedding);
    t.bind<bool>("ablation.disable_cross_attention",
                 &RunConfig::disable_cross_attention);
    return t;
  }();
  return table;
}

}  // namespace

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(errtag::kConfig, "cannot open config " + path.string());
  std::string text((std::istreambuf_iterator<char>(is)),
                   std::istreambuf_iterator<char>());
  return from_json_text(text);
}

RunConfig RunConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(errtag::kConfig, std::string("config parse error: ") + e.what());
  }
  if (!j.is_object()) {
    throw Error(errtag::kConfig, "config must be a JSON object of flat keys");
  }
  RunConfig cfg;
  const FieldTable& table = fields();
  for (const auto& [key, value] : j.items()) {
    auto it = table.setters.find(key);
    if (it == table.setters.end()) {
      throw Error(errtag::kConfig, "unknown config key: " + key);
    }
    try {
      it->second(cfg, value);
    } catch (const json::exception& e) {
      throw Error(errtag::kConfig, "bad value for " + key + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

void RunConfig::validate() const {
  auto fail = [](const std::string& msg) {
    throw Error(errtag::kConfig, "config: " + msg);
  };
  if (dist.width != dist.height) fail("dataset.width must equal dataset.height");
  if (dist.width % 4 != 0) fail("dataset.width must be divisible by 4");
  if (n_clips < 2) fail("dataset.n_clips must be >= 2");
  if (!(train_fraction > 0.f && train_fraction < 1.f)) {
    fail("dataset.train_fraction in (0,1)");
  }
  if (k_context != static_cast<int>(context_offsets.size())) {
    fail("sample.context_offsets must have model.k_context entries");
  }
  if (anchor_index < 0 || anchor_index >= k_context) {
    fail("train.anchor_index must be in [0, K)");
  }
  if (base_width < 8 || base_width % 4 != 0) {
    fail("model.base_width must be >= 8 and divisible by 4");
  }
  if (l_freqs < 1 || l_freqs > 32) fail("model.l_freqs in [1,32]");
  if (!(time_scale > 0.f)) fail("model.time_scale must be > 0");
  if (iterations < 1) fail("train.iterations must be >= 1");
  if (batch_size < 1) fail("train.batch_size must be >= 1");
  if (!(cfg_drop >= 0.f && cfg_drop <= 1.f)) fail("train.cfg_drop in [0,1]");
  if (objective != "diffusion" && objective != "regression") {
    fail("train.objective must be diffusion or regression");
  }
  if (inference_steps < 1 || inference_steps > 1000) {
    fail("sample.steps in [1,1000]");
  }
  if (guidance < 0.f) fail("sample.guidance must be >= 0");
  if (w_m < 0.f) fail("sample.w_m must be >= 0");
  if (top_k < 1) fail("sample.k must be >= 1");
  if (horizons.empty()) fail("sample.horizons must be nonempty");
  if (!(ema_alpha > 0.f && ema_alpha < 1.f)) fail("train.ema_alpha in (0,1)");
  if (objective == "regression" && !disable_cross_attention) {
    fail("train.objective=regression requires ablation.disable_cross_attention");
  }
}

std::string RunConfig::canonical_text(bool include_sample) const {
  const FieldTable& table = fields();
  json out = json::object();
  for (const auto& [key, getter] : table.getters) {  // std::map: sorted keys
    if (!include_sample && key.rfind("sample.", 0) == 0) continue;
    out[key] = getter(*this);
  }
  return out.dump();
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return std::string(out);
}

std::string RunConfig::hash_core() const { return fnv1a_hex(canonical_text(false)); }
std::string RunConfig::hash_full() const { return fnv1a_hex(canonical_text(true)); }

diffusion::ModelConfig RunConfig::model_config() const {
  diffusion::ModelConfig m;
  m.image_size = dist.width;
  m.k_context = k_context;
  m.widths = {base_width, base_width * 3 / 2, base_width * 2};
  m.groups = groups;
  m.key_dim = key_dim;
  m.step_embed_dim = step_embed_dim;
  m.use_cross_attention = !disable_cross_attention;
  m.anchor_timestamps = !disable_anchoring;
  m.conditioning.k_context = k_context;
  m.conditioning.l_freqs = l_freqs;
  m.conditioning.d_embed = d_embed;
  m.conditioning.time_scale = time_scale;
  m.conditioning.image_size = dist.width;
  m.conditioning.groups = groups;
  m.conditioning.use_context_embedding = !disable_context_embedding;
  return m;
}

nn::AdamWConfig RunConfig::adamw_config() const {
  nn::AdamWConfig a;
  a.lr = lr;
  a.beta1 = beta1;
  a.beta2 = beta2;
  a.eps = adam_eps;
  a.weight_decay = weight_decay;
  return a;
}

}  // namespace timecast
