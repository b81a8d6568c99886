#include "timecast/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <ostream>

#include <json.hpp>

#include "timecast/checkpoint.hpp"
#include "timecast/errors.hpp"
#include "timecast/ops.hpp"
#include "timecast/tape.hpp"

namespace timecast::train {

using json = nlohmann::ordered_json;

float TrainResult::ema_at(int iteration) const {
  if (iteration < 1 || iteration > static_cast<int>(ema_losses.size())) {
    throw Error(errtag::kRange, "ema_at: iteration out of range");
  }
  return ema_losses[static_cast<std::size_t>(iteration - 1)];
}

namespace {

// Regression tuples use the evaluation geometry: contexts on consecutive
// grid frames at the configured offsets, target one horizon unit ahead.
scene::TrainingSample sample_regression_tuple(const scene::VideoClip& clip,
                                              RandomSource& rng,
                                              const RunConfig& cfg) {
  const int n = static_cast<int>(clip.frames.size());
  std::vector<int> offsets;
  for (float off : cfg.context_offsets) {
    offsets.push_back(static_cast<int>(std::lround(off * clip.fps)));
  }
  const int target_off = static_cast<int>(std::lround(1.f * clip.fps));
  const int min_anchor = -offsets.front();
  const int max_anchor = n - 1 - target_off;
  if (max_anchor < min_anchor) {
    throw Error(errtag::kDataset, "clip too short for regression tuples");
  }
  const int anchor = rng.uniform_int(min_anchor, max_anchor);

  scene::TrainingSample s;
  s.modality = scene::Modality::kDepth;
  for (std::size_t i = 0; i < offsets.size(); ++i) {
    const int f = anchor + offsets[i];
    s.context.push_back(clip.frames[static_cast<std::size_t>(f)]);
    s.context_times.push_back(cfg.context_offsets[i]);
  }
  s.target = clip.frames[static_cast<std::size_t>(anchor + target_off)];
  s.target_time = 1.f;
  return s;
}

}  // namespace

TrainResult run_training(const RunConfig& cfg,
                         const scene::DatasetManifest& manifest,
                         const std::filesystem::path& dataset_dir,
                         const std::filesystem::path& out_checkpoint,
                         std::ostream* progress) {
  const auto t_start = std::chrono::steady_clock::now();
  if (manifest.train_ids.empty()) {
    throw Error(errtag::kDataset, "dataset has no training clips");
  }
  const bool regression = cfg.objective == "regression";

  std::vector<scene::VideoClip> clips;
  clips.reserve(manifest.train_ids.size());
  for (const std::string& id : manifest.train_ids) {
    clips.push_back(scene::load_clip(dataset_dir, scene::find_clip(manifest, id)));
  }

  diffusion::ForecastModel model(cfg.model_config(), cfg.train_seed);
  nn::ParamRefs params = model.parameters();
  nn::AdamW optimizer(cfg.adamw_config(), params);
  const diffusion::NoiseSchedule schedule = diffusion::NoiseSchedule::linear();
  RandomSource rng(mix_seed(cfg.train_seed, 0x72a11u));

  const auto make_bundle = [&](const scene::TrainingSample& s) {
    std::vector<const scene::Frame*> ctx;
    for (const scene::Frame& f : s.context) ctx.push_back(&f);
    return model.make_bundle(ctx, s.context_times, s.target_time);
  };
  const auto make_null = [&]() { return model.make_null(); };
  const diffusion::EpsModel eps = model.eps_model();

  TrainResult result;
  result.checkpoint = out_checkpoint;
  float ema = 0.f;

  for (int iter = 1; iter <= cfg.iterations; ++iter) {
    std::vector<scene::TrainingSample> batch;
    batch.reserve(static_cast<std::size_t>(cfg.batch_size));
    for (int b = 0; b < cfg.batch_size; ++b) {
      const scene::VideoClip& clip = clips[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<int>(clips.size()) - 1))];
      scene::TrainingSample s =
          regression
              ? sample_regression_tuple(clip, rng, cfg)
              : scene::sample_training_tuple(
                    clip, rng, cfg.window_seconds, cfg.anchor_index,
                    !cfg.disable_timestamp_randomization, cfg.k_context,
                    manifest.modality);
      if (cfg.disable_anchoring && !regression) {
        // absolute clip timestamps instead of anchored ones
        for (float& t : s.context_times) t += s.anchor_clip_time;
        s.target_time += s.anchor_clip_time;
      }
      batch.push_back(std::move(s));
    }

    nn::zero_grads(params);
    Tape tape;
    float loss_value = 0.f;
    {
      TapeScope scope(tape);
      Tensor loss;
      if (regression) {
        const std::int64_t hw = cfg.dist.width;
        const std::int64_t b = static_cast<std::int64_t>(batch.size());
        Tensor z = Tensor::zeros({b, 1, hw, hw});
        Tensor target = Tensor::zeros({b, 1, hw, hw});
        std::vector<int> steps(static_cast<std::size_t>(b), 0);
        std::vector<cond::ConditioningBundle> bundles;
        for (std::int64_t s = 0; s < b; ++s) {
          const scene::TrainingSample& sample = batch[static_cast<std::size_t>(s)];
          bundles.push_back(make_bundle(sample));
          float* row = target.data_ptr() + s * hw * hw;
          for (std::size_t p = 0; p < sample.target.size(); ++p) {
            row[p] = cond::frame_to_model(sample.target[p]);
          }
        }
        loss = ops::mse_loss(model.predict_eps(z, steps, bundles), target);
      } else {
        loss = diffusion::training_loss(batch, eps, make_bundle, make_null,
                                        schedule, rng, cfg.cfg_drop);
      }
      loss_value = loss.item();
      if (!std::isfinite(loss_value)) {
        throw Error(errtag::kNanLoss,
                    "non-finite loss at iteration " + std::to_string(iter));
      }
      tape.backward(loss);
    }
    optimizer.step(params);

    ema = iter == 1 ? loss_value
                    : cfg.ema_alpha * ema + (1.f - cfg.ema_alpha) * loss_value;
    result.losses.push_back(loss_value);
    result.ema_losses.push_back(ema);

    if (progress && (iter % cfg.log_every == 0 || iter == 1 || iter == cfg.iterations)) {
      (*progress) << "iter " << iter << "/" << cfg.iterations
                  << " loss " << loss_value << " ema " << ema << "\n";
      progress->flush();
    }
  }

  save_checkpoint(out_checkpoint, params, &optimizer);
  result.checkpoint_hash = nn::file_content_hash(out_checkpoint);
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();

  // loss log
  {
    std::ofstream os(out_checkpoint.string() + ".loss.csv");
    os << "iteration,loss,ema\n";
    char buf[96];
    for (std::size_t i = 0; i < result.losses.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%zu,%.6f,%.6f\n", i + 1,
                    static_cast<double>(result.losses[i]),
                    static_cast<double>(result.ema_losses[i]));
      os << buf;
    }
  }
  // sidecar manifest
  {
    json side;
    side["schema"] = "timecast-checkpoint-v1";
    side["config_hash_core"] = cfg.hash_core();
    side["config_hash_full"] = cfg.hash_full();
    side["objective"] = cfg.objective;
    side["iterations"] = cfg.iterations;
    side["train_seed"] = cfg.train_seed;
    side["dataset_seed"] = cfg.dataset_seed;
    side["wall_seconds"] = result.wall_seconds;
    side["final_ema"] = result.ema_losses.back();
    side["checkpoint_hash"] = result.checkpoint_hash;
    std::ofstream os(out_checkpoint.string() + ".json");
    os << side.dump(2) << "\n";
    if (!os.good()) throw Error(errtag::kIo, "failed writing checkpoint sidecar");
  }
  return result;
}

diffusion::ForecastModel load_model(const RunConfig& cfg,
                                    const std::filesystem::path& checkpoint,
                                    bool allow_hash_mismatch) {
  std::ifstream is(checkpoint.string() + ".json");
  if (!is) {
    throw Error(errtag::kCheckpoint,
                "missing checkpoint sidecar " + checkpoint.string() + ".json");
  }
  json side = json::parse(is, nullptr, true);
  const std::string ckpt_hash = side.at("config_hash_core").get<std::string>();
  if (ckpt_hash != cfg.hash_core() && !allow_hash_mismatch) {
    throw Error(errtag::kHashMismatch,
                "checkpoint was trained with config hash " + ckpt_hash +
                    " but the current config hashes to " + cfg.hash_core() +
                    " (pass --allow-hash-mismatch to override)");
  }
  diffusion::ForecastModel model(cfg.model_config(), cfg.train_seed);
  nn::ParamRefs params = model.parameters();
  nn::bind_parameters(nn::load_checkpoint(checkpoint), params);
  return model;
}

}  // namespace timecast::train
