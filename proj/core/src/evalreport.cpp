#include "timecast/evalreport.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "timecast/errors.hpp"
#include "timecast/metrics.hpp"

namespace timecast::metrics {

using json = nlohmann::ordered_json;

namespace {

std::string horizon_label(float h) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "h_%+.3f", static_cast<double>(h));
  return buf;
}

std::string fmt6(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

std::string EvalReport::to_json_text() const {
  json j;
  j["schema"] = "timecast-evalreport-v1";
  j["config_hash_core"] = config_hash_core;
  j["config_hash_full"] = config_hash_full;
  j["modality"] = modality;
  j["k_values"] = k_values;
  j["rows"] = json::array();
  for (const EvalRow& row : rows) {
    json r;
    r["sampler"] = row.sampler;
    r["metric"] = row.metric;
    if (std::isnan(row.horizon)) {
      r["horizon"] = nullptr;
    } else {
      r["horizon"] = row.horizon;
    }
    json top = json::object();
    for (const auto& [k, v] : row.top) top[std::to_string(k)] = v;
    r["top"] = std::move(top);
    r["n_clips"] = row.n_clips;
    j["rows"].push_back(std::move(r));
  }
  json pc = json::object();
  for (const auto& [sampler, clips] : per_clip) {
    json cj = json::object();
    for (const auto& [clip, labels] : clips) {
      json lj = json::object();
      for (const auto& [label, tops] : labels) {
        json tj = json::object();
        for (const auto& [k, v] : tops) tj[std::to_string(k)] = v;
        lj[label] = std::move(tj);
      }
      cj[clip] = std::move(lj);
    }
    pc[sampler] = std::move(cj);
  }
  j["per_clip"] = std::move(pc);
  return j.dump(2) + "\n";
}

std::string EvalReport::to_csv_text() const {
  std::ostringstream os;
  os << "sampler,metric,horizon,top1,top3,top5,n_clips\n";
  for (const EvalRow& row : rows) {
    os << row.sampler << "," << row.metric << ",";
    if (std::isnan(row.horizon)) {
      os << "ate";
    } else {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.3f", static_cast<double>(row.horizon));
      os << buf;
    }
    for (int k : {1, 3, 5}) {
      os << ",";
      auto it = row.top.find(k);
      if (it != row.top.end()) os << fmt6(it->second);
    }
    os << "," << row.n_clips << "\n";
  }
  return os.str();
}

void EvalReport::write(const std::filesystem::path& prefix) const {
  {
    std::ofstream os(prefix.string() + ".json");
    os << to_json_text();
    if (!os.good()) throw Error(errtag::kIo, "failed writing report json");
  }
  {
    std::ofstream os(prefix.string() + ".csv");
    os << to_csv_text();
    if (!os.good()) throw Error(errtag::kIo, "failed writing report csv");
  }
}

EvalReport evaluate_run(const std::filesystem::path& archive_dir,
                        const std::filesystem::path& dataset_dir,
                        const std::string& expected_hash_core,
                        bool allow_hash_mismatch) {
  const forecast::LoadedArchive archive = forecast::load_archive_header(archive_dir);
  if (!expected_hash_core.empty() &&
      archive.header.config_hash_core != expected_hash_core &&
      !allow_hash_mismatch) {
    throw Error(errtag::kHashMismatch,
                "archive hash " + archive.header.config_hash_core +
                    " != config hash " + expected_hash_core +
                    " (pass --allow-hash-mismatch to override)");
  }
  if (archive.samplers.empty()) {
    throw Error(errtag::kArchiveGaps, "archive has no sampler runs");
  }
  const scene::DatasetManifest manifest = scene::load_dataset_manifest(dataset_dir);
  const bool depth = manifest.modality == scene::Modality::kDepth;
  const std::string metric_name = depth ? "ssi_l1" : "psnr";
  const bool minimize = depth;

  // completeness first
  {
    std::vector<std::string> gaps;
    for (const forecast::SamplerRunInfo& run : archive.samplers) {
      for (const std::string& clip : run.clip_ids) {
        for (int j = 0; j < run.k; ++j) {
          for (float h : archive.header.horizons) {
            const std::filesystem::path p =
                archive_dir / clip / run.sampler /
                ("sample_" + std::to_string(j)) /
                forecast::horizon_file_name(h);
            if (!std::filesystem::exists(p)) gaps.push_back(p.string());
          }
        }
      }
    }
    if (!gaps.empty()) {
      std::string msg = std::to_string(gaps.size()) + " missing predictions:";
      for (std::size_t i = 0; i < gaps.size() && i < 20; ++i) msg += "\n  " + gaps[i];
      if (gaps.size() > 20) msg += "\n  ...";
      throw Error(errtag::kArchiveGaps, msg);
    }
  }

  EvalReport report;
  report.config_hash_core = archive.header.config_hash_core;
  report.config_hash_full = archive.header.config_hash_full;
  report.modality = scene::modality_name(manifest.modality);

  std::vector<forecast::SamplerRunInfo> runs = archive.samplers;
  std::sort(runs.begin(), runs.end(),
            [](const auto& a, const auto& b) { return a.sampler < b.sampler; });

  int max_k = 0;
  for (const auto& run : runs) max_k = std::max(max_k, run.k);
  for (int k : {1, 3, 5}) {
    if (k <= max_k) report.k_values.push_back(k);
  }

  const bool with_ate = archive.header.horizons.size() > 1;

  for (const forecast::SamplerRunInfo& run : runs) {
    std::vector<int> ks;
    for (int k : {1, 3, 5}) {
      if (k <= run.k) ks.push_back(k);
    }
    std::vector<std::string> clips = run.clip_ids;
    std::sort(clips.begin(), clips.end());

    // accumulators: horizon index (or ATE) -> k -> sum over clips
    std::map<int, std::map<int, double>> sums;
    std::map<int, double> ate_sums;

    for (const std::string& clip_id : clips) {
      const scene::ClipRecord& rec = scene::find_clip(manifest, clip_id);
      const scene::VideoClip clip = scene::load_clip(dataset_dir, rec);
      // per sample: per horizon score
      std::vector<std::vector<double>> frame_scores(
          archive.header.horizons.size());
      std::vector<double> traj_scores;
      std::vector<std::vector<scene::Frame>> trajectories(
          static_cast<std::size_t>(run.k));
      std::vector<scene::Frame> gt_frames;
      for (std::size_t hi = 0; hi < archive.header.horizons.size(); ++hi) {
        const float h = archive.header.horizons[hi];
        const int fi = scene::frame_index_at(clip, archive.header.anchor_time + h);
        gt_frames.push_back(clip.frames[static_cast<std::size_t>(fi)]);
      }
      for (int j = 0; j < run.k; ++j) {
        for (std::size_t hi = 0; hi < archive.header.horizons.size(); ++hi) {
          scene::Frame pred = forecast::load_archive_frame(
              archive_dir, clip_id, run.sampler, j, archive.header.horizons[hi]);
          const double score =
              depth ? scale_shift_align(pred, gt_frames[hi]).error
                    : psnr(pred, gt_frames[hi]);
          frame_scores[hi].push_back(score);
          trajectories[static_cast<std::size_t>(j)].push_back(std::move(pred));
        }
        if (with_ate) {
          traj_scores.push_back(
              depth ? ate_scale_shift_l1(trajectories[static_cast<std::size_t>(j)],
                                         gt_frames)
                    : ate(trajectories[static_cast<std::size_t>(j)], gt_frames,
                          [](const scene::Frame& p, const scene::Frame& g) {
                            return psnr(p, g);
                          }));
        }
      }

      for (std::size_t hi = 0; hi < archive.header.horizons.size(); ++hi) {
        for (int k : ks) {
          const double v = topk(frame_scores[hi], k, minimize);
          sums[static_cast<int>(hi)][k] += v;
          report.per_clip[run.sampler][clip_id]
                         [horizon_label(archive.header.horizons[hi])][k] = v;
        }
      }
      if (with_ate) {
        for (int k : ks) {
          const double v = topk(traj_scores, k, minimize);
          ate_sums[k] += v;
          report.per_clip[run.sampler][clip_id]["ate"][k] = v;
        }
      }
    }

    const int n = static_cast<int>(clips.size());
    for (std::size_t hi = 0; hi < archive.header.horizons.size(); ++hi) {
      EvalRow row;
      row.sampler = run.sampler;
      row.metric = metric_name;
      row.horizon = archive.header.horizons[hi];
      row.n_clips = n;
      for (int k : ks) row.top[k] = sums[static_cast<int>(hi)][k] / n;
      report.rows.push_back(std::move(row));
    }
    if (with_ate) {
      EvalRow row;
      row.sampler = run.sampler;
      row.metric = metric_name + "_ate";
      row.horizon = std::nanf("");
      row.n_clips = n;
      for (int k : ks) row.top[k] = ate_sums[k] / n;
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

EvalReport report_from_json_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(errtag::kIo, "cannot open report " + path.string());
  json j = json::parse(is, nullptr, true);
  if (!j.contains("schema") ||
      j.at("schema").get<std::string>() != "timecast-evalreport-v1") {
    throw Error(errtag::kArgs, "not an eval report: " + path.string());
  }
  EvalReport r;
  r.config_hash_core = j.at("config_hash_core").get<std::string>();
  r.config_hash_full = j.at("config_hash_full").get<std::string>();
  r.modality = j.at("modality").get<std::string>();
  r.k_values = j.at("k_values").get<std::vector<int>>();
  for (const json& rowj : j.at("rows")) {
    EvalRow row;
    row.sampler = rowj.at("sampler").get<std::string>();
    row.metric = rowj.at("metric").get<std::string>();
    row.horizon = rowj.at("horizon").is_null() ? std::nanf("")
                                               : rowj.at("horizon").get<float>();
    for (const auto& [k, v] : rowj.at("top").items()) {
      row.top[std::stoi(k)] = v.get<double>();
    }
    row.n_clips = rowj.at("n_clips").get<int>();
    r.rows.push_back(std::move(row));
  }
  for (const auto& [sampler, clips] : j.at("per_clip").items()) {
    for (const auto& [clip, labels] : clips.items()) {
      for (const auto& [label, tops] : labels.items()) {
        for (const auto& [k, v] : tops.items()) {
          r.per_clip[sampler][clip][label][std::stoi(k)] = v.get<double>();
        }
      }
    }
  }
  return r;
}

}  // namespace timecast::metrics
