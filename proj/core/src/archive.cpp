#include "timecast/archive.hpp"

#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "timecast/errors.hpp"
#include "timecast/pgm.hpp"

namespace timecast::forecast {

using json = nlohmann::ordered_json;

std::string horizon_file_name(float horizon) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "t_%+08.3f.pgm", static_cast<double>(horizon));
  return buf;
}

namespace {

json header_to_json(const ArchiveHeader& h) {
  json j;
  j["schema"] = "timecast-run-v1";
  j["config_hash_core"] = h.config_hash_core;
  j["config_hash_full"] = h.config_hash_full;
  j["anchor_time"] = h.anchor_time;
  j["context_offsets"] = h.context_offsets;
  j["horizons"] = h.horizons;
  j["width"] = h.width;
  j["height"] = h.height;
  j["samplers"] = json::object();
  return j;
}

ArchiveHeader header_from_json(const json& j) {
  ArchiveHeader h;
  h.config_hash_core = j.at("config_hash_core").get<std::string>();
  h.config_hash_full = j.at("config_hash_full").get<std::string>();
  h.anchor_time = j.at("anchor_time").get<float>();
  h.context_offsets = j.at("context_offsets").get<std::vector<float>>();
  h.horizons = j.at("horizons").get<std::vector<float>>();
  h.width = j.at("width").get<int>();
  h.height = j.at("height").get<int>();
  return h;
}

}  // namespace

void write_archive_run(const std::filesystem::path& dir,
                       const ArchiveHeader& header, const SamplerRunInfo& run,
                       const std::vector<ClipForecast>& forecasts) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const fs::path run_path = dir / "run.json";

  json root;
  if (fs::exists(run_path)) {
    std::ifstream is(run_path);
    root = json::parse(is, nullptr, true);
    if (root.at("config_hash_core").get<std::string>() != header.config_hash_core) {
      throw Error(errtag::kHashMismatch,
                  "archive at " + dir.string() +
                      " was produced under a different core config hash");
    }
  } else {
    root = header_to_json(header);
  }

  json entry;
  entry["k"] = run.k;
  entry["w_m"] = run.w_m;
  entry["guidance"] = run.guidance;
  entry["steps"] = run.steps;
  entry["seed"] = run.seed;
  entry["clips"] = run.clip_ids;
  json prov = json::object();

  for (const ClipForecast& cf : forecasts) {
    json clip_prov = json::array();
    for (std::size_t j = 0; j < cf.samples.size(); ++j) {
      const TrajectorySample& traj = cf.samples[j];
      json sample_prov = json::array();
      for (std::size_t qi = 0; qi < traj.frames.size(); ++qi) {
        const fs::path sample_dir =
            dir / cf.clip_id / run.sampler / ("sample_" + std::to_string(j));
        fs::create_directories(sample_dir);
        pgm::write_pgm16(sample_dir / horizon_file_name(header.horizons[qi]),
                         header.width, header.height, traj.frames[qi]);
        json p;
        p["window_times"] = traj.provenance[qi].window_times;
        json pred = json::array();
        for (bool b : traj.provenance[qi].window_predicted) pred.push_back(b);
        p["window_predicted"] = pred;
        sample_prov.push_back(std::move(p));
      }
      clip_prov.push_back(std::move(sample_prov));
    }
    prov[cf.clip_id] = std::move(clip_prov);
  }
  entry["provenance"] = std::move(prov);
  root["samplers"][run.sampler] = std::move(entry);

  std::ofstream os(run_path);
  os << root.dump(2) << "\n";
  if (!os.good()) throw Error(errtag::kIo, "failed writing " + run_path.string());
}

LoadedArchive load_archive_header(const std::filesystem::path& dir) {
  std::ifstream is(dir / "run.json");
  if (!is) {
    throw Error(errtag::kArchiveGaps, "no run.json under " + dir.string());
  }
  json root = json::parse(is, nullptr, true);
  LoadedArchive out;
  out.header = header_from_json(root);
  for (const auto& [name, entry] : root.at("samplers").items()) {
    SamplerRunInfo info;
    info.sampler = name;
    info.k = entry.at("k").get<int>();
    info.w_m = entry.at("w_m").get<float>();
    info.guidance = entry.at("guidance").get<float>();
    info.steps = entry.at("steps").get<int>();
    info.seed = entry.at("seed").get<std::uint64_t>();
    info.clip_ids = entry.at("clips").get<std::vector<std::string>>();
    out.samplers.push_back(std::move(info));
  }
  return out;
}

scene::Frame load_archive_frame(const std::filesystem::path& dir,
                                const std::string& clip_id,
                                const std::string& sampler, int sample_index,
                                float horizon) {
  const std::filesystem::path path = dir / clip_id / sampler /
                                     ("sample_" + std::to_string(sample_index)) /
                                     horizon_file_name(horizon);
  if (!std::filesystem::exists(path)) {
    throw Error(errtag::kArchiveGaps, "missing prediction " + path.string());
  }
  return pgm::read_pgm16(path).values;
}

}  // namespace timecast::forecast
