#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "timecast/forecast.hpp"

namespace timecast::forecast {

// Archive layout:
//   <dir>/<clip>/<sampler>/sample_<j>/t_<timestamp>.pgm  plus  <dir>/run.json
// run.json accumulates one entry per sampler; a second invocation with a
// different core config hash is refused.
struct SamplerRunInfo {
  std::string sampler;
  int k = 1;
  float w_m = 2.f;
  float guidance = 2.f;
  int steps = 40;
  std::uint64_t seed = 0;
  std::vector<std::string> clip_ids;
};

struct ArchiveHeader {
  std::string config_hash_core;
  std::string config_hash_full;
  float anchor_time = 0.f;
  std::vector<float> context_offsets;
  std::vector<float> horizons;  // query offsets from the anchor
  int width = 0;
  int height = 0;
};

std::string horizon_file_name(float horizon);

struct ClipForecast {
  std::string clip_id;
  std::vector<TrajectorySample> samples;
};

void write_archive_run(const std::filesystem::path& dir,
                       const ArchiveHeader& header, const SamplerRunInfo& run,
                       const std::vector<ClipForecast>& forecasts);

struct LoadedArchive {
  ArchiveHeader header;
  std::vector<SamplerRunInfo> samplers;
};

LoadedArchive load_archive_header(const std::filesystem::path& dir);

// Frame of sample j of a clip at a horizon; throws E_ARCHIVE_GAPS when the
// file is missing.
scene::Frame load_archive_frame(const std::filesystem::path& dir,
                                const std::string& clip_id,
                                const std::string& sampler, int sample_index,
                                float horizon);

}  // namespace timecast::forecast
