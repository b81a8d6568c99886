#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "timecast/archive.hpp"
#include "timecast/dataset.hpp"

namespace timecast::metrics {

// Top-{1,3,5} values per (sampler, metric, horizon), averaged over clips;
// multi-horizon archives additionally get an ATE row per sampler. Per-clip
// values are kept for breakdowns.
struct EvalRow {
  std::string sampler;
  std::string metric;   // "ssi_l1" | "psnr" | "ssi_l1_ate" | "psnr_ate"
  float horizon = 0.f;  // NaN for the ATE rows
  std::map<int, double> top;  // k -> value
  int n_clips = 0;
};

struct EvalReport {
  std::string config_hash_core;
  std::string config_hash_full;
  std::string modality;
  std::vector<int> k_values;
  std::vector<EvalRow> rows;
  // per_clip[sampler][clip][row-label] -> k -> value; labels are
  // "h_<horizon>" or "ate"
  std::map<std::string,
           std::map<std::string, std::map<std::string, std::map<int, double>>>>
      per_clip;

  std::string to_json_text() const;
  std::string to_csv_text() const;
  void write(const std::filesystem::path& prefix) const;  // .json + .csv
};

// Checks archive completeness (every clip x sample x horizon present,
// listing all gaps), then scores predictions against the dataset's ground
// truth. expected_hash_core empty = skip the hash gate.
EvalReport evaluate_run(const std::filesystem::path& archive_dir,
                        const std::filesystem::path& dataset_dir,
                        const std::string& expected_hash_core,
                        bool allow_hash_mismatch);

EvalReport report_from_json_file(const std::filesystem::path& path);

}  // namespace timecast::metrics
