#pragma once

#include <filesystem>
#include <string>

#include "fairsad/harness.hpp"
#include "fairsad/model.hpp"

namespace fairsad {

// Machine-readable report: config, per-metric rows (per-seed, mean, std),
// selected epochs. No timestamps, so identical runs give identical files.
std::string report_json(const ExperimentResult& result);

// Fixed-width table: one row per seed, then mean and std.
std::string report_table(const ExperimentResult& result);

// epoch,L_c,L_dc,L_d,L_m,total,val_auc
std::string curves_csv(const TrainHistory& history);

// Writes report.json, report.txt and curves_seed<N>.csv into `dir`.
void write_report(const ExperimentResult& result, const std::filesystem::path& dir);

std::string params_json(const ModelParams& params);
ModelParams params_from_json(const std::string& text);
void save_params(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_params(const std::filesystem::path& path);

}  // namespace fairsad
