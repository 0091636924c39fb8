#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "anomap/anomaly.hpp"
#include "anomap/models/training.hpp"
#include "anomap/phantom.hpp"
#include "anomap/sampling.hpp"

namespace anomap::pipeline {

struct ModelSelection {
  bool ae = true;
  bool sae = true;
};

struct AeStageConfig {
  models::TrainConfig train = models::ae_defaults();
  int slices = 40;  // centred axial band used for training and error maps
};

struct SaeStageConfig {
  models::TrainConfig train = models::sae_defaults();
  int patch = 15;
  int patches_per_subject = 15000;
  PatchMapOptions map;  // aggregation of patch errors into voxel maps
};

/// Everything a run depends on. Defaults are the published hyperparameters
/// (profile "full"); profile "quick" shrinks the phantom and the schedules.
struct PipelineConfig {
  std::string profile = "full";
  std::filesystem::path output_dir;
  std::filesystem::path cohort_dir;  // empty: synthesize a phantom into <output>/cohort
  std::filesystem::path atlas_dir;   // empty: phantom atlases into <output>/atlases
  std::vector<std::string> atlas_ids{"macro", "subcortical"};
  ModelSelection models;
  std::uint64_t seed = 2024;
  PhantomSpec phantom;
  int n_splits = 10;
  int n_train = 41;
  int n_test = 15;
  BalanceConstraints balance;
  AeStageConfig ae;
  SaeStageConfig sae;
  double quantile = 0.98;
  bool keep_error_maps = true;
  int jobs = 1;
};

/// Defaults of a named profile ("full" or "quick") as JSON.
nlohmann::json profile_defaults(const std::string& profile);

nlohmann::json to_json(const PipelineConfig& config);
/// Strict: unknown keys and wrong types are kInvalidArgument.
PipelineConfig config_from_json(const nlohmann::json& j);

/// profile defaults <- file (if any) <- overrides, each a JSON merge patch.
/// The profile is taken from the overrides, else the file, else "full".
/// Does not call validate(), so callers can fill defaults first.
PipelineConfig resolve_config(const std::filesystem::path& file, const nlohmann::json& overrides);

/// Range checks that do not touch the filesystem.
void validate(const PipelineConfig& config);

std::string models_string(const ModelSelection& m);
ModelSelection parse_models(const std::string& s);

}  // namespace anomap::pipeline
