#include "anomap/pipeline/config.hpp"

#include <set>

#include "anomap/io.hpp"

namespace anomap::pipeline {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
  require(j.is_object(), ErrorKind::kInvalidArgument, "config: '" + where + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    require(allowed.count(key) != 0, ErrorKind::kInvalidArgument,
            "config: unknown key '" + (where.empty() ? key : where + "." + key) + "'");
  }
}

template <typename T>
T get(const json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorKind::kInvalidArgument, "config: missing or mistyped '" + where + "." + key + "'");
  }
}

}  // namespace

std::string models_string(const ModelSelection& m) {
  if (m.ae && m.sae) return "both";
  return m.ae ? "ae" : "sae";
}

ModelSelection parse_models(const std::string& s) {
  if (s == "both") return {true, true};
  if (s == "ae") return {true, false};
  if (s == "sae") return {false, true};
  fail(ErrorKind::kInvalidArgument, "models must be ae, sae or both (got '" + s + "')");
}

nlohmann::json to_json(const PipelineConfig& c) {
  const PhantomSpec& p = c.phantom;
  return {
      {"profile", c.profile},
      {"paths",
       {{"output", c.output_dir.string()},
        {"cohort", c.cohort_dir.string()},
        {"atlases", c.atlas_dir.string()}}},
      {"atlas_ids", c.atlas_ids},
      {"models", models_string(c.models)},
      {"seed", c.seed},
      {"phantom",
       {{"n_controls", p.n_controls},
        {"n_patients", p.n_patients},
        {"dims", {p.dims.depth, p.dims.height, p.dims.width}},
        {"voxel_size_mm", p.voxel_size_mm},
        {"anomaly_magnitude", p.anomaly_magnitude},
        {"lesion_radius", p.lesion_radius},
        {"lesions_per_patient", p.lesions_per_patient},
        {"noise_sigma", p.noise_sigma},
        {"perturbation_amplitude", p.perturbation_amplitude}}},
      {"split",
       {{"n_samples", c.n_splits},
        {"n_train", c.n_train},
        {"n_test", c.n_test},
        {"max_age_gap", c.balance.max_age_gap},
        {"min_female_fraction", c.balance.min_female_fraction},
        {"max_female_fraction", c.balance.max_female_fraction},
        {"max_attempts", c.balance.max_attempts}}},
      {"ae",
       {{"epochs", c.ae.train.epochs},
        {"learning_rate", c.ae.train.learning_rate},
        {"batch_size", c.ae.train.batch_size},
        {"slices", c.ae.slices}}},
      {"sae",
       {{"epochs", c.sae.train.epochs},
        {"learning_rate", c.sae.train.learning_rate},
        {"batch_size", c.sae.train.batch_size},
        {"alpha", c.sae.train.alpha},
        {"patch", c.sae.patch},
        {"patches_per_subject", c.sae.patches_per_subject},
        {"aggregate", to_string(c.sae.map.mode)},
        {"stride", c.sae.map.stride},
        {"inference_batch", c.sae.map.batch}}},
      {"anomaly", {{"quantile", c.quantile}}},
      {"output", {{"keep_error_maps", c.keep_error_maps}}},
      {"jobs", c.jobs},
  };
}

PipelineConfig config_from_json(const json& j) {
  check_keys(j, "", {"profile", "paths", "atlas_ids", "models", "seed", "phantom", "split", "ae",
                     "sae", "anomaly", "output", "jobs", "resolved_seeds"});
  // resolved_seeds is provenance written next to outputs; it is recomputed.
  PipelineConfig c;
  c.profile = get<std::string>(j, "profile", "");
  const json& paths = j.at("paths");
  check_keys(paths, "paths", {"output", "cohort", "atlases"});
  c.output_dir = get<std::string>(paths, "output", "paths");
  c.cohort_dir = get<std::string>(paths, "cohort", "paths");
  c.atlas_dir = get<std::string>(paths, "atlases", "paths");
  c.atlas_ids = get<std::vector<std::string>>(j, "atlas_ids", "");
  c.models = parse_models(get<std::string>(j, "models", ""));
  c.seed = get<std::uint64_t>(j, "seed", "");

  const json& p = j.at("phantom");
  check_keys(p, "phantom",
             {"n_controls", "n_patients", "dims", "voxel_size_mm", "anomaly_magnitude",
              "lesion_radius", "lesions_per_patient", "noise_sigma", "perturbation_amplitude"});
  c.phantom.n_controls = get<int>(p, "n_controls", "phantom");
  c.phantom.n_patients = get<int>(p, "n_patients", "phantom");
  const auto dims = get<std::vector<int>>(p, "dims", "phantom");
  require(dims.size() == 3, ErrorKind::kInvalidArgument, "config: phantom.dims needs 3 values");
  c.phantom.dims = {dims[0], dims[1], dims[2]};
  c.phantom.voxel_size_mm = get<std::array<double, 3>>(p, "voxel_size_mm", "phantom");
  c.phantom.anomaly_magnitude = get<double>(p, "anomaly_magnitude", "phantom");
  c.phantom.lesion_radius = get<double>(p, "lesion_radius", "phantom");
  c.phantom.lesions_per_patient = get<int>(p, "lesions_per_patient", "phantom");
  c.phantom.noise_sigma = get<double>(p, "noise_sigma", "phantom");
  c.phantom.perturbation_amplitude = get<double>(p, "perturbation_amplitude", "phantom");

  const json& s = j.at("split");
  check_keys(s, "split",
             {"n_samples", "n_train", "n_test", "max_age_gap", "min_female_fraction",
              "max_female_fraction", "max_attempts"});
  c.n_splits = get<int>(s, "n_samples", "split");
  c.n_train = get<int>(s, "n_train", "split");
  c.n_test = get<int>(s, "n_test", "split");
  c.balance.max_age_gap = get<double>(s, "max_age_gap", "split");
  c.balance.min_female_fraction = get<double>(s, "min_female_fraction", "split");
  c.balance.max_female_fraction = get<double>(s, "max_female_fraction", "split");
  c.balance.max_attempts = get<int>(s, "max_attempts", "split");

  const json& ae = j.at("ae");
  check_keys(ae, "ae", {"epochs", "learning_rate", "batch_size", "slices"});
  c.ae.train.epochs = get<int>(ae, "epochs", "ae");
  c.ae.train.learning_rate = get<double>(ae, "learning_rate", "ae");
  c.ae.train.batch_size = get<int>(ae, "batch_size", "ae");
  c.ae.train.alpha = 0.0;
  c.ae.slices = get<int>(ae, "slices", "ae");

  const json& sae = j.at("sae");
  check_keys(sae, "sae",
             {"epochs", "learning_rate", "batch_size", "alpha", "patch", "patches_per_subject",
              "aggregate", "stride", "inference_batch"});
  c.sae.train.epochs = get<int>(sae, "epochs", "sae");
  c.sae.train.learning_rate = get<double>(sae, "learning_rate", "sae");
  c.sae.train.batch_size = get<int>(sae, "batch_size", "sae");
  c.sae.train.alpha = get<double>(sae, "alpha", "sae");
  c.sae.patch = get<int>(sae, "patch", "sae");
  c.sae.patches_per_subject = get<int>(sae, "patches_per_subject", "sae");
  c.sae.map.mode = parse_patch_aggregate(get<std::string>(sae, "aggregate", "sae"));
  c.sae.map.stride = get<int>(sae, "stride", "sae");
  c.sae.map.batch = get<int>(sae, "inference_batch", "sae");
  c.sae.map.patch = c.sae.patch;

  const json& an = j.at("anomaly");
  check_keys(an, "anomaly", {"quantile"});
  c.quantile = get<double>(an, "quantile", "anomaly");
  const json& out = j.at("output");
  check_keys(out, "output", {"keep_error_maps"});
  c.keep_error_maps = get<bool>(out, "keep_error_maps", "output");
  c.jobs = get<int>(j, "jobs", "");
  return c;
}

nlohmann::json profile_defaults(const std::string& profile) {
  PipelineConfig c;
  c.profile = profile;
  if (profile == "full") {
    // Phantom stand-in at canonical size with the published cohort sizes.
    c.phantom.n_controls = 56;
    c.phantom.n_patients = 129;
    c.phantom.dims = {121, 145, 121};
    c.phantom.lesion_radius = 10.0;
  } else if (profile == "quick") {
    c.phantom.n_controls = 30;
    c.phantom.n_patients = 15;
    c.phantom.dims = {48, 56, 48};
    c.phantom.lesion_radius = 4.0;
    c.n_splits = 2;
    c.n_train = 22;
    c.n_test = 8;
    c.ae.train.epochs = 20;
    c.ae.train.batch_size = 16;
    c.sae.train.epochs = 6;
    c.sae.patches_per_subject = 300;
    c.sae.map.mode = PatchAggregate::kOverlapMean;
    c.sae.map.stride = 4;
  } else {
    fail(ErrorKind::kInvalidArgument, "unknown profile '" + profile + "' (expected full or quick)");
  }
  return to_json(c);
}

PipelineConfig resolve_config(const std::filesystem::path& file, const json& overrides) {
  json from_file = json::object();
  if (!file.empty()) {
    require(std::filesystem::exists(file), ErrorKind::kInvalidArgument,
            "config file '" + file.string() + "' does not exist");
    try {
      from_file = read_json_file(file);
    } catch (const Error& e) {
      fail(ErrorKind::kInvalidArgument, e.what());
    }
    require(from_file.is_object(), ErrorKind::kInvalidArgument, "config file must hold an object");
  }
  std::string profile = "full";
  if (from_file.contains("profile")) profile = from_file["profile"].get<std::string>();
  if (overrides.contains("profile")) profile = overrides["profile"].get<std::string>();
  json merged = profile_defaults(profile);
  // Unknown keys must survive the merge so config_from_json can name them.
  merged.merge_patch(from_file);
  merged.merge_patch(overrides);
  merged["profile"] = profile;
  return config_from_json(merged);
}

void validate(const PipelineConfig& c) {
  auto check = [](bool ok, const std::string& what) {
    require(ok, ErrorKind::kInvalidArgument, "config: " + what);
  };
  check(!c.output_dir.empty(), "an output directory is required");
  check(c.n_splits >= 1, "split.n_samples must be >= 1");
  check(c.n_train >= 1 && c.n_test >= 1, "split.n_train and split.n_test must be >= 1");
  check(c.ae.train.epochs >= 1 && c.sae.train.epochs >= 1, "epochs must be >= 1");
  check(c.ae.train.batch_size >= 1 && c.sae.train.batch_size >= 1, "batch sizes must be >= 1");
  check(c.ae.train.learning_rate > 0 && c.sae.train.learning_rate > 0,
        "learning rates must be > 0");
  check(c.ae.slices >= 1, "ae.slices must be >= 1");
  check(c.sae.patch >= 3 && c.sae.patch % 2 == 1, "sae.patch must be odd and >= 3");
  check(c.sae.patches_per_subject >= 1, "sae.patches_per_subject must be >= 1");
  check(c.sae.map.stride >= 1 && c.sae.map.batch >= 1,
        "sae.stride and sae.inference_batch must be >= 1");
  check(c.quantile > 0.0 && c.quantile < 1.0, "anomaly.quantile must lie in (0, 1)");
  check(c.jobs >= 1, "jobs must be >= 1");
  check(!c.atlas_ids.empty(), "atlas_ids must not be empty");
  if (c.cohort_dir.empty()) {
    check(c.n_train + c.n_test == c.phantom.n_controls,
          "n_train + n_test must equal the phantom control count");
    anomap::validate(c.phantom);
  }
}

}  // namespace anomap::pipeline
