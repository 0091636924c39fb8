// anomap command-line tool: phantom synthesis, training, anomaly maps,
// ROI scoring, evaluation and report emission.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>

#include "anomap/pipeline/pipeline.hpp"

namespace fs = std::filesystem;
using anomap::Error;
using anomap::ErrorKind;
using namespace anomap::pipeline;
using nlohmann::json;

namespace {

struct Flags {
  std::string config_file;
  std::string profile;
  std::string output;
  std::string cohort;
  std::string atlases;
  std::string models;
  std::optional<std::uint64_t> seed;
  std::optional<int> splits;
  std::optional<int> ae_epochs;
  std::optional<int> sae_epochs;
  std::optional<int> patches;
  std::string aggregate;
  std::optional<int> stride;
  std::optional<double> quantile;
  std::optional<int> jobs;
  bool json_logs = false;
  bool quiet = false;
  bool force = false;
  bool resume = false;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("-c,--config", f.config_file, "JSON config file");
  cmd->add_option("--profile", f.profile, "preset: full (default) or quick");
  cmd->add_option("-o,--output", f.output,
                  "output directory (default $ANOMAP_OUTPUT_ROOT/<profile>)");
  cmd->add_option("--cohort", f.cohort, "cohort directory holding manifest.json");
  cmd->add_option("--atlases", f.atlases, "atlas directory");
  cmd->add_option("--models", f.models, "ae, sae or both");
  cmd->add_option("--seed", f.seed, "master seed");
  cmd->add_option("--splits", f.splits, "number of bootstrap splits");
  cmd->add_option("--ae-epochs", f.ae_epochs, "AE epochs");
  cmd->add_option("--sae-epochs", f.sae_epochs, "SAE epochs");
  cmd->add_option("--patches", f.patches, "SAE patches per training subject");
  cmd->add_option("--aggregate", f.aggregate, "SAE map assembly: center or overlap-mean");
  cmd->add_option("--stride", f.stride, "overlap-mean grid stride");
  cmd->add_option("--quantile", f.quantile, "abnormality quantile level");
  cmd->add_option("-j,--jobs", f.jobs, "splits processed in parallel");
  cmd->add_flag("--json", f.json_logs, "machine-readable log lines");
  cmd->add_flag("-q,--quiet", f.quiet, "errors only");
  cmd->add_flag("--force", f.force, "recompute and overwrite existing outputs");
  cmd->add_flag("--resume", f.resume, "skip stages already completed with identical inputs");
}

json overrides_from(const Flags& f) {
  json o = json::object();
  if (!f.profile.empty()) o["profile"] = f.profile;
  if (!f.output.empty()) o["paths"]["output"] = f.output;
  if (!f.cohort.empty()) o["paths"]["cohort"] = f.cohort;
  if (!f.atlases.empty()) o["paths"]["atlases"] = f.atlases;
  if (!f.models.empty()) o["models"] = f.models;
  if (f.seed) o["seed"] = *f.seed;
  if (f.splits) o["split"]["n_samples"] = *f.splits;
  if (f.ae_epochs) o["ae"]["epochs"] = *f.ae_epochs;
  if (f.sae_epochs) o["sae"]["epochs"] = *f.sae_epochs;
  if (f.patches) o["sae"]["patches_per_subject"] = *f.patches;
  if (!f.aggregate.empty()) o["sae"]["aggregate"] = f.aggregate;
  if (f.stride) o["sae"]["stride"] = *f.stride;
  if (f.quantile) o["anomaly"]["quantile"] = *f.quantile;
  if (f.jobs) o["jobs"] = *f.jobs;
  return o;
}

PipelineConfig load_config(const Flags& f, const std::string& results_dir = {}) {
  fs::path file = f.config_file;
  json o = overrides_from(f);
  if (!results_dir.empty()) {
    // `report DIR` reuses the frozen config of that run.
    if (file.empty()) file = fs::path(results_dir) / "config.json";
    o["paths"]["output"] = results_dir;
  }
  PipelineConfig c = resolve_config(file, o);
  if (c.output_dir.empty()) {
    const char* root = std::getenv("ANOMAP_OUTPUT_ROOT");
    c.output_dir = fs::path(root && *root ? root : "anomap_output") / c.profile;
  }
  validate(c);
  return c;
}

RunMode mode_of(const Flags& f, RunMode fallback) {
  if (f.force) return RunMode::kForce;
  if (f.resume) return RunMode::kResume;
  return fallback;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"anomap: reconstruction-error anomaly maps from diffusion MRI volumes"};
  app.require_subcommand(1);
  Flags f;
  std::string results_dir;

  struct Command {
    const char* name;
    const char* help;
  };
  const Command commands[] = {
      {"synth", "write a synthetic phantom cohort and matching atlases"},
      {"split", "draw the balanced bootstrap splits of the control cohort"},
      {"train", "train the selected models on every split"},
      {"threshold", "fix the abnormality threshold from each split's training controls"},
      {"infer", "write error maps and binary anomaly maps of the test subjects"},
      {"score", "compute per-ROI abnormal-voxel percentages"},
      {"evaluate", "ROC per ROI and bootstrap aggregation"},
      {"report", "render figures and report.md from a results directory"},
      {"run", "every stage, from synthesis to report"},
  };
  std::map<std::string, CLI::App*> subs;
  for (const auto& c : commands) {
    CLI::App* s = app.add_subcommand(c.name, c.help);
    add_common(s, f);
    subs[c.name] = s;
  }
  subs["report"]->add_option("results", results_dir, "results directory (default: --output)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  std::string cmd;
  for (const auto& [name, s] : subs) {
    if (s->parsed()) cmd = name;
  }
  Logger log(f.json_logs, f.quiet);

  std::optional<Pipeline> pipeline;
  try {
    const PipelineConfig config = load_config(f, cmd == "report" ? results_dir : std::string());
    if (cmd == "run") {
      pipeline.emplace(config, log, mode_of(f, RunMode::kFresh));
      pipeline->run();
    } else if (cmd == "synth") {
      pipeline.emplace(config, log, mode_of(f, RunMode::kFresh));
      pipeline->validate_inputs(false);
      pipeline->synth();
    } else {
      pipeline.emplace(config, log, mode_of(f, RunMode::kResume));
      pipeline->validate_inputs(true);
      if (cmd == "split") pipeline->split();
      if (cmd == "train") pipeline->train();
      if (cmd == "threshold") pipeline->threshold();
      if (cmd == "infer") pipeline->infer();
      if (cmd == "score") pipeline->score();
      if (cmd == "evaluate") pipeline->evaluate();
      if (cmd == "report") pipeline->report();
    }
    log.info(cmd, "finished; outputs in " + config.output_dir.string());
    return kExitOk;
  } catch (const StageFailure& e) {
    log.error(e.stage(), e.what());
    return kExitStage;
  } catch (const Error& e) {
    log.error(cmd, e.what());
    return e.kind() == ErrorKind::kInvalidArgument ? kExitValidation : kExitStage;
  } catch (const std::exception& e) {
    log.error(cmd, e.what());
    return kExitStage;
  }
}
