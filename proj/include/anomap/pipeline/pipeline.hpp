#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "anomap/atlas.hpp"
#include "anomap/pipeline/config.hpp"

namespace anomap::pipeline {

/// One subject of a cohort manifest. Paths are relative to the cohort dir.
struct SubjectRecord {
  SubjectMeta meta;
  std::string volume;
  std::string truth;  // optional anomaly mask (phantoms only)
};

struct CohortManifest {
  std::string cohort_id;
  Dims dims;
  std::vector<SubjectRecord> subjects;

  nlohmann::json to_json() const;
  static CohortManifest from_json(const nlohmann::json& j);
  std::vector<SubjectMeta> controls() const;
  std::vector<SubjectMeta> patients() const;
};

/// Human-readable lines on stderr, or one JSON object per line with --json.
class Logger {
 public:
  explicit Logger(bool json = false, bool quiet = false) : json_(json), quiet_(quiet) {}
  void info(const std::string& stage, const std::string& message,
            const nlohmann::json& fields = nlohmann::json::object());
  void error(const std::string& stage, const std::string& message);

 private:
  void emit(const char* level, const std::string& stage, const std::string& message,
            const nlohmann::json& fields);
  bool json_;
  bool quiet_;
  std::mutex mutex_;
};

/// A stage that failed after validation. Carries the directory holding its
/// partial state.
class StageFailure : public std::runtime_error {
 public:
  StageFailure(std::string stage, std::filesystem::path artifact, const std::string& what)
      : std::runtime_error("stage '" + stage + "' failed (partial state in " + artifact.string() +
                           "): " + what),
        stage_(std::move(stage)),
        artifact_(std::move(artifact)) {}
  const std::string& stage() const { return stage_; }
  const std::filesystem::path& artifact() const { return artifact_; }

 private:
  std::string stage_;
  std::filesystem::path artifact_;
};

enum class RunMode {
  kFresh,   // refuse an output dir that already holds a run
  kResume,  // skip stages whose manifest entry matches
  kForce,   // recompute every stage
};

/// Orchestrates split -> train -> threshold -> infer -> score -> evaluate ->
/// report over an output directory. Each stage records a key (digest of its
/// inputs) in stages.json; with kResume a stage whose key and outputs are
/// present is skipped.
class Pipeline {
 public:
  Pipeline(PipelineConfig config, Logger& log, RunMode mode);
  ~Pipeline();

  /// Filesystem checks done before any work; throws kInvalidArgument.
  /// `need_cohort` is false only for commands that create the cohort.
  void validate_inputs(bool need_cohort);

  void synth();
  void split();
  void train();
  void threshold();
  void infer();
  void score();
  void evaluate();
  void report();
  void run();

  const PipelineConfig& config() const { return config_; }
  std::filesystem::path out() const { return config_.output_dir; }
  std::filesystem::path cohort_dir() const;
  std::filesystem::path atlas_dir() const;
  std::filesystem::path split_dir(int sample) const;
  std::filesystem::path model_dir(int sample, ModelKind model) const;

  struct Cache;

 private:
  struct StageRecord {
    std::string key;
    std::vector<std::string> outputs;
  };

  void prepare_output();
  void write_frozen_config();
  bool stage_done(const std::string& name, const std::string& key);
  void mark_done(const std::string& name, const std::string& key,
                 const std::vector<std::filesystem::path>& outputs);
  /// Runs `body` unless the stage is complete; wraps failures.
  void stage(const std::string& name, const std::string& key, const std::filesystem::path& artifact,
             const std::vector<std::filesystem::path>& outputs, const std::function<void()>& body);
  void for_each_split(const std::function<void(int)>& fn);
  std::vector<ModelKind> selected_models() const;

  std::string synth_key();
  std::string atlas_key();
  std::string split_key();
  std::string train_key(int sample, ModelKind m);
  std::string threshold_key(int sample, ModelKind m);
  std::string infer_key(int sample, ModelKind m);
  std::string score_key(int sample, ModelKind m);
  std::string evaluate_key();

  void train_one(int sample, ModelKind m);
  void threshold_one(int sample, ModelKind m);
  void infer_one(int sample, ModelKind m);
  void score_one(int sample, ModelKind m);

  PipelineConfig config_;
  Logger& log_;
  RunMode mode_;
  std::mutex manifest_mutex_;
  std::map<std::string, StageRecord> stages_;
  bool prepared_ = false;
  std::unique_ptr<Cache> cache_;
};

/// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitStage = 2;

}  // namespace anomap::pipeline
