#include "anomap/pipeline/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include "anomap/evaluation.hpp"
#include "anomap/io.hpp"
#include "anomap/models/serialize.hpp"
#include "anomap/mvol.hpp"
#include "anomap/pipeline/report.hpp"
#include "anomap/rng.hpp"

namespace anomap::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------- manifest

json CohortManifest::to_json() const {
  json subs = json::array();
  for (const auto& s : subjects) {
    json j = {{"id", s.meta.subject_id},
              {"age", s.meta.age},
              {"sex", anomap::to_string(s.meta.sex)},
              {"cohort", anomap::to_string(s.meta.cohort)},
              {"volume", s.volume}};
    if (!s.truth.empty()) j["truth"] = s.truth;
    subs.push_back(j);
  }
  return {{"cohort_id", cohort_id},
          {"dims", {dims.depth, dims.height, dims.width}},
          {"subjects", subs}};
}

CohortManifest CohortManifest::from_json(const json& j) {
  try {
    CohortManifest m;
    m.cohort_id = j.at("cohort_id").get<std::string>();
    const auto d = j.at("dims").get<std::vector<int>>();
    require(d.size() == 3, ErrorKind::kFormat, "manifest dims need 3 values");
    m.dims = {d[0], d[1], d[2]};
    for (const auto& s : j.at("subjects")) {
      SubjectRecord r;
      r.meta.subject_id = s.at("id").get<std::string>();
      r.meta.age = s.at("age").get<double>();
      r.meta.sex = parse_sex(s.at("sex").get<std::string>());
      r.meta.cohort = parse_cohort(s.at("cohort").get<std::string>());
      r.volume = s.at("volume").get<std::string>();
      r.truth = s.value("truth", "");
      m.subjects.push_back(std::move(r));
    }
    return m;
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, std::string("malformed cohort manifest: ") + e.what());
  }
}

std::vector<SubjectMeta> CohortManifest::controls() const {
  std::vector<SubjectMeta> out;
  for (const auto& s : subjects) {
    if (s.meta.cohort == Cohort::kControl) out.push_back(s.meta);
  }
  return out;
}

std::vector<SubjectMeta> CohortManifest::patients() const {
  std::vector<SubjectMeta> out;
  for (const auto& s : subjects) {
    if (s.meta.cohort == Cohort::kPatient) out.push_back(s.meta);
  }
  return out;
}

// ---------------------------------------------------------------- logging

void Logger::emit(const char* level, const std::string& stage, const std::string& message,
                  const json& fields) {
  std::lock_guard lock(mutex_);
  if (json_) {
    json line = fields;
    line["level"] = level;
    line["stage"] = stage;
    line["message"] = message;
    line["time"] = static_cast<long long>(std::time(nullptr));
    std::cerr << line.dump() << "\n";
  } else {
    std::cerr << "[" << stage << "] " << message << "\n";
  }
}

void Logger::info(const std::string& stage, const std::string& message, const json& fields) {
  if (!quiet_) emit("info", stage, message, fields);
}

void Logger::error(const std::string& stage, const std::string& message) {
  emit("error", stage, message, json::object());
}

// ---------------------------------------------------------------- cache

namespace {

struct LoadedSubject {
  SubjectMeta meta;
  Volume volume;
  BrainMask mask;
  std::optional<BrainMask> truth;
};

std::string split_name(int sample) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "split_%02d", sample);
  return buf;
}

std::string fmt10(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string digest(const json& j) { return nn::fingerprint(j.dump()); }

json plan_to_json(const SplitPlan& p) {
  return {{"sample", p.sample_index},
          {"train", p.train_ids},
          {"test", p.test_ids},
          {"train_mean_age", p.train_mean_age},
          {"test_mean_age", p.test_mean_age},
          {"train_female_fraction", p.train_female_fraction},
          {"test_female_fraction", p.test_female_fraction},
          {"attempts", p.attempts}};
}

SplitPlan plan_from_json(const json& j) {
  SplitPlan p;
  p.sample_index = j.at("sample").get<int>();
  p.train_ids = j.at("train").get<std::vector<std::string>>();
  p.test_ids = j.at("test").get<std::vector<std::string>>();
  p.train_mean_age = j.at("train_mean_age").get<double>();
  p.test_mean_age = j.at("test_mean_age").get<double>();
  p.train_female_fraction = j.at("train_female_fraction").get<double>();
  p.test_female_fraction = j.at("test_female_fraction").get<double>();
  p.attempts = j.at("attempts").get<int>();
  return p;
}

BrainMask mask_from_volume(const Volume& v) {
  require(v.channels() == 1, ErrorKind::kFormat, "mask volume '" + v.subject_id() + "' must have one channel");
  BrainMask m(v.dims());
  const auto c = v.channel(0);
  for (std::size_t k = 0; k < c.size(); ++k) m.values()[k] = c[k] > 0.5f ? 1 : 0;
  return m;
}

Volume mask_to_volume(const BrainMask& m, const std::string& id) {
  std::vector<float> data(m.values().begin(), m.values().end());
  return Volume(id, m.dims(), 1, {1.5, 1.5, 1.5}, {"mask"}, std::move(data));
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

struct Pipeline::Cache {
  std::mutex mutex;
  std::optional<CohortManifest> manifest;
  std::optional<std::vector<SplitPlan>> plans;
  std::optional<std::vector<LabelAtlas>> atlases;
  std::map<std::string, std::shared_ptr<const LoadedSubject>> subjects;
};

// ---------------------------------------------------------------- pipeline

Pipeline::Pipeline(PipelineConfig config, Logger& log, RunMode mode)
    : config_(std::move(config)), log_(log), mode_(mode), cache_(std::make_unique<Cache>()) {}

Pipeline::~Pipeline() = default;

fs::path Pipeline::cohort_dir() const {
  return config_.cohort_dir.empty() ? out() / "cohort" : config_.cohort_dir;
}

fs::path Pipeline::atlas_dir() const {
  return config_.atlas_dir.empty() ? out() / "atlases" : config_.atlas_dir;
}

fs::path Pipeline::split_dir(int sample) const { return out() / split_name(sample); }

fs::path Pipeline::model_dir(int sample, ModelKind m) const {
  return split_dir(sample) / to_string(m);
}

std::vector<ModelKind> Pipeline::selected_models() const {
  std::vector<ModelKind> out;
  if (config_.models.ae) out.push_back(ModelKind::kAE);
  if (config_.models.sae) out.push_back(ModelKind::kSAE);
  return out;
}

void Pipeline::validate_inputs(bool need_cohort) {
  auto check = [](bool ok, const std::string& what) {
    require(ok, ErrorKind::kInvalidArgument, what);
  };
  if (!config_.cohort_dir.empty() || need_cohort) {
    check(fs::exists(cohort_dir() / "manifest.json"),
          "cohort manifest '" + (cohort_dir() / "manifest.json").string() +
              "' not found" + (config_.cohort_dir.empty() ? " (run `synth` first)" : ""));
  }
  if (!config_.atlas_dir.empty()) {
    check(fs::is_directory(config_.atlas_dir),
          "atlas directory '" + config_.atlas_dir.string() + "' does not exist");
    for (const auto& id : config_.atlas_ids) {
      for (const char* ext : {".mvol", ".json"}) {
        const fs::path p = config_.atlas_dir / (id + ext);
        check(fs::exists(p), "atlas file '" + p.string() + "' not found");
      }
    }
  } else {
    for (const auto& id : config_.atlas_ids) {
      check(id == kMacroAtlasId || id == kSubcorticalAtlasId,
            "atlas '" + id + "' has no phantom generator; set paths.atlases");
    }
  }
}

void Pipeline::prepare_output() {
  if (prepared_) return;
  const fs::path manifest = out() / "stages.json";
  if (fs::exists(manifest)) {
    require(mode_ != RunMode::kFresh, ErrorKind::kInvalidArgument,
            "output directory '" + out().string() +
                "' already holds a run; pass --resume to continue it or --force to recompute");
    const json j = read_json_file(manifest);
    for (const auto& [name, rec] : j.items()) {
      stages_[name] = {rec.at("key").get<std::string>(),
                       rec.at("outputs").get<std::vector<std::string>>()};
    }
  }
  fs::create_directories(out());
  write_frozen_config();
  prepared_ = true;
}

void Pipeline::write_frozen_config() {
  json j = to_json(config_);
  j["resolved_seeds"] = {{"phantom", derive_seed(config_.seed, 1)},
                         {"split", derive_seed(config_.seed, 2)}};
  for (int k = 1; k <= config_.n_splits; ++k) {
    j["resolved_seeds"][split_name(k)] = {{"ae", derive_seed(config_.seed, 1000 + 10 * k)},
                                          {"sae", derive_seed(config_.seed, 1001 + 10 * k)}};
  }
  write_json_file(out() / "config.json", j);
}

bool Pipeline::stage_done(const std::string& name, const std::string& key) {
  std::lock_guard lock(manifest_mutex_);
  const auto it = stages_.find(name);
  if (it == stages_.end() || it->second.key != key) return false;
  for (const auto& o : it->second.outputs) {
    if (!fs::exists(out() / o)) return false;
  }
  return true;
}

void Pipeline::mark_done(const std::string& name, const std::string& key,
                         const std::vector<fs::path>& outputs) {
  std::lock_guard lock(manifest_mutex_);
  StageRecord rec{key, {}};
  for (const auto& o : outputs) rec.outputs.push_back(fs::relative(o, out()).generic_string());
  stages_[name] = rec;
  json j = json::object();
  for (const auto& [n, r] : stages_) j[n] = {{"key", r.key}, {"outputs", r.outputs}};
  write_json_file(out() / "stages.json", j);
}

void Pipeline::stage(const std::string& name, const std::string& key, const fs::path& artifact,
                     const std::vector<fs::path>& outputs, const std::function<void()>& body) {
  if (mode_ != RunMode::kForce && stage_done(name, key)) {
    log_.info(name, "up to date, skipped", {{"skipped", true}});
    return;
  }
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body();
  } catch (const StageFailure&) {
    throw;
  } catch (const std::exception& e) {
    throw StageFailure(name, artifact, e.what());
  }
  mark_done(name, key, outputs);
  log_.info(name, "done in " + fmt10(seconds_since(t0)) + " s",
            {{"seconds", seconds_since(t0)}});
}

void Pipeline::for_each_split(const std::function<void(int)>& fn) {
  const int n = config_.n_splits;
  const int workers = std::min(config_.jobs, n);
  if (workers <= 1) {
    for (int k = 1; k <= n; ++k) fn(k);
    return;
  }
  std::atomic<int> next{1};
  std::mutex err_mutex;
  std::exception_ptr first_error;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int k = next++; k <= n; k = next++) {
        try {
          fn(k);
        } catch (...) {
          std::lock_guard lock(err_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------- keys

std::string Pipeline::synth_key() {
  if (!config_.cohort_dir.empty()) {
    return nn::fingerprint(read_text_file(config_.cohort_dir / "manifest.json"));
  }
  return digest({{"phantom", to_json(config_)["phantom"]}, {"seed", config_.seed}});
}

std::string Pipeline::atlas_key() {
  if (config_.atlas_dir.empty()) {
    return digest({{"synth", synth_key()}, {"ids", config_.atlas_ids}, {"generator", 1}});
  }
  json parts = json::array();
  for (const auto& id : config_.atlas_ids) {
    parts.push_back(nn::fingerprint(read_file_bytes(config_.atlas_dir / (id + ".mvol"))));
    parts.push_back(nn::fingerprint(read_text_file(config_.atlas_dir / (id + ".json"))));
  }
  return digest(parts);
}

std::string Pipeline::split_key() {
  return digest({{"synth", synth_key()}, {"split", to_json(config_)["split"]}, {"seed", config_.seed}});
}

std::string Pipeline::train_key(int sample, ModelKind m) {
  json cfg = to_json(config_)[to_string(m)];
  for (const char* k : {"aggregate", "stride", "inference_batch"}) cfg.erase(k);
  return digest({{"split", split_key()}, {"sample", sample}, {"model", to_string(m)}, {"cfg", cfg}});
}

std::string Pipeline::threshold_key(int sample, ModelKind m) {
  return digest({{"train", train_key(sample, m)},
                 {"q", config_.quantile},
                 {"cfg", to_json(config_)[to_string(m)]}});
}

std::string Pipeline::infer_key(int sample, ModelKind m) {
  return digest({{"threshold", threshold_key(sample, m)}, {"keep", config_.keep_error_maps}});
}

std::string Pipeline::score_key(int sample, ModelKind m) {
  return digest({{"infer", infer_key(sample, m)}, {"atlases", atlas_key()}});
}

std::string Pipeline::evaluate_key() {
  json parts = json::array();
  for (int k = 1; k <= config_.n_splits; ++k) {
    for (auto m : selected_models()) parts.push_back(score_key(k, m));
  }
  return digest(parts);
}

// ---------------------------------------------------------------- data access

namespace {

const CohortManifest& manifest_of(Pipeline::Cache& c, const fs::path& dir) {
  std::lock_guard lock(c.mutex);
  if (!c.manifest) c.manifest = CohortManifest::from_json(read_json_file(dir / "manifest.json"));
  return *c.manifest;
}

std::shared_ptr<const LoadedSubject> subject_of(Pipeline::Cache& c, const fs::path& dir,
                                                const std::string& id) {
  const CohortManifest& m = manifest_of(c, dir);
  {
    std::lock_guard lock(c.mutex);
    const auto it = c.subjects.find(id);
    if (it != c.subjects.end()) return it->second;
  }
  const SubjectRecord* rec = nullptr;
  for (const auto& s : m.subjects) {
    if (s.meta.subject_id == id) rec = &s;
  }
  require(rec != nullptr, ErrorKind::kInvalidArgument, "subject '" + id + "' not in the cohort manifest");
  auto loaded = std::make_shared<LoadedSubject>();
  loaded->meta = rec->meta;
  loaded->volume = normalize_channels(load_mvol(dir / rec->volume));
  require(loaded->volume.dims() == m.dims, ErrorKind::kShape,
          "volume of '" + id + "' does not match the cohort dims");
  loaded->mask = compute_brain_mask(loaded->volume);
  if (!rec->truth.empty()) loaded->truth = mask_from_volume(load_mvol(dir / rec->truth));
  std::lock_guard lock(c.mutex);
  c.subjects[id] = loaded;
  return loaded;
}

}  // namespace

// ---------------------------------------------------------------- stages

void Pipeline::synth() {
  prepare_output();
  if (config_.cohort_dir.empty()) {
    const fs::path dir = cohort_dir();
    stage("synth", synth_key(), dir, {dir / "manifest.json"}, [&] {
      const PhantomCohort cohort = synth_cohort(config_.phantom, derive_seed(config_.seed, 1));
      CohortManifest m;
      m.cohort_id = "phantom-" + synth_key();
      m.dims = config_.phantom.dims;
      for (std::size_t i = 0; i < cohort.volumes.size(); ++i) {
        const auto& v = cohort.volumes[i];
        const auto& t = cohort.truth[i];
        SubjectRecord r{cohort.meta[i], "subjects/" + v.subject_id() + ".mvol",
                        "truth/" + v.subject_id() + ".mvol"};
        save_mvol(v, dir / r.volume);
        save_mvol(mask_to_volume(t.anomaly_mask, v.subject_id()), dir / r.truth);
        json lesions = json::array();
        for (std::size_t l = 0; l < t.lesion_centers.size(); ++l) {
          const Voxel& c = t.lesion_centers[l];
          lesions.push_back({{"center", {c.z, c.y, c.x}}, {"magnitude", t.anomaly_magnitude[l]}});
        }
        write_json_file(dir / "truth" / (v.subject_id() + ".json"),
                        {{"subject_id", v.subject_id()},
                         {"brain_support", t.brain_support},
                         {"anomaly_voxels", t.anomaly_mask.count()},
                         {"lesion_radius", config_.phantom.lesion_radius},
                         {"lesions", lesions}});
        m.subjects.push_back(r);
      }
      write_json_file(dir / "manifest.json", m.to_json());
      log_.info("synth", "wrote " + std::to_string(m.subjects.size()) + " subjects to " + dir.string());
    });
  }
  if (config_.atlas_dir.empty()) {
    const fs::path dir = atlas_dir();
    std::vector<fs::path> outputs;
    for (const auto& id : config_.atlas_ids) {
      outputs.push_back(dir / (id + ".mvol"));
      outputs.push_back(dir / (id + ".json"));
    }
    stage("atlases", atlas_key(), dir, outputs, [&] {
      const Dims dims = manifest_of(*cache_, cohort_dir()).dims;
      for (const auto& id : config_.atlas_ids) {
        save_atlas(id == kMacroAtlasId ? phantom_macro_atlas(dims) : phantom_subcortical_atlas(dims), dir);
      }
    });
  }
}

void Pipeline::split() {
  prepare_output();
  const fs::path path = out() / "splits.json";
  stage("split", split_key(), path, {path}, [&] {
    const auto controls = manifest_of(*cache_, cohort_dir()).controls();
    const auto plans = bootstrap_split(controls, config_.n_splits, config_.n_train, config_.n_test,
                                       derive_seed(config_.seed, 2), config_.balance);
    json arr = json::array();
    for (const auto& p : plans) {
      arr.push_back(plan_to_json(p));
      log_.info("split", split_name(p.sample_index) + ": train age " + fmt10(p.train_mean_age) +
                             ", test age " + fmt10(p.test_mean_age) + ", " +
                             std::to_string(p.attempts) + " draws");
    }
    write_json_file(path, {{"n_samples", config_.n_splits}, {"plans", arr}});
  });
  std::lock_guard lock(cache_->mutex);
  cache_->plans.reset();
}

namespace {

const std::vector<SplitPlan>& plans_of(Pipeline::Cache& c, const fs::path& path, int expected) {
  std::lock_guard lock(c.mutex);
  if (!c.plans) {
    require(fs::exists(path), ErrorKind::kInvalidArgument,
            "'" + path.string() + "' not found (run `split` first)");
    const json j = read_json_file(path);
    std::vector<SplitPlan> plans;
    for (const auto& p : j.at("plans")) plans.push_back(plan_from_json(p));
    require(static_cast<int>(plans.size()) == expected, ErrorKind::kInvalidArgument,
            "splits.json holds " + std::to_string(plans.size()) + " plans, config asks for " +
                std::to_string(expected));
    c.plans = std::move(plans);
  }
  return *c.plans;
}

const std::vector<LabelAtlas>& atlases_of(Pipeline::Cache& c, const fs::path& dir,
                                          const std::vector<std::string>& ids) {
  std::lock_guard lock(c.mutex);
  if (!c.atlases) {
    std::vector<LabelAtlas> a;
    for (const auto& id : ids) a.push_back(load_atlas(dir, id));
    c.atlases = std::move(a);
  }
  return *c.atlases;
}

std::string model_id_of(int sample, ModelKind m, const std::vector<char>& bytes) {
  return split_name(sample) + "/" + to_string(m) + "/" + nn::fingerprint(bytes);
}

}  // namespace

void Pipeline::train_one(int sample, ModelKind m) {
  const fs::path dir = model_dir(sample, m);
  const std::string name = "train/" + split_name(sample) + "/" + to_string(m);
  stage(name, train_key(sample, m), dir, {dir / "model.ckpt", dir / "train_log.csv"}, [&] {
    const SplitPlan& plan = plans_of(*cache_, out() / "splits.json", config_.n_splits)[sample - 1];
    std::vector<std::shared_ptr<const LoadedSubject>> subjects;
    for (const auto& id : plan.train_ids) subjects.push_back(subject_of(*cache_, cohort_dir(), id));
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<double> losses;
    nn::Checkpoint ckpt;
    const std::uint64_t seed = derive_seed(config_.seed, 1000 + 10 * sample + (m == ModelKind::kAE ? 0 : 1));
    json meta = {{"split", sample}, {"model", to_string(m)}, {"seed", seed},
                 {"train_subjects", plan.train_ids.size()}};
    auto log_epoch = [&](int epoch, double loss, int epochs) {
      log_.info(name, "epoch " + std::to_string(epoch + 1) + "/" + std::to_string(epochs) +
                          " loss " + fmt10(loss),
                {{"epoch", epoch + 1}, {"loss", loss}});
    };
    if (m == ModelKind::kAE) {
      std::vector<SliceSample> slices;
      for (const auto& s : subjects) {
        auto sl = extract_axial_slices(s->volume, config_.ae.slices);
        slices.insert(slices.end(), std::make_move_iterator(sl.begin()), std::make_move_iterator(sl.end()));
      }
      models::TrainConfig cfg = config_.ae.train;
      cfg.seed = seed;
      auto result = models::train_ae(slices, cfg, [&](int e, double loss, auto&, const auto&) {
        log_epoch(e, loss, cfg.epochs);
      });
      meta["epochs"] = cfg.epochs;
      meta["samples"] = slices.size();
      ckpt = models::to_checkpoint(result.model, &result.optimizer, meta);
      losses = result.epoch_loss;
    } else {
      const int patch = config_.sae.patch;
      std::vector<std::vector<PatchSample>> patches;
      std::vector<const Volume*> volumes;
      for (std::size_t i = 0; i < subjects.size(); ++i) {
        patches.push_back(extract_patches(subjects[i]->volume, subjects[i]->mask,
                                          config_.sae.patches_per_subject, patch,
                                          derive_seed(seed, i + 1)));
        volumes.push_back(&subjects[i]->volume);
      }
      const auto pairs = build_similar_pairs(patches, volumes, derive_seed(seed, 0));
      patches.clear();
      models::TrainConfig cfg = config_.sae.train;
      cfg.seed = seed;
      auto result = models::train_sae(pairs, cfg, [&](int e, double loss, auto&, const auto&) {
        log_epoch(e, loss, cfg.epochs);
      });
      meta["epochs"] = cfg.epochs;
      meta["samples"] = pairs.size();
      ckpt = models::to_checkpoint(result.model, &result.optimizer, meta);
      losses = result.epoch_loss;
    }
    nn::save_checkpoint(ckpt, dir / "model.ckpt");
    std::string csv = "epoch,mean_loss\n";
    for (std::size_t e = 0; e < losses.size(); ++e) csv += std::to_string(e + 1) + "," + fmt10(losses[e]) + "\n";
    write_text_file(dir / "train_log.csv", csv);
    write_json_file(dir / "train_time.json", {{"wall_seconds", seconds_since(t0)}, {"epochs", losses.size()}});
  });
}

namespace {

// Maps of one subject under a model loaded from `ckpt_path`.
class MapMaker {
 public:
  MapMaker(const fs::path& ckpt_path, ModelKind kind, int sample, const PipelineConfig& config)
      : kind_(kind), config_(config) {
    const auto bytes = read_file_bytes(ckpt_path);
    id_ = model_id_of(sample, kind, bytes);
    const nn::Checkpoint ckpt = nn::decode_checkpoint(bytes, ckpt_path.string());
    if (kind == ModelKind::kAE) {
      ae_.emplace(models::ae_from_checkpoint(ckpt));
    } else {
      sae_.emplace(models::sae_from_checkpoint(ckpt));
    }
  }
  const std::string& id() const { return id_; }
  ErrorMap operator()(const LoadedSubject& s) {
    if (kind_ == ModelKind::kAE) return error_volume_ae(*ae_, s.volume, s.mask, config_.ae.slices, id_);
    return error_volume_sae(*sae_, s.volume, s.mask, config_.sae.map, id_);
  }

 private:
  ModelKind kind_;
  const PipelineConfig& config_;
  std::string id_;
  std::optional<models::AEModel<float>> ae_;
  std::optional<models::SAEModel<float>> sae_;
};

}  // namespace

void Pipeline::threshold_one(int sample, ModelKind m) {
  const fs::path dir = model_dir(sample, m);
  const std::string name = "threshold/" + split_name(sample) + "/" + to_string(m);
  stage(name, threshold_key(sample, m), dir, {dir / "threshold.json"}, [&] {
    const SplitPlan& plan = plans_of(*cache_, out() / "splits.json", config_.n_splits)[sample - 1];
    MapMaker make(dir / "model.ckpt", m, sample, config_);
    std::vector<ErrorMap> maps;
    for (const auto& id : plan.train_ids) maps.push_back(make(*subject_of(*cache_, cohort_dir(), id)));
    const auto t = abnormality_threshold(maps, config_.quantile, split_name(sample) + "/train_controls");
    write_json_file(dir / "threshold.json", to_json(t));
    log_.info(name, "q=" + fmt10(t.q) + " threshold " + fmt10(t.value) + " over " +
                        std::to_string(t.pool_size) + " voxels");
  });
}

namespace {

std::vector<std::string> test_subjects(const SplitPlan& plan, const CohortManifest& manifest) {
  std::vector<std::string> ids = plan.test_ids;
  for (const auto& p : manifest.patients()) ids.push_back(p.subject_id);
  return ids;
}

}  // namespace

void Pipeline::infer_one(int sample, ModelKind m) {
  const fs::path dir = model_dir(sample, m);
  const std::string name = "infer/" + split_name(sample) + "/" + to_string(m);
  stage(name, infer_key(sample, m), dir, {dir / "binary_maps", dir / "detectability.json"}, [&] {
    const SplitPlan& plan = plans_of(*cache_, out() / "splits.json", config_.n_splits)[sample - 1];
    const auto t = threshold_from_json(read_json_file(dir / "threshold.json"));
    MapMaker make(dir / "model.ckpt", m, sample, config_);
    require(t.model_id == make.id(), ErrorKind::kState,
            "threshold.json belongs to model " + t.model_id + ", checkpoint is " + make.id());
    double in_sum = 0, out_sum = 0;
    std::size_t in_n = 0, out_n = 0;
    json per_subject = json::array();
    for (const auto& id : test_subjects(plan, manifest_of(*cache_, cohort_dir()))) {
      const auto s = subject_of(*cache_, cohort_dir(), id);
      const ErrorMap map = make(*s);
      if (config_.keep_error_maps) save_mvol(error_map_to_volume(map), dir / "error_maps" / (id + ".mvol"));
      save_mvol(binary_map_to_volume(binarize(map, t.value)), dir / "binary_maps" / (id + ".mvol"));
      if (!s->truth || s->meta.cohort != Cohort::kPatient) continue;
      double si = 0, so = 0;
      std::size_t ni = 0, no = 0;
      for (std::size_t k = 0; k < map.joint_error.size(); ++k) {
        if (!map.coverage.values()[k]) continue;
        if (s->truth->values()[k]) {
          si += map.joint_error[k];
          ++ni;
        } else {
          so += map.joint_error[k];
          ++no;
        }
      }
      in_sum += si, out_sum += so, in_n += ni, out_n += no;
      per_subject.push_back({{"subject_id", id}, {"inside_voxels", ni},
                             {"inside_mean", ni ? si / ni : 0.0}, {"outside_mean", no ? so / no : 0.0}});
    }
    json det = {{"subjects", per_subject}};
    if (in_n > 0 && out_n > 0) {
      det["inside_mean"] = in_sum / in_n;
      det["outside_mean"] = out_sum / out_n;
      det["ratio"] = (in_sum / in_n) / (out_sum / out_n);
    }
    write_json_file(dir / "detectability.json", det);
  });
}

void Pipeline::score_one(int sample, ModelKind m) {
  const fs::path dir = model_dir(sample, m);
  const std::string name = "score/" + split_name(sample) + "/" + to_string(m);
  stage(name, score_key(sample, m), dir, {dir / "scores.csv"}, [&] {
    const SplitPlan& plan = plans_of(*cache_, out() / "splits.json", config_.n_splits)[sample - 1];
    const auto& atlases = atlases_of(*cache_, atlas_dir(), config_.atlas_ids);
    const auto rois = roi_list(atlases);
    RoiScoreTable table;
    for (const auto& r : rois) table.rois.push_back(r.name);
    const auto t = threshold_from_json(read_json_file(dir / "threshold.json"));
    const auto& manifest = manifest_of(*cache_, cohort_dir());
    for (const auto& id : test_subjects(plan, manifest)) {
      const BinaryAnomalyMap b = binary_map_from_volume(load_mvol(dir / "binary_maps" / (id + ".mvol")), t.value);
      Cohort cohort = Cohort::kControl;
      for (const auto& s : manifest.subjects) {
        if (s.meta.subject_id == id) cohort = s.meta.cohort;
      }
      table.rows.push_back({id, cohort, roi_scores(b, atlases, rois)});
    }
    write_text_file(dir / "scores.csv", table.to_csv());
  });
}

void Pipeline::train() {
  prepare_output();
  for_each_split([&](int k) {
    for (auto m : selected_models()) train_one(k, m);
  });
}

void Pipeline::threshold() {
  prepare_output();
  for_each_split([&](int k) {
    for (auto m : selected_models()) threshold_one(k, m);
  });
}

void Pipeline::infer() {
  prepare_output();
  for_each_split([&](int k) {
    for (auto m : selected_models()) infer_one(k, m);
  });
}

void Pipeline::score() {
  prepare_output();
  for_each_split([&](int k) {
    for (auto m : selected_models()) score_one(k, m);
  });
}

void Pipeline::evaluate() {
  prepare_output();
  const fs::path results = out() / "results";
  stage("evaluate", evaluate_key(), results,
        {results / "gmean_by_split.csv", results / "bootstrap_summary.csv", results / "rois.csv"}, [&] {
          const auto& atlases = atlases_of(*cache_, atlas_dir(), config_.atlas_ids);
          std::string rois_csv = "roi,group\n";
          for (const auto& r : roi_list(atlases)) rois_csv += r.name + "," + r.group + "\n";
          std::vector<SplitScore> scores;
          std::string by_split = "sample,model,roi,gmean,pathological_threshold,sensitivity,specificity\n";
          std::string det_csv = "sample,model,inside_mean,outside_mean,ratio\n";
          for (int k = 1; k <= config_.n_splits; ++k) {
            for (auto m : selected_models()) {
              const fs::path dir = model_dir(k, m);
              require(fs::exists(dir / "scores.csv"), ErrorKind::kInvalidArgument,
                      "'" + (dir / "scores.csv").string() + "' not found (run `score` first)");
              const auto table = RoiScoreTable::from_csv(read_text_file(dir / "scores.csv"));
              json roc = json::object();
              for (const auto& r : evaluate_split(table)) {
                roc[r.roi] = to_json(r.roc);
                const RocPoint& b = r.roc.best();
                scores.push_back({k, to_string(m), r.roi, b.gmean});
                by_split += std::to_string(k) + "," + to_string(m) + "," + r.roi + "," + fmt10(b.gmean) +
                            "," + fmt10(b.threshold) + "," + fmt10(b.sensitivity) + "," +
                            fmt10(b.specificity) + "\n";
              }
              write_json_file(dir / "roc.json", roc);
              const json det = read_json_file(dir / "detectability.json");
              if (det.contains("ratio")) {
                det_csv += std::to_string(k) + "," + to_string(m) + "," +
                           fmt10(det["inside_mean"].get<double>()) + "," +
                           fmt10(det["outside_mean"].get<double>()) + "," +
                           fmt10(det["ratio"].get<double>()) + "\n";
              }
            }
          }
          write_text_file(results / "rois.csv", rois_csv);
          write_text_file(results / "gmean_by_split.csv", by_split);
          write_text_file(results / "detectability.csv", det_csv);
          write_text_file(results / "bootstrap_summary.csv", aggregate_bootstrap(scores).to_csv());
          for (const auto& row : aggregate_bootstrap(scores).rows) {
            if (row.roi != kWholeBrain) continue;
            log_.info("evaluate", row.model + " whole-brain g-mean " + fmt10(row.mean) + " +- " + fmt10(row.std),
                      {{"model", row.model}, {"gmean", row.mean}, {"std", row.std}});
          }
        });
}

void Pipeline::report() {
  prepare_output();
  const fs::path results = out() / "results";
  for (const char* f : {"bootstrap_summary.csv", "rois.csv", "detectability.csv"}) {
    require(fs::exists(results / f), ErrorKind::kInvalidArgument,
            "results tree incomplete: '" + (results / f).string() + "' not found (run `evaluate` first)");
  }
  for (auto m : selected_models()) {
    require(fs::exists(model_dir(1, m) / "scores.csv"), ErrorKind::kInvalidArgument,
            "results tree incomplete: '" + (model_dir(1, m) / "scores.csv").string() + "' not found");
  }
  std::vector<fs::path> outputs{out() / "report.md", out() / "figures" / "gmean_bars.svg"};
  for (auto m : selected_models()) outputs.push_back(out() / "figures" / ("heat_" + to_string(m) + ".svg"));
  const std::string key = digest({{"summary", nn::fingerprint(read_text_file(results / "bootstrap_summary.csv"))},
                                  {"det", nn::fingerprint(read_text_file(results / "detectability.csv"))},
                                  {"profile", config_.profile},
                                  {"models", models_string(config_.models)}});
  stage("report", key, out() / "figures", outputs, [&] {
    const auto summary = BootstrapSummary::from_csv(read_text_file(results / "bootstrap_summary.csv"));
    std::vector<RoiColumn> rois;
    std::istringstream in(read_text_file(results / "rois.csv"));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      const auto comma = line.find(',');
      if (comma != std::string::npos) rois.push_back({line.substr(0, comma), line.substr(comma + 1)});
    }
    write_text_file(out() / "figures" / "gmean_bars.svg", gmean_bar_chart_svg(summary, rois));
    for (auto m : selected_models()) {
      const auto table = RoiScoreTable::from_csv(read_text_file(model_dir(1, m) / "scores.csv"));
      std::string label = to_string(m);
      for (auto& c : label) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      write_text_file(out() / "figures" / ("heat_" + to_string(m) + ".svg"),
                      score_heat_table_svg(table, label + ": abnormal voxels per ROI (%), " + split_name(1)));
    }
    std::vector<DetectabilityRow> det;
    std::istringstream din(read_text_file(results / "detectability.csv"));
    std::getline(din, line);
    while (std::getline(din, line)) {
      DetectabilityRow r;
      char model[16] = {0};
      if (std::sscanf(line.c_str(), "%d,%15[^,],%lf,%lf,%lf", &r.sample, model, &r.inside_mean,
                      &r.outside_mean, &r.ratio) == 5) {
        r.model = model;
        det.push_back(r);
      }
    }
    write_text_file(out() / "report.md", render_report_md(summary, det, config_.profile, config_.n_splits));
  });
}

void Pipeline::run() {
  validate_inputs(false);
  prepare_output();
  synth();
  split();
  // Each split runs its whole chain so --jobs can overlap splits.
  for_each_split([&](int k) {
    for (auto m : selected_models()) {
      train_one(k, m);
      threshold_one(k, m);
      infer_one(k, m);
      score_one(k, m);
    }
  });
  evaluate();
  report();
}

}  // namespace anomap::pipeline
