// Exits nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "anomap/anomaly.hpp"
#include "anomap/atlas.hpp"
#include "anomap/evaluation.hpp"
#include "anomap/io.hpp"
#include "anomap/models/autoencoder.hpp"
#include "anomap/models/losses.hpp"
#include "anomap/models/siamese.hpp"
#include "anomap/nn/gradcheck.hpp"
#include "anomap/phantom.hpp"
#include "anomap/pipeline/pipeline.hpp"
#include "anomap/rng.hpp"

using namespace anomap;
namespace fs = std::filesystem;
using nn::Shape;
using nn::Tensor;

namespace {

// Tolerances and budgets. Changing any of these changes what "pass" means.
constexpr double kGradTolerance = 1e-4;
constexpr double kGradStep = 1e-5;  // float64 central differences
constexpr int kGradSeeds = 5;
constexpr double kSaeAlpha = 0.005;
constexpr double kWorkedExampleGmean = 0.8165;
constexpr double kWorkedExampleTolerance = 1e-4;
constexpr int kQuantileValues = 100000;
constexpr int kRocSets = 200;
constexpr double kMinWholeBrainGmean = 0.80;
constexpr double kMinDetectabilityRatio = 2.0;
constexpr double kShapeBudgetSeconds = 1.0;
constexpr double kGradBudgetSeconds = 60.0;
constexpr double kMonotoneBudgetSeconds = 60.0;
constexpr double kEndToEndBudgetSeconds = 15 * 60.0;

int failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  std::printf("%s criterion %d: %s (%s)\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, const char* f = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

template <typename T>
Tensor<T> random_tensor(Shape s, Rng& rng, double lo, double hi) {
  Tensor<T> t(s);
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// Runs `body`, turning an exception into a failed criterion.
void guarded(int id, const std::string& name, const std::function<void()>& body) {
  try {
    body();
  } catch (const std::exception& e) {
    report(id, name, false, std::string("exception: ") + e.what());
  }
}

void shapes() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(1);
  models::AEModel<float> ae(2, 121, 145);
  ae.initialize(1);
  const auto x = random_tensor<float>({1, 2, 121, 145}, rng, 0, 1);
  const auto y = ae.forward(x, nn::Mode::kTrain);
  const bool ae_ok = ae.latent().shape() == Shape{1, 256, 4, 5} && y.shape() == x.shape();

  models::SAEModel<float> sae(2, 15);
  sae.initialize(2);
  const auto p = random_tensor<float>({1, 2, 15, 15}, rng, 0, 1);
  const bool sae_ok = sae.encode(p).shape() == Shape{1, 16, 2, 2} &&
                      sae.reconstruct(p).shape() == Shape{1, 2, 15, 15};
  const double secs = seconds_since(t0);
  report(1, "shape oracles", ae_ok && sae_ok && secs < kShapeBudgetSeconds,
         std::string("AE bottleneck 256x4x5 ") + (ae_ok ? "ok" : "wrong") + ", SAE 16x2x2 / 2x15x15 " +
             (sae_ok ? "ok" : "wrong") + ", " + fmt(secs, "%.2f") + " s");
}

void gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  bool all = true;
  for (std::uint64_t seed = 1; seed <= kGradSeeds; ++seed) {
    Rng rng(seed * 31);
    models::AEModel<double> ae(2, 8, 10);
    ae.initialize(seed);
    const auto x = random_tensor<double>({4, 2, 8, 10}, rng, 0, 1);
    auto ae_loss = [&] { return models::ae_loss(x, ae.forward(x, nn::Mode::kTrain)); };
    auto ae_loss_grad = [&] {
      ae.zero_grad();
      const auto r = ae.forward(x, nn::Mode::kTrain);
      ae.backward(models::ae_loss_grad(x, r));
      return models::ae_loss(x, r);
    };
    nn::GradCheckOptions opts;
    opts.seed = seed;
    opts.tolerance = kGradTolerance;
    opts.step = kGradStep;
    const auto ae_params = ae.params();
    const auto a = nn::grad_check(ae_params, ae_loss, ae_loss_grad, opts);

    models::SAEModel<double> sae(2, 15);
    sae.initialize(seed);
    const auto x1 = random_tensor<double>({2, 2, 15, 15}, rng, 0, 1);
    const auto x2 = random_tensor<double>({2, 2, 15, 15}, rng, 0, 1);
    auto sae_loss = [&] {
      const auto o = sae.forward_pair(x1, x2, nn::Mode::kTrain);
      return models::sae_loss(x1, x2, o.recon1, o.recon2, o.z1, o.z2, kSaeAlpha).total;
    };
    auto sae_loss_grad = [&] {
      sae.zero_grad();
      const auto o = sae.forward_pair(x1, x2, nn::Mode::kTrain);
      models::SaeLossGrads<double> g;
      const auto t = models::sae_loss(x1, x2, o.recon1, o.recon2, o.z1, o.z2, kSaeAlpha, &g);
      sae.backward_pair(g.recon1, g.recon2, g.z1, g.z2);
      return t.total;
    };
    const auto sae_params = sae.params();
    const auto s = nn::grad_check(sae_params, sae_loss, sae_loss_grad, opts);

    worst = std::max({worst, a.max_relative_error, s.max_relative_error});
    all = all && a.passed && s.passed && a.max_relative_error <= kGradTolerance &&
          s.max_relative_error <= kGradTolerance;
  }
  const double secs = seconds_since(t0);
  report(2, "full-model gradients vs central differences (float64)",
         all && secs < kGradBudgetSeconds,
         "AE and SAE, " + std::to_string(kGradSeeds) + " seeds, max relative error " + fmt(worst) +
             " <= " + fmt(kGradTolerance) + ", " + fmt(secs, "%.1f") + " s");
}

void loss_identities() {
  Rng rng(6);
  const auto x1 = random_tensor<float>({3, 2, 15, 15}, rng, 0, 1);
  const auto x2 = random_tensor<float>({3, 2, 15, 15}, rng, 0, 1);
  const auto z = random_tensor<float>({3, 16, 2, 2}, rng, -1, 1);
  const double sae = models::sae_loss(x1, x2, x1, x2, z, z, kSaeAlpha).total;
  // a float32 ulp at 0.005
  const double ulp = std::ldexp(1.0, -31);
  const double ae = models::ae_loss(x1, x1);
  report(3, "loss identities", std::abs(sae + kSaeAlpha) <= ulp && ae == 0.0,
         "L_SAE(perfect, identical latents) = " + fmt(sae, "%.17g") + ", L_AE(x, x) = " + fmt(ae));
}

struct SweepChoice {
  double threshold;
  double gmean;
};

// Exhaustive sweep over every distinct score +- eps and far sentinels,
// ascending; the first threshold reaching the best tp * tn wins.
SweepChoice exhaustive_sweep(const std::vector<double>& scores, const std::vector<Cohort>& labels,
                             double eps) {
  std::set<double> cands{-1e9, 1e9};
  for (double s : scores) {
    cands.insert(s - eps);
    cands.insert(s + eps);
  }
  int pos = 0, neg = 0;
  for (auto l : labels) (l == Cohort::kPatient ? pos : neg) += 1;
  long best = -1;
  SweepChoice choice{0, 0};
  for (double t : cands) {
    int tp = 0, tn = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const bool flagged = scores[i] > t;
      tp += labels[i] == Cohort::kPatient && flagged;
      tn += labels[i] == Cohort::kControl && !flagged;
    }
    if (static_cast<long>(tp) * tn > best) {
      best = static_cast<long>(tp) * tn;
      choice = {t, gmean(static_cast<double>(tp) / pos, static_cast<double>(tn) / neg)};
    }
  }
  return choice;
}

std::vector<bool> classify(const std::vector<double>& scores, double t) {
  std::vector<bool> out;
  for (double s : scores) out.push_back(s > t);
  return out;
}

void oracles() {
  Rng rng(12345);
  std::vector<float> values(kQuantileValues);
  for (auto& v : values) v = static_cast<float>(rng.normal(0, 1));
  std::vector<float> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  bool quantile_ok = true;
  for (double q : {0.98, 0.5, 0.02, 0.999, 0.123456}) {
    const double h = static_cast<double>(sorted.size() - 1) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const double expect = sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
    quantile_ok = quantile_ok && quantile_linear(values, q) == expect;
  }

  int roc_agree = 0;
  for (int set = 0; set < kRocSets; ++set) {
    const int controls = 1 + static_cast<int>(rng.index(20));
    const int patients = 1 + static_cast<int>(rng.index(40));
    std::vector<Cohort> labels(controls, Cohort::kControl);
    labels.insert(labels.end(), patients, Cohort::kPatient);
    std::vector<double> scores;
    for (int i = 0; i < controls + patients; ++i) {
      const double shift = labels[i] == Cohort::kPatient ? rng.uniform(0, 3) : 0.0;
      scores.push_back(set % 2 == 0 ? static_cast<double>(rng.index(12)) + std::floor(shift)
                                    : rng.uniform(0, 10) + shift);
    }
    std::vector<double> s = scores;
    std::sort(s.begin(), s.end());
    double gap = 1.0;
    for (std::size_t i = 1; i < s.size(); ++i) {
      if (s[i] > s[i - 1]) gap = std::min(gap, s[i] - s[i - 1]);
    }
    const RocResult r = roc_select(scores, labels);
    const SweepChoice o = exhaustive_sweep(scores, labels, gap / 4);
    roc_agree += r.best().gmean == o.gmean &&
                 classify(scores, r.best().threshold) == classify(scores, o.threshold);
  }

  const std::vector<double> worked{2, 3, 4, 3.5, 5, 6};
  const std::vector<Cohort> wl{Cohort::kControl, Cohort::kControl, Cohort::kControl,
                               Cohort::kPatient, Cohort::kPatient, Cohort::kPatient};
  const double g = roc_select(worked, wl).best().gmean;
  const bool worked_ok = std::abs(g - kWorkedExampleGmean) <= kWorkedExampleTolerance;

  report(4, "oracle equivalences", quantile_ok && roc_agree == kRocSets && worked_ok,
         std::string("quantile vs full sort on 1e5 values ") + (quantile_ok ? "exact" : "MISMATCH") +
             ", roc_select vs exhaustive sweep " + std::to_string(roc_agree) + "/" +
             std::to_string(kRocSets) + ", worked example g-mean " + fmt(g, "%.4f"));
}

void monotonicity() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(77);
  const Dims d{48, 56, 48};
  const BrainMask support = phantom_support(d);

  // abnormal-voxel counts along an increasing threshold grid
  ErrorMap em{"s", d, std::vector<float>(d.voxels(), -1.0f), BrainMask(d), ModelKind::kAE, "m"};
  for (std::size_t k = 0; k < d.voxels(); ++k) {
    if (!support.values()[k]) continue;
    em.coverage.values()[k] = 1;
    em.joint_error[k] = static_cast<float>(std::abs(rng.normal(0, 0.05)));
  }
  bool counts_ok = true;
  std::size_t prev = d.voxels() + 1;
  for (int i = 0; i <= 200; ++i) {
    const std::size_t n = binarize(em, 0.001 * i).abnormal.count();
    counts_ok = counts_ok && n <= prev;
    prev = n;
  }

  bool sweep_ok = true;
  for (int set = 0; set < 100; ++set) {
    const int controls = 1 + static_cast<int>(rng.index(30));
    const int patients = 1 + static_cast<int>(rng.index(30));
    std::vector<Cohort> labels(controls, Cohort::kControl);
    labels.insert(labels.end(), patients, Cohort::kPatient);
    std::vector<double> scores;
    for (int i = 0; i < controls + patients; ++i) scores.push_back(static_cast<double>(rng.index(15)));
    const RocResult r = roc_select(scores, labels);
    for (std::size_t i = 1; i < r.sweep.size(); ++i) {
      sweep_ok = sweep_ok && r.sweep[i].sensitivity <= r.sweep[i - 1].sensitivity &&
                 r.sweep[i].specificity >= r.sweep[i - 1].specificity;
    }
  }

  // size-weighted macro-region fractions reproduce the whole-brain fraction
  const LabelAtlas macro = phantom_macro_atlas(d);
  BinaryAnomalyMap m;
  m.subject_id = "s";
  m.coverage = BrainMask(d);
  m.abnormal = BrainMask(d);
  for (std::size_t k = 0; k < d.voxels(); ++k) {
    m.coverage.values()[k] = support.values()[k];
    m.abnormal.values()[k] = support.values()[k] && rng.uniform() < 0.05;
  }
  double weighted = 0.0, total = 0.0;
  for (const auto& [label, name] : macro.names) {
    std::size_t covered = 0;
    for (std::size_t k = 0; k < d.voxels(); ++k) covered += macro.labels[k] == label && m.coverage.values()[k];
    weighted += roi_fraction(m, macro, label) * static_cast<double>(covered);
    total += static_cast<double>(covered);
  }
  const double whole = whole_brain_fraction(m);
  const bool partition_ok = std::abs(weighted / total - whole) <= 1e-9 * std::max(1.0, whole);
  const double secs = seconds_since(t0);
  report(5, "monotonicity suite",
         counts_ok && sweep_ok && partition_ok && secs < kMonotoneBudgetSeconds,
         std::string("counts vs threshold ") + (counts_ok ? "non-increasing" : "VIOLATED") +
             ", sweep sens/spec " + (sweep_ok ? "monotone" : "VIOLATED") + ", partition identity " +
             (partition_ok ? "holds" : "VIOLATED") + ", " + fmt(secs, "%.1f") + " s");
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("anomap_acceptance_" + name);
  fs::remove_all(p);
  return p;
}

void end_to_end() {
  pipeline::PipelineConfig c = pipeline::resolve_config({}, {{"profile", "quick"}});
  c.output_dir = fresh_dir("quick");
  const PhantomSpec& p = c.phantom;
  const bool profile_ok = p.n_controls == 30 && p.n_patients == 15 && p.dims.depth == 48 &&
                          p.dims.height == 56 && p.dims.width == 48 && p.anomaly_magnitude == 0.15 &&
                          p.noise_sigma == 0.02 && c.n_splits == 2 && c.models.ae && c.models.sae;
  pipeline::validate(c);
  pipeline::Logger log(false, true);
  const auto t0 = std::chrono::steady_clock::now();
  pipeline::Pipeline run(c, log, pipeline::RunMode::kFresh);
  run.run();
  const double secs = seconds_since(t0);

  const auto summary = BootstrapSummary::from_csv(read_text_file(c.output_dir / "results" / "bootstrap_summary.csv"));
  std::map<std::string, double> g;
  for (const auto& r : summary.rows) {
    if (r.roi == kWholeBrain) g[r.model] = r.mean;
  }
  double min_ratio = 1e300;
  std::istringstream det(read_text_file(c.output_dir / "results" / "detectability.csv"));
  std::string line;
  std::getline(det, line);
  int det_rows = 0;
  while (std::getline(det, line)) {
    min_ratio = std::min(min_ratio, std::stod(line.substr(line.rfind(',') + 1)));
    ++det_rows;
  }
  const bool pass = profile_ok && g.count("ae") && g.count("sae") && g["ae"] >= kMinWholeBrainGmean &&
                    g["sae"] >= kMinWholeBrainGmean && det_rows == 2 * c.n_splits &&
                    min_ratio >= kMinDetectabilityRatio && secs <= kEndToEndBudgetSeconds;
  report(6, "end-to-end phantom regression (quick profile)", pass,
         "whole-brain g-mean AE " + fmt(g["ae"], "%.3f") + ", SAE " + fmt(g["sae"], "%.3f") + " (>= " +
             fmt(kMinWholeBrainGmean, "%.2f") + "), min inside/outside error ratio " + fmt(min_ratio, "%.2f") +
             " (>= " + fmt(kMinDetectabilityRatio, "%.1f") + "), " + fmt(secs, "%.0f") + " s");

}

void reference_values() {
  // report.md of the quick run
  const std::string md = read_text_file(fs::temp_directory_path() / "anomap_acceptance_quick" / "report.md");
  const bool ref_ok = md.find("66.9 ± 5.8%") != std::string::npos &&
                      md.find("65.3 ± 7.5%") != std::string::npos &&
                      md.find("not reproducible") != std::string::npos &&
                      md.find("this run (phantom)") != std::string::npos;
  report(8, "reference values in report.md", ref_ok,
         "SAE 66.9 ± 5.8%, AE 65.3 ± 7.5% next to phantom results, labelled not reproducible");
}

std::map<std::string, std::string> artifacts(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    const auto ext = e.path().extension();
    if (e.is_regular_file() && (ext == ".ckpt" || ext == ".csv" || ext == ".svg")) {
      out[fs::relative(e.path(), root).string()] = read_text_file(e.path());
    }
  }
  return out;
}

void determinism() {
  // reduced schedule over a smaller phantom, both models, two splits
  const nlohmann::json reduced = {
      {"profile", "quick"},
      {"phantom", {{"n_controls", 12}, {"n_patients", 6}, {"dims", {24, 40, 32}}, {"lesion_radius", 3}}},
      {"split", {{"n_samples", 2}, {"n_train", 8}, {"n_test", 4}}},
      {"ae", {{"epochs", 2}, {"slices", 8}, {"batch_size", 16}}},
      {"sae", {{"epochs", 2}, {"patches_per_subject", 60}, {"batch_size", 60}, {"stride", 5}}}};
  std::map<std::string, std::string> runs[2];
  for (int i = 0; i < 2; ++i) {
    pipeline::PipelineConfig c = pipeline::resolve_config({}, reduced);
    c.output_dir = fresh_dir("determinism_" + std::to_string(i));
    pipeline::Logger log(false, true);
    pipeline::Pipeline run(c, log, pipeline::RunMode::kFresh);
    run.run();
    runs[i] = artifacts(c.output_dir);
  }
  int ckpt = 0, csv = 0, svg = 0, differ = 0;
  for (const auto& [name, bytes] : runs[0]) {
    const auto it = runs[1].find(name);
    if (it == runs[1].end() || it->second != bytes) ++differ;
    const auto ext = fs::path(name).extension();
    ckpt += ext == ".ckpt";
    csv += ext == ".csv";
    svg += ext == ".svg";
  }
  const bool pass = differ == 0 && runs[0].size() == runs[1].size() && ckpt == 4 && csv > 0 && svg == 3;
  report(7, "determinism", pass,
         std::to_string(ckpt) + " checkpoints, " + std::to_string(csv) + " CSVs, " + std::to_string(svg) +
             " SVGs compared across two runs, " + std::to_string(differ) + " differ");
}

}  // namespace

int main() {
  guarded(1, "shape oracles", shapes);
  guarded(2, "full-model gradients vs central differences (float64)", gradients);
  guarded(3, "loss identities", loss_identities);
  guarded(4, "oracle equivalences", oracles);
  guarded(5, "monotonicity suite", monotonicity);
  guarded(7, "determinism", determinism);
  guarded(6, "end-to-end phantom regression (quick profile)", end_to_end);
  guarded(8, "reference values in report.md", reference_values);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
