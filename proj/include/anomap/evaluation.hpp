#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "anomap/anomaly.hpp"
#include "anomap/atlas.hpp"

namespace anomap {

inline constexpr const char* kWholeBrain = "whole_brain";

/// A scored region: whole brain (atlas < 0) or one label of one atlas.
struct Roi {
  std::string name;
  std::string group;  // "whole", or the atlas id
  int atlas = -1;
  std::int32_t label = 0;
};

/// Whole brain first, then every atlas's labels in ascending order.
std::vector<Roi> roi_list(std::span<const LabelAtlas> atlases);

/// 100 |abnormal ∩ ROI ∩ coverage| / |ROI ∩ coverage|. Throws when the ROI
/// has no covered voxel.
double roi_fraction(const BinaryAnomalyMap& map, const LabelAtlas& atlas, std::int32_t label);
double whole_brain_fraction(const BinaryAnomalyMap& map);
std::vector<double> roi_scores(const BinaryAnomalyMap& map, std::span<const LabelAtlas> atlases,
                               std::span<const Roi> rois);

struct RoiScoreRow {
  std::string subject_id;
  Cohort cohort = Cohort::kControl;
  std::vector<double> percent;  // one per ROI column
};

struct RoiScoreTable {
  std::vector<std::string> rois;
  std::vector<RoiScoreRow> rows;

  std::vector<double> column(std::size_t roi) const;
  std::vector<Cohort> cohorts() const;
  /// subject_id,cohort,<roi>...; values with 10 significant digits.
  std::string to_csv() const;
  static RoiScoreTable from_csv(const std::string& text);
};

/// sqrt(sensitivity * specificity); both in [0, 1].
double gmean(double sensitivity, double specificity);

struct RocPoint {
  double threshold = 0.0;
  int tp = 0, fn = 0, tn = 0, fp = 0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  double gmean = 0.0;
};

/// Sweep over candidate pathological thresholds in ascending order; patient
/// <=> score > threshold.
struct RocResult {
  std::vector<RocPoint> sweep;
  std::size_t chosen = 0;
  int positives = 0;
  int negatives = 0;

  const RocPoint& best() const { return sweep[chosen]; }
};

/// Candidates are the midpoints between consecutive distinct scores plus one
/// sentinel below the minimum and one above the maximum. The chosen point
/// maximises g-mean; ties go to the smallest threshold.
RocResult roc_select(std::span<const double> scores, std::span<const Cohort> labels);

nlohmann::json to_json(const RocResult& roc);

struct RoiRoc {
  std::string roi;
  RocResult roc;
};

/// One RocResult per ROI column of a score table holding the test controls
/// and the patients of one split.
std::vector<RoiRoc> evaluate_split(const RoiScoreTable& table);

struct SplitScore {
  int sample_index = 0;
  std::string model;
  std::string roi;
  double gmean = 0.0;
};

struct SummaryRow {
  std::string model;
  std::string roi;
  std::size_t n = 0;
  double mean = 0.0;
  double std = 0.0;  // sample (n - 1); 0 when n == 1
  bool single_split = false;
  int best_sample = 0;
  double best_gmean = 0.0;
};

struct BootstrapSummary {
  std::vector<SummaryRow> rows;

  std::string to_csv() const;
  static BootstrapSummary from_csv(const std::string& text);
};

/// Groups by (model, roi) in order of first appearance. The best sample is
/// the highest g-mean, lowest sample index on ties.
BootstrapSummary aggregate_bootstrap(std::span<const SplitScore> scores);

}  // namespace anomap
