#pragma once

#include <string>
#include <vector>

#include "anomap/evaluation.hpp"

namespace anomap::pipeline {

struct RoiColumn {
  std::string name;
  std::string group;
};

/// Grouped bars of mean g-mean per ROI and model with +-std whiskers and
/// dashed separators between ROI groups. Single-split rows get no whiskers.
std::string gmean_bar_chart_svg(const BootstrapSummary& summary,
                                const std::vector<RoiColumn>& rois);

/// Subjects x ROIs grid shaded by abnormal-voxel percentage.
std::string score_heat_table_svg(const RoiScoreTable& table, const std::string& title);

struct ReferenceValue {
  std::string model;
  double mean_percent;
  double std_percent;
};

/// Published whole-brain g-mean on the restricted clinical cohort.
std::vector<ReferenceValue> clinical_reference();

struct DetectabilityRow {
  int sample = 0;
  std::string model;
  double inside_mean = 0.0;
  double outside_mean = 0.0;
  double ratio = 0.0;
};

std::string render_report_md(const BootstrapSummary& summary,
                             const std::vector<DetectabilityRow>& detectability,
                             const std::string& profile, int n_splits);

}  // namespace anomap::pipeline
