#include "anomap/pipeline/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cctype>
#include <map>

namespace anomap::pipeline {

namespace {

std::string num(double v, int decimals = 2) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

const char* model_colour(std::size_t i) {
  static const char* kColours[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52"};
  return kColours[i % 4];
}

std::string label_for(const std::string& model) {
  std::string up = model;
  std::transform(up.begin(), up.end(), up.begin(), [](unsigned char c) { return std::toupper(c); });
  return up;
}

}  // namespace

std::string gmean_bar_chart_svg(const BootstrapSummary& summary,
                                const std::vector<RoiColumn>& rois) {
  std::vector<std::string> models;
  std::map<std::pair<std::string, std::string>, const SummaryRow*> cell;
  bool single = false;
  std::size_t splits = 0;
  for (const auto& r : summary.rows) {
    if (std::find(models.begin(), models.end(), r.model) == models.end()) models.push_back(r.model);
    cell[{r.model, r.roi}] = &r;
    single = single || r.single_split;
    splits = std::max(splits, r.n);
  }
  const double left = 60, top = 50, plot_h = 300, group_w = 18.0 * std::max<std::size_t>(models.size(), 1) + 14;
  const double plot_w = group_w * static_cast<double>(rois.size());
  const double width = left + plot_w + 20, height = top + plot_h + 130;
  auto y_of = [&](double g) { return top + plot_h * (1.0 - g); };

  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width, 0) + "\" height=\"" +
       num(height, 0) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::string title = "g-mean per ROI (mean";
  title += single ? ", single split: no error bars)" : " ± std over " + std::to_string(splits) + " splits)";
  s += "<text x=\"" + num(left, 0) + "\" y=\"20\" font-size=\"14\">" + escape(title) + "</text>\n";

  // axes and gridlines
  for (int t = 0; t <= 5; ++t) {
    const double g = t / 5.0;
    const double y = y_of(g);
    s += "<line x1=\"" + num(left) + "\" y1=\"" + num(y) + "\" x2=\"" + num(left + plot_w) +
         "\" y2=\"" + num(y) + "\" stroke=\"#dddddd\"/>\n";
    s += "<text x=\"" + num(left - 6) + "\" y=\"" + num(y + 4) + "\" text-anchor=\"end\">" +
         num(100.0 * g, 0) + "%</text>\n";
  }
  s += "<line x1=\"" + num(left) + "\" y1=\"" + num(top) + "\" x2=\"" + num(left) + "\" y2=\"" +
       num(top + plot_h) + "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + num(left) + "\" y1=\"" + num(top + plot_h) + "\" x2=\"" +
       num(left + plot_w) + "\" y2=\"" + num(top + plot_h) + "\" stroke=\"black\"/>\n";

  for (std::size_t i = 0; i < rois.size(); ++i) {
    const double x0 = left + group_w * static_cast<double>(i) + 7;
    if (i > 0 && rois[i].group != rois[i - 1].group) {
      const double xs = left + group_w * static_cast<double>(i);
      s += "<line x1=\"" + num(xs) + "\" y1=\"" + num(top) + "\" x2=\"" + num(xs) + "\" y2=\"" +
           num(top + plot_h) + "\" stroke=\"black\" stroke-dasharray=\"5,4\"/>\n";
    }
    for (std::size_t m = 0; m < models.size(); ++m) {
      const auto it = cell.find({models[m], rois[i].name});
      if (it == cell.end()) continue;
      const SummaryRow& r = *it->second;
      const double bx = x0 + 18.0 * static_cast<double>(m);
      const double mean = std::clamp(r.mean, 0.0, 1.0);
      s += "<rect x=\"" + num(bx) + "\" y=\"" + num(y_of(mean)) + "\" width=\"16\" height=\"" +
           num(plot_h * mean) + "\" fill=\"" + model_colour(m) + "\"><title>" +
           escape(label_for(r.model) + " " + r.roi + ": " + num(100 * r.mean, 1) + "%") +
           "</title></rect>\n";
      if (!r.single_split) {
        const double cx = bx + 8;
        const double lo = y_of(std::clamp(r.mean - r.std, 0.0, 1.0));
        const double hi = y_of(std::clamp(r.mean + r.std, 0.0, 1.0));
        s += "<line x1=\"" + num(cx) + "\" y1=\"" + num(lo) + "\" x2=\"" + num(cx) + "\" y2=\"" +
             num(hi) + "\" stroke=\"black\"/>\n";
        s += "<line x1=\"" + num(cx - 4) + "\" y1=\"" + num(hi) + "\" x2=\"" + num(cx + 4) +
             "\" y2=\"" + num(hi) + "\" stroke=\"black\"/>\n";
        s += "<line x1=\"" + num(cx - 4) + "\" y1=\"" + num(lo) + "\" x2=\"" + num(cx + 4) +
             "\" y2=\"" + num(lo) + "\" stroke=\"black\"/>\n";
      }
    }
    const double lx = left + group_w * (static_cast<double>(i) + 0.5);
    const double ly = top + plot_h + 10;
    s += "<text x=\"" + num(lx) + "\" y=\"" + num(ly) + "\" text-anchor=\"end\" transform=\"rotate(-60 " +
         num(lx) + " " + num(ly) + ")\">" + escape(rois[i].name) + "</text>\n";
  }

  for (std::size_t m = 0; m < models.size(); ++m) {
    const double lx = left + 10 + 70.0 * static_cast<double>(m);
    s += "<rect x=\"" + num(lx) + "\" y=\"30\" width=\"12\" height=\"12\" fill=\"" +
         model_colour(m) + "\"/>\n";
    s += "<text x=\"" + num(lx + 16) + "\" y=\"40\">" + escape(label_for(models[m])) + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

std::string score_heat_table_svg(const RoiScoreTable& table, const std::string& title) {
  const double cell_w = 46, cell_h = 16, left = 90, top = 110;
  const double width = left + cell_w * static_cast<double>(table.rois.size()) + 20;
  const double height = top + cell_h * static_cast<double>(table.rows.size()) + 20;
  double peak = 0.0;
  for (const auto& r : table.rows) {
    for (double v : r.percent) peak = std::max(peak, v);
  }
  if (peak <= 0.0) peak = 1.0;

  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width, 0) + "\" height=\"" +
       num(height, 0) + "\" font-family=\"sans-serif\" font-size=\"9\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"10\" y=\"18\" font-size=\"13\">" + escape(title) + "</text>\n";
  for (std::size_t c = 0; c < table.rois.size(); ++c) {
    const double x = left + cell_w * (static_cast<double>(c) + 0.5);
    s += "<text x=\"" + num(x) + "\" y=\"" + num(top - 6) + "\" transform=\"rotate(-55 " + num(x) +
         " " + num(top - 6) + ")\">" + escape(table.rois[c]) + "</text>\n";
  }
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const double y = top + cell_h * static_cast<double>(r);
    if (r > 0 && row.cohort != table.rows[r - 1].cohort) {
      s += "<line x1=\"" + num(left) + "\" y1=\"" + num(y) + "\" x2=\"" +
           num(left + cell_w * static_cast<double>(table.rois.size())) + "\" y2=\"" + num(y) +
           "\" stroke=\"black\" stroke-width=\"1.5\"/>\n";
    }
    s += "<text x=\"" + num(left - 4) + "\" y=\"" + num(y + 12) + "\" text-anchor=\"end\">" +
         escape(row.subject_id) + "</text>\n";
    for (std::size_t c = 0; c < row.percent.size(); ++c) {
      const double f = std::clamp(row.percent[c] / peak, 0.0, 1.0);
      const int g = static_cast<int>(std::lround(255 * (1.0 - f)));
      char colour[16];
      std::snprintf(colour, sizeof colour, "#ff%02x%02x", g, g);
      const double x = left + cell_w * static_cast<double>(c);
      s += "<rect x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" + num(cell_w) +
           "\" height=\"" + num(cell_h) + "\" fill=\"" + colour + "\" stroke=\"#eeeeee\"/>\n";
      s += "<text x=\"" + num(x + cell_w / 2) + "\" y=\"" + num(y + 12) +
           "\" text-anchor=\"middle\">" + num(row.percent[c], 1) + "</text>\n";
    }
  }
  s += "</svg>\n";
  return s;
}

std::vector<ReferenceValue> clinical_reference() {
  return {{"sae", 66.9, 5.8}, {"ae", 65.3, 7.5}};
}

std::string render_report_md(const BootstrapSummary& summary,
                             const std::vector<DetectabilityRow>& detectability,
                             const std::string& profile, int n_splits) {
  std::string md = "# anomap run report\n\n";
  md += "Profile `" + profile + "`, " + std::to_string(n_splits) + " bootstrap split" +
        (n_splits == 1 ? "" : "s") + ". All numbers below come from this run unless marked as reference.\n\n";

  md += "## Whole-brain g-mean\n\n| model | this run (phantom) | reference (clinical, not reproducible) |\n|---|---|---|\n";
  for (const auto& ref : clinical_reference()) {
    std::string run = "n/a";
    for (const auto& r : summary.rows) {
      if (r.model == ref.model && r.roi == kWholeBrain) {
        run = num(100 * r.mean, 1) + "% ± " + num(100 * r.std, 1) + "%" +
              (r.single_split ? " (single split)" : "");
      }
    }
    md += "| " + label_for(ref.model) + " | " + run + " | " + num(ref.mean_percent, 1) + " ± " +
          num(ref.std_percent, 1) + "% |\n";
  }
  md += "\nThe reference column is the published whole-brain result on a restricted-access clinical "
        "diffusion MRI cohort (de novo Parkinson's disease patients versus controls). That data is not "
        "distributed with this repository, so the reference values are context only and are not "
        "reproduced by this run. The phantom numbers measure detection of synthetic lesions.\n\n";

  md += "## g-mean per ROI\n\n| model | ROI | mean | std | n | best sample | best |\n|---|---|---|---|---|---|---|\n";
  for (const auto& r : summary.rows) {
    md += "| " + label_for(r.model) + " | " + r.roi + " | " + num(100 * r.mean, 1) + "% | " +
          (r.single_split ? std::string("n/a (single split)") : num(100 * r.std, 1) + "%") + " | " +
          std::to_string(r.n) + " | " + std::to_string(r.best_sample) + " | " +
          num(100 * r.best_gmean, 1) + "% |\n";
  }
  if (!detectability.empty()) {
    md += "\n## Lesion detectability (test patients)\n\n| sample | model | mean error inside lesions | "
          "mean error outside | ratio |\n|---|---|---|---|---|\n";
    for (const auto& d : detectability) {
      md += "| " + std::to_string(d.sample) + " | " + label_for(d.model) + " | " +
            num(d.inside_mean, 5) + " | " + num(d.outside_mean, 5) + " | " + num(d.ratio, 2) + " |\n";
    }
  }
  md += "\nFigures: `figures/gmean_bars.svg` (per-ROI g-mean, dashed lines separate the ROI groups) "
        "and `figures/heat_<model>.svg` (abnormal-voxel percentage per subject, first split).\n";
  return md;
}

}  // namespace anomap::pipeline
