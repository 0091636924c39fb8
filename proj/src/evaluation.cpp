#include "anomap/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <sstream>

namespace anomap {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    rows.push_back(split_csv_line(line));
  }
  require(!rows.empty(), ErrorKind::kFormat, "empty CSV");
  return rows;
}

double parse_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  require(!s.empty() && end == s.c_str() + s.size(), ErrorKind::kFormat,
          "not a number in CSV: '" + s + "'");
  return v;
}

int parse_int(const std::string& s) {
  const double v = parse_double(s);
  require(v == std::floor(v), ErrorKind::kFormat, "not an integer in CSV: '" + s + "'");
  return static_cast<int>(v);
}

void check_cell(const std::string& s) {
  require(s.find_first_of(",\n\r") == std::string::npos, ErrorKind::kInvalidArgument,
          "CSV cell may not contain separators: '" + s + "'");
}

}  // namespace

std::vector<Roi> roi_list(std::span<const LabelAtlas> atlases) {
  std::vector<Roi> rois{{kWholeBrain, "whole", -1, 0}};
  for (std::size_t a = 0; a < atlases.size(); ++a) {
    for (const auto& [label, name] : atlases[a].names) {
      rois.push_back({name, atlases[a].id, static_cast<int>(a), label});
    }
  }
  return rois;
}

double roi_fraction(const BinaryAnomalyMap& map, const LabelAtlas& atlas, std::int32_t label) {
  require(atlas.dims == map.dims(), ErrorKind::kShape,
          "atlas '" + atlas.id + "' dims do not match map of '" + map.subject_id + "'");
  std::size_t covered = 0, abnormal = 0;
  const auto cov = map.coverage.values();
  const auto ab = map.abnormal.values();
  for (std::size_t k = 0; k < atlas.labels.size(); ++k) {
    if (atlas.labels[k] != label || !cov[k]) continue;
    ++covered;
    abnormal += ab[k] ? 1 : 0;
  }
  require(covered > 0, ErrorKind::kInvalidArgument,
          "ROI " + std::to_string(label) + " of atlas '" + atlas.id +
              "' lies entirely outside the coverage of '" + map.subject_id + "'");
  return 100.0 * static_cast<double>(abnormal) / static_cast<double>(covered);
}

double whole_brain_fraction(const BinaryAnomalyMap& map) {
  const std::size_t covered = map.coverage.count();
  require(covered > 0, ErrorKind::kInvalidArgument,
          "map of '" + map.subject_id + "' covers no voxel");
  return 100.0 * static_cast<double>(map.abnormal.count()) / static_cast<double>(covered);
}

std::vector<double> roi_scores(const BinaryAnomalyMap& map, std::span<const LabelAtlas> atlases,
                               std::span<const Roi> rois) {
  std::vector<double> out;
  out.reserve(rois.size());
  for (const auto& r : rois) {
    out.push_back(r.atlas < 0 ? whole_brain_fraction(map)
                              : roi_fraction(map, atlases[r.atlas], r.label));
  }
  return out;
}

std::vector<double> RoiScoreTable::column(std::size_t roi) const {
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.percent.at(roi));
  return out;
}

std::vector<Cohort> RoiScoreTable::cohorts() const {
  std::vector<Cohort> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.cohort);
  return out;
}

std::string RoiScoreTable::to_csv() const {
  std::string out = "subject_id,cohort";
  for (const auto& r : rois) {
    check_cell(r);
    out += "," + r;
  }
  out += "\n";
  for (const auto& row : rows) {
    require(row.percent.size() == rois.size(), ErrorKind::kShape,
            "score row of '" + row.subject_id + "' has the wrong width");
    check_cell(row.subject_id);
    out += row.subject_id + "," + to_string(row.cohort);
    for (double v : row.percent) out += "," + fmt(v);
    out += "\n";
  }
  return out;
}

RoiScoreTable RoiScoreTable::from_csv(const std::string& text) {
  const auto cells = parse_csv(text);
  const auto& head = cells.front();
  require(head.size() >= 2 && head[0] == "subject_id" && head[1] == "cohort",
          ErrorKind::kFormat, "score table header must start with subject_id,cohort");
  RoiScoreTable t;
  t.rois.assign(head.begin() + 2, head.end());
  for (std::size_t i = 1; i < cells.size(); ++i) {
    require(cells[i].size() == head.size(), ErrorKind::kFormat,
            "score table row " + std::to_string(i) + " has the wrong width");
    RoiScoreRow row;
    row.subject_id = cells[i][0];
    row.cohort = parse_cohort(cells[i][1]);
    for (std::size_t c = 2; c < cells[i].size(); ++c) row.percent.push_back(parse_double(cells[i][c]));
    t.rows.push_back(std::move(row));
  }
  return t;
}

double gmean(double sensitivity, double specificity) {
  require(sensitivity >= 0.0 && sensitivity <= 1.0 && specificity >= 0.0 && specificity <= 1.0,
          ErrorKind::kInvalidArgument, "sensitivity and specificity must lie in [0, 1]");
  return std::sqrt(sensitivity * specificity);
}

RocResult roc_select(std::span<const double> scores, std::span<const Cohort> labels) {
  require(scores.size() == labels.size(), ErrorKind::kShape,
          "scores and labels differ in length");
  RocResult r;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    require(std::isfinite(scores[i]), ErrorKind::kNumeric, "non-finite ROC score");
    (labels[i] == Cohort::kPatient ? r.positives : r.negatives) += 1;
  }
  require(r.positives > 0 && r.negatives > 0, ErrorKind::kInvalidArgument,
          "ROC needs both patients and controls");

  std::vector<double> u(scores.begin(), scores.end());
  std::sort(u.begin(), u.end());
  u.erase(std::unique(u.begin(), u.end()), u.end());
  std::vector<double> candidates{u.front() - 1.0};
  for (std::size_t i = 0; i + 1 < u.size(); ++i) candidates.push_back(u[i] + (u[i + 1] - u[i]) / 2);
  candidates.push_back(u.back() + 1.0);

  long best = -1;
  for (const double t : candidates) {
    RocPoint p;
    p.threshold = t;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const bool flagged = scores[i] > t;
      if (labels[i] == Cohort::kPatient) {
        (flagged ? p.tp : p.fn) += 1;
      } else {
        (flagged ? p.fp : p.tn) += 1;
      }
    }
    p.sensitivity = static_cast<double>(p.tp) / r.positives;
    p.specificity = static_cast<double>(p.tn) / r.negatives;
    p.gmean = gmean(p.sensitivity, p.specificity);
    // tp * tn orders g-mean exactly for fixed class sizes.
    const long key = static_cast<long>(p.tp) * p.tn;
    if (key > best) {
      best = key;
      r.chosen = r.sweep.size();
    }
    r.sweep.push_back(p);
  }
  return r;
}

nlohmann::json to_json(const RocResult& roc) {
  nlohmann::json sweep = nlohmann::json::array();
  for (const auto& p : roc.sweep) {
    sweep.push_back({{"threshold", p.threshold},
                     {"tp", p.tp},
                     {"fn", p.fn},
                     {"tn", p.tn},
                     {"fp", p.fp},
                     {"sensitivity", p.sensitivity},
                     {"specificity", p.specificity},
                     {"gmean", p.gmean}});
  }
  const RocPoint& b = roc.best();
  return {{"positive_class", "patient"},
          {"positives", roc.positives},
          {"negatives", roc.negatives},
          {"pathological_threshold", b.threshold},
          {"gmean", b.gmean},
          {"sensitivity", b.sensitivity},
          {"specificity", b.specificity},
          {"sweep", sweep}};
}

std::vector<RoiRoc> evaluate_split(const RoiScoreTable& table) {
  const auto labels = table.cohorts();
  std::vector<RoiRoc> out;
  for (std::size_t c = 0; c < table.rois.size(); ++c) {
    const auto scores = table.column(c);
    out.push_back({table.rois[c], roc_select(scores, labels)});
  }
  return out;
}

std::string BootstrapSummary::to_csv() const {
  std::string out = "model,roi,n,mean_gmean,std_gmean,single_split,best_sample,best_gmean\n";
  for (const auto& r : rows) {
    check_cell(r.model);
    check_cell(r.roi);
    out += r.model + "," + r.roi + "," + std::to_string(r.n) + "," + fmt(r.mean) + "," +
           fmt(r.std) + "," + (r.single_split ? "1" : "0") + "," +
           std::to_string(r.best_sample) + "," + fmt(r.best_gmean) + "\n";
  }
  return out;
}

BootstrapSummary BootstrapSummary::from_csv(const std::string& text) {
  const auto cells = parse_csv(text);
  require(cells.front().size() == 8 && cells.front()[0] == "model", ErrorKind::kFormat,
          "unexpected bootstrap summary header");
  BootstrapSummary s;
  for (std::size_t i = 1; i < cells.size(); ++i) {
    const auto& c = cells[i];
    require(c.size() == 8, ErrorKind::kFormat,
            "bootstrap summary row " + std::to_string(i) + " has the wrong width");
    s.rows.push_back({c[0], c[1], static_cast<std::size_t>(parse_int(c[2])), parse_double(c[3]),
                      parse_double(c[4]), c[5] == "1", parse_int(c[6]), parse_double(c[7])});
  }
  return s;
}

BootstrapSummary aggregate_bootstrap(std::span<const SplitScore> scores) {
  require(!scores.empty(), ErrorKind::kInvalidArgument, "no completed split to aggregate");
  std::vector<std::pair<std::string, std::string>> order;
  std::map<std::pair<std::string, std::string>, std::vector<const SplitScore*>> groups;
  for (const auto& s : scores) {
    auto key = std::make_pair(s.model, s.roi);
    auto& g = groups[key];
    if (g.empty()) order.push_back(key);
    g.push_back(&s);
  }
  BootstrapSummary out;
  for (const auto& key : order) {
    const auto& g = groups[key];
    SummaryRow row;
    row.model = key.first;
    row.roi = key.second;
    row.n = g.size();
    double sum = 0.0;
    for (const auto* s : g) sum += s->gmean;
    row.mean = sum / static_cast<double>(row.n);
    double ss = 0.0;
    for (const auto* s : g) ss += (s->gmean - row.mean) * (s->gmean - row.mean);
    row.single_split = row.n == 1;
    row.std = row.single_split ? 0.0 : std::sqrt(ss / static_cast<double>(row.n - 1));
    const SplitScore* best = g.front();
    for (const auto* s : g) {
      if (s->gmean > best->gmean ||
          (s->gmean == best->gmean && s->sample_index < best->sample_index)) {
        best = s;
      }
    }
    row.best_sample = best->sample_index;
    row.best_gmean = best->gmean;
    out.rows.push_back(row);
  }
  return out;
}

}  // namespace anomap
