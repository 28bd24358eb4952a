#include "psyloc/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "psyloc/errors.hpp"

namespace psyloc {

double average_precision(std::span<const ScoredDetection> detections, std::size_t n_ground_truth,
                         double iou_threshold) {
  if (n_ground_truth == 0) return 0.0;
  std::vector<ScoredDetection> sorted(detections.begin(), detections.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const ScoredDetection& a, const ScoredDetection& b) { return a.confidence > b.confidence; });

  // Operating points, one per distinct confidence.
  std::vector<double> recall;
  std::vector<double> precision;
  std::size_t tp = 0;
  std::size_t seen = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j].confidence == sorted[i].confidence) {
      if (sorted[j].iou > iou_threshold) ++tp;
      ++j;
    }
    seen = j;
    recall.push_back(static_cast<double>(tp) / static_cast<double>(n_ground_truth));
    precision.push_back(static_cast<double>(tp) / static_cast<double>(seen));
    i = j;
  }

  // Precision envelope: best precision at any recall >= r.
  for (std::size_t k = precision.size(); k-- > 1;) {
    precision[k - 1] = std::max(precision[k - 1], precision[k]);
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t k = 0; k < recall.size(); ++k) {
    ap += (recall[k] - prev_recall) * precision[k];
    prev_recall = recall[k];
  }
  return ap;
}

std::array<double, 10> coco_iou_thresholds() {
  std::array<double, 10> t{};
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.50 + 0.05 * static_cast<double>(i);
  return t;
}

StratumMetrics evaluate_group(std::span<const EvalItem> items) {
  StratumMetrics m;
  m.n_scenes = items.size();
  if (items.empty()) return m;
  std::vector<ScoredDetection> dets;
  dets.reserve(items.size());
  double err = 0.0;
  for (const auto& it : items) {
    dets.push_back({it.confidence, box_iou(it.pred_box, it.gt_box)});
    const Point p = it.pred_box.center();
    const Point g = it.gt_box.center();
    err += std::hypot(p.x - g.x, p.y - g.y);
  }
  m.center_err_px = err / static_cast<double>(items.size());
  m.map00 = 100.0 * average_precision(dets, items.size(), 0.0);
  m.map50 = 100.0 * average_precision(dets, items.size(), 0.5);
  double sum = 0.0;
  for (double t : coco_iou_thresholds()) sum += average_precision(dets, items.size(), t);
  m.map5095 = 100.0 * sum / static_cast<double>(coco_iou_thresholds().size());
  return m;
}

StratifiedReport evaluate_predictions(std::span<const EvalItem> items) {
  StratumGrid<std::vector<EvalItem>> groups;
  for (const auto& it : items) groups[it.stratum].push_back(it);
  StratifiedReport r;
  for (const auto& key : all_strata()) {
    if (!groups[key].empty()) r.strata[key] = evaluate_group(groups[key]);
  }
  r.pooled = evaluate_group(items);
  return r;
}

namespace {

MetricDelta delta_stats(const std::vector<double>& d) {
  MetricDelta out;
  out.mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
  if (d.size() > 1) {
    double ss = 0.0;
    for (double v : d) ss += (v - out.mean) * (v - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(d.size() - 1));
  }
  return out;
}

}  // namespace

RunComparison compare_runs(std::span<const StratifiedReport> baseline, std::span<const StratifiedReport> psych) {
  if (baseline.size() != psych.size()) throw MismatchedStrata("baseline and psych have different seed counts");
  if (baseline.size() < 2) throw InvalidArgument("compare_runs needs at least two seeds per mode");
  RunComparison cmp;
  cmp.n_seeds = baseline.size();
  for (const auto& key : all_strata()) {
    const bool present = baseline.front().strata[key].has_value();
    for (std::size_t s = 0; s < baseline.size(); ++s) {
      if (baseline[s].strata[key].has_value() != present || psych[s].strata[key].has_value() != present) {
        throw MismatchedStrata("stratum (" + std::to_string(key.distance_m()) + " m, " +
                               std::to_string(key.visibility_pct()) + "%) is not covered by every run");
      }
    }
    if (!present) continue;
    std::vector<double> d50, d5095, d00, derr;
    for (std::size_t s = 0; s < baseline.size(); ++s) {
      const auto& b = *baseline[s].strata[key];
      const auto& p = *psych[s].strata[key];
      d50.push_back(p.map50 - b.map50);
      d5095.push_back(p.map5095 - b.map5095);
      d00.push_back(p.map00 - b.map00);
      derr.push_back(p.center_err_px - b.center_err_px);
    }
    cmp.strata[key] = StratumDelta{delta_stats(d50), delta_stats(d5095), delta_stats(d00), delta_stats(derr)};
  }
  return cmp;
}

void write_report_csv_header(std::ostream& out) {
  out << "distance_m,visibility_pct,map50,map5095,map00,center_err_px,seed,mode\n";
}

void write_report_csv_rows(std::ostream& out, const StratifiedReport& report, std::uint64_t seed,
                           const std::string& mode) {
  const auto old = out.precision(17);
  for (const auto& key : all_strata()) {
    const auto& m = report.strata[key];
    if (!m) continue;
    out << key.distance_m() << ',' << key.visibility_pct() << ',' << m->map50 << ',' << m->map5095 << ','
        << m->map00 << ',' << m->center_err_px << ',' << seed << ',' << mode << '\n';
  }
  out.precision(old);
}

ReportSet read_report_csv(std::istream& in) {
  ReportSet out;
  std::string line;
  if (!std::getline(in, line)) throw ParseError("report csv is empty");
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 8) throw ParseError("report csv line " + std::to_string(line_no) + ": expected 8 columns");
    try {
      const StratumKey key(std::stoi(f[0]), std::stoi(f[1]));
      StratumMetrics m;
      m.map50 = std::stod(f[2]);
      m.map5095 = std::stod(f[3]);
      m.map00 = std::stod(f[4]);
      m.center_err_px = std::stod(f[5]);
      out[{f[7], std::stoull(f[6])}].strata[key] = m;
    } catch (const std::exception& e) {
      throw ParseError("report csv line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_comparison_csv(std::ostream& out, const RunComparison& cmp) {
  out << "distance_m,visibility_pct,n_seeds,map50_delta_mean,map50_delta_std,map5095_delta_mean,"
         "map5095_delta_std,map00_delta_mean,map00_delta_std,center_err_delta_mean,center_err_delta_std\n";
  for (const auto& key : all_strata()) {
    const auto& d = cmp.strata[key];
    if (!d) continue;
    out << key.distance_m() << ',' << key.visibility_pct() << ',' << cmp.n_seeds << ',' << d->map50.mean << ','
        << d->map50.std << ',' << d->map5095.mean << ',' << d->map5095.std << ',' << d->map00.mean << ','
        << d->map00.std << ',' << d->center_err_px.mean << ',' << d->center_err_px.std << '\n';
  }
}

}  // namespace psyloc
