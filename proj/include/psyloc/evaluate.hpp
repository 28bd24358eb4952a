#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "psyloc/annotation.hpp"
#include "psyloc/errors.hpp"
#include "psyloc/geometry.hpp"

namespace psyloc {

/// A detection scored against the single ground truth of its scene.
struct ScoredDetection {
  double confidence = 1.0;
  double iou = 0.0;
};

/// All-point interpolated average precision for single-object scenes.
///
/// A detection counts as a hit when iou > threshold. Detections sharing a
/// confidence form one operating point, so ties never depend on input order.
/// Returns a fraction in [0,1]; 0 when there is no ground truth.
double average_precision(std::span<const ScoredDetection> detections, std::size_t n_ground_truth,
                         double iou_threshold);

/// 0.50, 0.55, ..., 0.95.
std::array<double, 10> coco_iou_thresholds();

struct EvalItem {
  StratumKey stratum{10, 100};
  Box gt_box;
  Box pred_box;
  double confidence = 1.0;
};

struct StratumMetrics {
  std::size_t n_scenes = 0;
  double map50 = 0.0;    ///< percent
  double map5095 = 0.0;  ///< percent, mean over coco_iou_thresholds()
  double map00 = 0.0;    ///< percent, any overlap counts
  double center_err_px = 0.0;
};

struct StratifiedReport {
  StratumGrid<std::optional<StratumMetrics>> strata;
  /// Every scene pooled into one AP computation.
  StratumMetrics pooled;
};

StratumMetrics evaluate_group(std::span<const EvalItem> items);
StratifiedReport evaluate_predictions(std::span<const EvalItem> items);

struct MetricDelta {
  double mean = 0.0;
  double std = 0.0;
};

struct StratumDelta {
  MetricDelta map50, map5095, map00, center_err_px;
};

struct RunComparison {
  std::size_t n_seeds = 0;
  StratumGrid<std::optional<StratumDelta>> strata;
};

class MismatchedStrata : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

/// Paired (same index = same seed) psych - baseline deltas per stratum.
/// Needs at least two runs per side and identical stratum coverage.
RunComparison compare_runs(std::span<const StratifiedReport> baseline, std::span<const StratifiedReport> psych);

// report.csv: distance_m, visibility_pct, map50, map5095, map00, center_err_px, seed, mode
void write_report_csv_header(std::ostream& out);
void write_report_csv_rows(std::ostream& out, const StratifiedReport& report, std::uint64_t seed,
                           const std::string& mode);

/// Keyed by (mode, seed).
using ReportSet = std::map<std::pair<std::string, std::uint64_t>, StratifiedReport>;
ReportSet read_report_csv(std::istream& in);

void write_comparison_csv(std::ostream& out, const RunComparison& cmp);

}  // namespace psyloc
