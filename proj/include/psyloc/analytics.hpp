#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "psyloc/annotation.hpp"
#include "psyloc/behavior.hpp"

namespace psyloc {

// ---------------------------------------------------------------------------
// IoU histograms
// ---------------------------------------------------------------------------

inline constexpr std::size_t kHistogramBins = 10;

/// Counts over (0,1] split into ten equal half-open-below bins:
/// bin k covers (k/10, (k+1)/10].
using IouHistogram = std::array<std::size_t, kHistogramBins>;

/// Bin index for iou in (0,1]; iou <= 0 has no bin.
std::optional<std::size_t> histogram_bin(double iou);

/// Per-stratum histograms of the records with iou > 0.
StratumGrid<IouHistogram> iou_histograms(std::span<const BehavioralRecord> records);

// ---------------------------------------------------------------------------
// Human accuracy and the sigma table
// ---------------------------------------------------------------------------

struct AccuracyCell {
  std::size_t hits = 0;
  std::size_t samples = 0;
  double accuracy_pct = 0.0;

  [[nodiscard]] bool present() const { return samples > 0; }
};

struct AccuracyTable {
  double iou_threshold = 0.0;
  StratumGrid<AccuracyCell> cells;
};

/// cell = 100 * |{iou > threshold}| / |stratum|. Threshold must be in [0,1).
AccuracyTable accuracy_table(std::span<const BehavioralRecord> records, double iou_threshold);

inline constexpr double kDefaultSigmaMin = 1.0;

struct SigmaCell {
  double sigma = 100.0;
  /// Accuracy the sigma came from; empty when the cell was imputed.
  std::optional<double> accuracy_pct;
  bool imputed = false;
  bool clamped = false;
};

/// Per-stratum Gaussian scale of the human penalty, in pixels.
class SigmaTable {
 public:
  SigmaTable() = default;
  explicit SigmaTable(StratumGrid<SigmaCell> cells) : cells_(std::move(cells)) {}

  /// Every cell set to `sigma`, none imputed.
  static SigmaTable uniform(double sigma);

  [[nodiscard]] double sigma(const StratumKey& key) const { return cells_[key].sigma; }
  [[nodiscard]] const SigmaCell& cell(const StratumKey& key) const { return cells_[key]; }
  [[nodiscard]] const StratumGrid<SigmaCell>& cells() const { return cells_; }
  [[nodiscard]] double min_sigma() const;

  void set(const StratumKey& key, SigmaCell cell) { cells_[key] = cell; }

 private:
  StratumGrid<SigmaCell> cells_;
};

/// sigma = max(sigma_min, 100 - accuracy). Empty cells take the mean sigma of
/// the present cells at the same distance (falling back to all present cells,
/// then to 100) and are flagged imputed.
SigmaTable sigma_table(const AccuracyTable& accuracy, double sigma_min = kDefaultSigmaMin);

// ---------------------------------------------------------------------------
// Response times
// ---------------------------------------------------------------------------

struct RtStats {
  std::size_t n = 0;
  double mean_ms = 0.0;
  /// Sample standard deviation (n-1 denominator); 0 for a single sample.
  double std_ms = 0.0;
};

RtStats rt_stats(std::span<const double> values_ms);

struct ResponseTimeReport {
  StratumGrid<std::optional<RtStats>> true_positive;
  std::optional<RtStats> false_positive;
};

ResponseTimeReport response_time_stats(std::span<const BehavioralRecord> records);

// ---------------------------------------------------------------------------
// Search heatmaps
// ---------------------------------------------------------------------------

struct Heatmap {
  std::size_t cols = 0;
  std::size_t rows = 0;
  double cell_px = 1.0;
  int image_width_px = 0;
  int image_height_px = 0;
  /// Row-major dwell mass in milliseconds.
  std::vector<double> mass;

  [[nodiscard]] double at(std::size_t col, std::size_t row) const { return mass[row * cols + col]; }
  [[nodiscard]] double total() const;
};

struct Dwell {
  CircleSelection disk;
  double duration_ms = 0.0;
};

/// Piecewise-constant reading of a trail: each interval between consecutive
/// events belongs to the earlier event's lens disk. A single-event trail
/// dwells for the whole response time.
std::vector<Dwell> trail_dwells(const BehavioralRecord& record);

/// Spreads each dwell uniformly over its disk (clipped to the image) and
/// integrates it per grid cell, so the total equals the summed dwell.
Heatmap search_heatmap(const BehavioralRecord& record, int image_width_px, int image_height_px, double cell_px);

/// Fraction of a 10x10 image grid whose cells intersect at least one lens disk.
double trail_coverage(const BehavioralRecord& record, int image_width_px, int image_height_px,
                      std::size_t grid = 10);

// ---------------------------------------------------------------------------
// Scan-latency projection
// ---------------------------------------------------------------------------

/// ceil(area / footprint) * per-image response time, footprint from the GSD.
double scan_time_projection(double gsd_mm_per_px, double image_w_px, double image_h_px, double per_image_rt_s,
                            double area_m2);

double image_footprint_m2(double gsd_mm_per_px, double image_w_px, double image_h_px);

// ---------------------------------------------------------------------------
// Plot-ready outputs
// ---------------------------------------------------------------------------

void write_histograms_csv(std::ostream& out, const StratumGrid<IouHistogram>& histograms);
void write_accuracy_csv(std::ostream& out, const AccuracyTable& table);
/// Columns: distance_m, visibility_pct, accuracy_pct, sigma, imputed.
void write_sigma_csv(std::ostream& out, const SigmaTable& table);
SigmaTable read_sigma_csv(std::istream& in);
SigmaTable read_sigma_csv(const std::filesystem::path& path);
void write_rt_csv(std::ostream& out, const ResponseTimeReport& report);
/// Plain (P2) grayscale PGM scaled so the heaviest cell is 255.
void write_pgm(std::ostream& out, const Heatmap& heatmap);

}  // namespace psyloc
