#pragma once

// Slow, independent reference computations used by the unit and acceptance
// tests. None of them call into the code they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <utility>
#include <vector>

#include "psyloc/analytics.hpp"
#include "psyloc/behavior.hpp"
#include "psyloc/evaluate.hpp"
#include "psyloc/geometry.hpp"

namespace psyloc::oracle {

/// Circle/box IoU with the intersection counted on an n x n grid of sample
/// points over the box (midpoint rule).
inline double circle_box_iou_sampled(const CircleSelection& c, const Box& b, int n = 1000) {
  const double dx = b.width / n;
  const double dy = b.height / n;
  std::int64_t inside = 0;
  for (int i = 0; i < n; ++i) {
    const double y = b.y_min + (i + 0.5) * dy - c.cy;
    const double y2 = y * y;
    for (int j = 0; j < n; ++j) {
      const double x = b.x_min + (j + 0.5) * dx - c.cx;
      if (x * x + y2 <= c.radius * c.radius) ++inside;
    }
  }
  const double inter = static_cast<double>(inside) * dx * dy;
  const double circle = M_PI * c.radius * c.radius;
  return inter / (circle + b.width * b.height - inter);
}

/// Exact rational p/q with small integers.
struct Frac {
  std::int64_t p = 0;
  std::int64_t q = 1;
  friend bool operator<(const Frac& a, const Frac& b) { return a.p * b.q < b.p * a.q; }
};

/// Average precision for one detection per single-object scene, computed
/// per recall level: with n ground truths recall moves in steps of 1/n, and
/// the interpolated precision on ((j-1)/n, j/n] is the best precision among
/// operating points whose recall reaches j/n. Summed in exact integers.
///
/// `groups` lists the detections from highest to lowest confidence as
/// (group size, hits in group); detections in a group share a confidence.
inline double average_precision_by_recall_level(const std::vector<std::pair<int, int>>& groups, int n_gt) {
  if (n_gt == 0) return 0.0;
  std::vector<std::pair<int, Frac>> points;  // (true positives so far, precision)
  int tp = 0;
  int seen = 0;
  for (const auto& [size, hits] : groups) {
    tp += hits;
    seen += size;
    points.push_back({tp, Frac{tp, seen}});
  }
  // Sum of best precisions over levels, as a fraction over lcm(1..n_det).
  std::int64_t den = 1;
  for (int k = 1; k <= std::max(seen, 1); ++k) den = std::lcm(den, static_cast<std::int64_t>(k));
  std::int64_t num = 0;
  for (int j = 1; j <= n_gt; ++j) {
    Frac best{0, 1};
    for (const auto& [t, prec] : points) {
      if (t >= j && best < prec) best = prec;
    }
    num += best.p * (den / best.q);
  }
  return static_cast<double>(num) / static_cast<double>(den) / static_cast<double>(n_gt);
}

/// Brute-force accuracy per (distance, visibility) using std::map counters.
inline std::map<std::pair<int, int>, std::pair<int, int>> count_hits(const std::vector<BehavioralRecord>& records,
                                                                      double threshold) {
  std::map<std::pair<int, int>, std::pair<int, int>> out;  // key -> (hits, total)
  for (const auto& r : records) {
    auto& cell = out[{r.stratum.distance_m(), r.stratum.visibility_pct()}];
    if (r.iou > threshold) ++cell.first;
    ++cell.second;
  }
  return out;
}

/// Per-pixel dwell map: each interval's duration is spread over the image
/// pixels in proportion to their sampled overlap with the lens disk.
inline std::vector<double> pixel_heatmap(const std::vector<std::pair<CircleSelection, double>>& dwells, int width,
                                         int height, int sub = 8) {
  std::vector<double> out(static_cast<std::size_t>(width) * height, 0.0);
  std::vector<double> frac(out.size());
  for (const auto& [disk, ms] : dwells) {
    double total = 0.0;
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        int in = 0;
        for (int sy = 0; sy < sub; ++sy) {
          for (int sx = 0; sx < sub; ++sx) {
            const double px = x + (sx + 0.5) / sub - disk.cx;
            const double py = y + (sy + 0.5) / sub - disk.cy;
            if (px * px + py * py <= disk.radius * disk.radius) ++in;
          }
        }
        frac[static_cast<std::size_t>(y) * width + x] = in;
        total += in;
      }
    }
    if (total == 0) continue;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += ms * frac[i] / total;
  }
  return out;
}

}  // namespace psyloc::oracle
