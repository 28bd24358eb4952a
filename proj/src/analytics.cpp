#include "psyloc/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "psyloc/errors.hpp"

namespace psyloc {

std::optional<std::size_t> histogram_bin(double iou) {
  if (!(iou > 0.0)) return std::nullopt;
  const double scaled = std::ceil(std::min(iou, 1.0) * static_cast<double>(kHistogramBins));
  return static_cast<std::size_t>(std::clamp(scaled, 1.0, static_cast<double>(kHistogramBins))) - 1;
}

StratumGrid<IouHistogram> iou_histograms(std::span<const BehavioralRecord> records) {
  StratumGrid<IouHistogram> out;
  for (const auto& r : records) {
    if (const auto bin = histogram_bin(r.iou)) ++out[r.stratum][*bin];
  }
  return out;
}

AccuracyTable accuracy_table(std::span<const BehavioralRecord> records, double iou_threshold) {
  if (!(iou_threshold >= 0.0 && iou_threshold < 1.0)) {
    throw InvalidArgument("iou_threshold must be in [0,1)");
  }
  AccuracyTable table;
  table.iou_threshold = iou_threshold;
  for (const auto& r : records) {
    auto& cell = table.cells[r.stratum];
    ++cell.samples;
    if (r.iou > iou_threshold) ++cell.hits;
  }
  for (auto& cell : table.cells) {
    if (cell.present()) {
      cell.accuracy_pct = 100.0 * static_cast<double>(cell.hits) / static_cast<double>(cell.samples);
    }
  }
  return table;
}

SigmaTable SigmaTable::uniform(double sigma) {
  SigmaCell cell;
  cell.sigma = sigma;
  cell.accuracy_pct = 100.0 - sigma;
  return SigmaTable(StratumGrid<SigmaCell>(cell));
}

double SigmaTable::min_sigma() const {
  double m = cells_.at_index(0).sigma;
  for (const auto& c : cells_) m = std::min(m, c.sigma);
  return m;
}

SigmaTable sigma_table(const AccuracyTable& accuracy, double sigma_min) {
  if (!(sigma_min > 0.0)) throw InvalidArgument("sigma_min must be positive");
  StratumGrid<SigmaCell> cells;
  std::array<double, kDistancesM.size()> row_sum{};
  std::array<std::size_t, kDistancesM.size()> row_n{};
  double all_sum = 0.0;
  std::size_t all_n = 0;

  for (const auto& key : all_strata()) {
    const auto& a = accuracy.cells[key];
    if (!a.present()) continue;
    SigmaCell c;
    const double raw = 100.0 - a.accuracy_pct;
    c.sigma = std::max(sigma_min, raw);
    c.clamped = raw < sigma_min;
    c.accuracy_pct = a.accuracy_pct;
    cells[key] = c;
    row_sum[key.distance_index()] += c.sigma;
    ++row_n[key.distance_index()];
    all_sum += c.sigma;
    ++all_n;
  }

  for (const auto& key : all_strata()) {
    if (accuracy.cells[key].present()) continue;
    const std::size_t d = key.distance_index();
    SigmaCell c;
    c.imputed = true;
    if (row_n[d] > 0) {
      c.sigma = row_sum[d] / static_cast<double>(row_n[d]);
    } else if (all_n > 0) {
      c.sigma = all_sum / static_cast<double>(all_n);
    } else {
      c.sigma = 100.0;
    }
    c.sigma = std::max(sigma_min, c.sigma);
    cells[key] = c;
  }
  return SigmaTable(cells);
}

RtStats rt_stats(std::span<const double> values_ms) {
  RtStats s;
  s.n = values_ms.size();
  if (s.n == 0) return s;
  s.mean_ms = std::accumulate(values_ms.begin(), values_ms.end(), 0.0) / static_cast<double>(s.n);
  if (s.n > 1) {
    double ss = 0.0;
    for (double v : values_ms) ss += (v - s.mean_ms) * (v - s.mean_ms);
    s.std_ms = std::sqrt(ss / static_cast<double>(s.n - 1));
  }
  return s;
}

ResponseTimeReport response_time_stats(std::span<const BehavioralRecord> records) {
  StratumGrid<std::vector<double>> tp;
  std::vector<double> fp;
  for (const auto& r : records) {
    const auto rt = static_cast<double>(r.response_time_ms);
    if (is_true_positive(r)) {
      tp[r.stratum].push_back(rt);
    } else {
      fp.push_back(rt);
    }
  }
  ResponseTimeReport report;
  for (const auto& key : all_strata()) {
    if (!tp[key].empty()) report.true_positive[key] = rt_stats(tp[key]);
  }
  if (!fp.empty()) report.false_positive = rt_stats(fp);
  return report;
}

double Heatmap::total() const { return std::accumulate(mass.begin(), mass.end(), 0.0); }

std::vector<Dwell> trail_dwells(const BehavioralRecord& record) {
  std::vector<Dwell> out;
  const auto& ev = record.events;
  if (ev.empty()) return out;
  if (ev.size() == 1) {
    out.push_back({ev.front().lens(), static_cast<double>(record.response_time_ms)});
    return out;
  }
  out.reserve(ev.size() - 1);
  for (std::size_t i = 0; i + 1 < ev.size(); ++i) {
    out.push_back({ev[i].lens(), static_cast<double>(ev[i + 1].t_ms - ev[i].t_ms)});
  }
  return out;
}

Heatmap search_heatmap(const BehavioralRecord& record, int image_width_px, int image_height_px, double cell_px) {
  if (image_width_px <= 0 || image_height_px <= 0) throw InvalidArgument("image dimensions must be positive");
  if (!(cell_px > 0.0)) throw InvalidArgument("grid cell size must be positive");
  Heatmap hm;
  hm.cell_px = cell_px;
  hm.image_width_px = image_width_px;
  hm.image_height_px = image_height_px;
  hm.cols = static_cast<std::size_t>(std::ceil(image_width_px / cell_px));
  hm.rows = static_cast<std::size_t>(std::ceil(image_height_px / cell_px));
  hm.mass.assign(hm.cols * hm.rows, 0.0);

  const Box image{0.0, 0.0, static_cast<double>(image_width_px), static_cast<double>(image_height_px)};
  for (const auto& dwell : trail_dwells(record)) {
    if (dwell.duration_ms <= 0.0) continue;
    const double in_image = circle_box_intersection_area(dwell.disk, image);
    if (in_image <= 0.0) continue;
    const auto& d = dwell.disk;
    const auto col_range = [&](double lo, double hi, std::size_t n) {
      const auto a = static_cast<std::size_t>(std::clamp(std::floor(lo / cell_px), 0.0, static_cast<double>(n - 1)));
      const auto b = static_cast<std::size_t>(std::clamp(std::floor(hi / cell_px), 0.0, static_cast<double>(n - 1)));
      return std::pair{a, b};
    };
    const auto [c0, c1] = col_range(d.cx - d.radius, d.cx + d.radius, hm.cols);
    const auto [r0, r1] = col_range(d.cy - d.radius, d.cy + d.radius, hm.rows);
    for (std::size_t row = r0; row <= r1; ++row) {
      for (std::size_t col = c0; col <= c1; ++col) {
        const double x0 = static_cast<double>(col) * cell_px;
        const double y0 = static_cast<double>(row) * cell_px;
        const Box cell{x0, y0, std::min(cell_px, image.width - x0), std::min(cell_px, image.height - y0)};
        const double a = circle_box_intersection_area(d, cell);
        if (a > 0.0) hm.mass[row * hm.cols + col] += dwell.duration_ms * a / in_image;
      }
    }
  }
  return hm;
}

double trail_coverage(const BehavioralRecord& record, int image_width_px, int image_height_px, std::size_t grid) {
  if (image_width_px <= 0 || image_height_px <= 0 || grid == 0) {
    throw InvalidArgument("trail_coverage needs positive image dimensions and grid");
  }
  const double cw = static_cast<double>(image_width_px) / static_cast<double>(grid);
  const double ch = static_cast<double>(image_height_px) / static_cast<double>(grid);
  std::vector<bool> touched(grid * grid, false);
  for (const auto& e : record.events) {
    const auto lens = e.lens();
    for (std::size_t row = 0; row < grid; ++row) {
      for (std::size_t col = 0; col < grid; ++col) {
        if (touched[row * grid + col]) continue;
        const Box cell{static_cast<double>(col) * cw, static_cast<double>(row) * ch, cw, ch};
        if (circle_box_intersection_area(lens, cell) > 0.0) touched[row * grid + col] = true;
      }
    }
  }
  const auto n = static_cast<double>(std::count(touched.begin(), touched.end(), true));
  return n / static_cast<double>(grid * grid);
}

double image_footprint_m2(double gsd_mm_per_px, double image_w_px, double image_h_px) {
  return (image_w_px * gsd_mm_per_px / 1000.0) * (image_h_px * gsd_mm_per_px / 1000.0);
}

double scan_time_projection(double gsd_mm_per_px, double image_w_px, double image_h_px, double per_image_rt_s,
                            double area_m2) {
  if (!(gsd_mm_per_px > 0.0 && image_w_px > 0.0 && image_h_px > 0.0 && per_image_rt_s > 0.0 && area_m2 > 0.0)) {
    throw InvalidArgument("scan_time_projection inputs must all be positive");
  }
  const double ratio = area_m2 / image_footprint_m2(gsd_mm_per_px, image_w_px, image_h_px);
  // An area that is an exact multiple of the footprint must not round up an
  // extra image because of the last ulp of the division.
  const double images = std::ceil(ratio * (1.0 - 4.0 * std::numeric_limits<double>::epsilon()));
  return std::max(1.0, images) * per_image_rt_s;
}

void write_histograms_csv(std::ostream& out, const StratumGrid<IouHistogram>& histograms) {
  out << "distance_m,visibility_pct,bin_lower,bin_upper,count\n";
  for (const auto& key : all_strata()) {
    for (std::size_t b = 0; b < kHistogramBins; ++b) {
      out << key.distance_m() << ',' << key.visibility_pct() << ',' << static_cast<double>(b) / 10.0 << ','
          << static_cast<double>(b + 1) / 10.0 << ',' << histograms[key][b] << '\n';
    }
  }
}

void write_accuracy_csv(std::ostream& out, const AccuracyTable& table) {
  out << "distance_m,visibility_pct,iou_threshold,accuracy_pct,hits,samples,present\n";
  for (const auto& key : all_strata()) {
    const auto& c = table.cells[key];
    out << key.distance_m() << ',' << key.visibility_pct() << ',' << table.iou_threshold << ',';
    if (c.present()) out << c.accuracy_pct;
    out << ',' << c.hits << ',' << c.samples << ',' << (c.present() ? "true" : "false") << '\n';
  }
}

void write_sigma_csv(std::ostream& out, const SigmaTable& table) {
  const auto old_precision = out.precision(17);
  out << "distance_m,visibility_pct,accuracy_pct,sigma,imputed\n";
  for (const auto& key : all_strata()) {
    const auto& c = table.cell(key);
    out << key.distance_m() << ',' << key.visibility_pct() << ',';
    if (c.accuracy_pct) out << *c.accuracy_pct;
    out << ',' << c.sigma << ',' << (c.imputed ? "true" : "false") << '\n';
  }
  out.precision(old_precision);
}

SigmaTable read_sigma_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("sigma.csv is empty");
  StratumGrid<SigmaCell> cells;
  std::array<bool, kStrataCount> seen{};
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    if (fields.size() != 5) throw ParseError("sigma.csv line " + std::to_string(line_no) + ": expected 5 columns");
    try {
      const StratumKey key(std::stoi(fields[0]), std::stoi(fields[1]));
      SigmaCell c;
      if (!fields[2].empty()) c.accuracy_pct = std::stod(fields[2]);
      c.sigma = std::stod(fields[3]);
      c.imputed = fields[4] == "true" || fields[4] == "1";
      if (!(c.sigma > 0.0)) throw InvalidArgument("sigma must be positive");
      cells[key] = c;
      seen[key.index()] = true;
    } catch (const std::exception& e) {
      throw ParseError("sigma.csv line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    throw ParseError("sigma.csv must list all 50 (distance, visibility) cells");
  }
  return SigmaTable(cells);
}

SigmaTable read_sigma_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  return read_sigma_csv(in);
}

void write_rt_csv(std::ostream& out, const ResponseTimeReport& report) {
  out << "group,distance_m,visibility_pct,n,mean_ms,std_ms,present\n";
  for (const auto& key : all_strata()) {
    const auto& s = report.true_positive[key];
    out << "tp," << key.distance_m() << ',' << key.visibility_pct() << ',';
    if (s) {
      out << s->n << ',' << s->mean_ms << ',' << s->std_ms << ",true\n";
    } else {
      out << "0,,,false\n";
    }
  }
  const auto& fp = report.false_positive;
  out << "fp,,,";
  if (fp) {
    out << fp->n << ',' << fp->mean_ms << ',' << fp->std_ms << ",true\n";
  } else {
    out << "0,,,false\n";
  }
}

void write_pgm(std::ostream& out, const Heatmap& heatmap) {
  const double peak = heatmap.mass.empty() ? 0.0 : *std::max_element(heatmap.mass.begin(), heatmap.mass.end());
  out << "P2\n# dwell heatmap, total_ms=" << heatmap.total() << " cell_px=" << heatmap.cell_px << '\n'
      << heatmap.cols << ' ' << heatmap.rows << "\n255\n";
  for (std::size_t row = 0; row < heatmap.rows; ++row) {
    for (std::size_t col = 0; col < heatmap.cols; ++col) {
      const double m = heatmap.at(col, row);
      const long v = peak > 0.0 ? std::lround(255.0 * m / peak) : 0;
      out << v << (col + 1 == heatmap.cols ? '\n' : ' ');
    }
  }
}

}  // namespace psyloc
