#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "psyloc/geometry.hpp"

namespace psyloc {

inline constexpr std::array<int, 5> kDistancesM{10, 30, 50, 70, 90};
inline constexpr std::array<int, 10> kVisibilitiesPct{10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
inline constexpr std::size_t kStrataCount = kDistancesM.size() * kVisibilitiesPct.size();

bool is_valid_distance(int distance_m);
bool is_valid_visibility(int visibility_pct);

/// One (distance, visibility) cell.
class StratumKey {
 public:
  /// Throws InvalidArgument for values outside the enumerations.
  StratumKey(int distance_m, int visibility_pct);

  static StratumKey from_index(std::size_t index);

  [[nodiscard]] int distance_m() const { return distance_m_; }
  [[nodiscard]] int visibility_pct() const { return visibility_pct_; }
  [[nodiscard]] std::size_t distance_index() const;
  [[nodiscard]] std::size_t visibility_index() const;
  /// Row-major position: distance_index * 10 + visibility_index.
  [[nodiscard]] std::size_t index() const;

  friend bool operator==(const StratumKey&, const StratumKey&) = default;
  friend auto operator<=>(const StratumKey&, const StratumKey&) = default;

 private:
  int distance_m_;
  int visibility_pct_;
};

std::vector<StratumKey> all_strata();

/// Fixed-size table holding one value per stratum.
template <class T>
class StratumGrid {
 public:
  StratumGrid() = default;
  explicit StratumGrid(const T& fill) { cells_.fill(fill); }

  T& operator[](const StratumKey& key) { return cells_[key.index()]; }
  const T& operator[](const StratumKey& key) const { return cells_[key.index()]; }
  T& at_index(std::size_t i) { return cells_.at(i); }
  const T& at_index(std::size_t i) const { return cells_.at(i); }

  auto begin() { return cells_.begin(); }
  auto end() { return cells_.end(); }
  auto begin() const { return cells_.begin(); }
  auto end() const { return cells_.end(); }
  static constexpr std::size_t size() { return kStrataCount; }

  friend bool operator==(const StratumGrid&, const StratumGrid&) = default;

 private:
  std::array<T, kStrataCount> cells_{};
};

struct Annotation {
  std::string image_id;
  int actor_id = 1;
  int distance_m = 10;
  int visibility_pct = 100;
  Box gt_box;
  int image_width_px = 1;
  int image_height_px = 1;

  [[nodiscard]] StratumKey stratum() const { return {distance_m, visibility_pct}; }
  /// Throws InvalidArgument describing the first violated invariant.
  void validate() const;

  friend bool operator==(const Annotation&, const Annotation&) = default;
};

using AnnotationIndex = std::unordered_map<std::string, Annotation>;

void to_json(nlohmann::json& j, const Box& b);
void from_json(const nlohmann::json& j, Box& b);
void to_json(nlohmann::json& j, const CircleSelection& c);
void from_json(const nlohmann::json& j, CircleSelection& c);
void to_json(nlohmann::json& j, const Annotation& a);
void from_json(const nlohmann::json& j, Annotation& a);

/// Reads JSON-lines annotations; blank lines are skipped. Throws ParseError
/// naming the offending line.
std::vector<Annotation> read_annotations(std::istream& in);
std::vector<Annotation> read_annotations(const std::filesystem::path& path);
void write_annotations(std::ostream& out, const std::vector<Annotation>& annotations);

/// Throws InvalidArgument on duplicate image ids.
AnnotationIndex index_annotations(const std::vector<Annotation>& annotations);

}  // namespace psyloc
