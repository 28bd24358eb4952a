#include "psyloc/annotation.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>

#include "psyloc/errors.hpp"

namespace psyloc {

namespace {

template <std::size_t N>
std::size_t position_of(const std::array<int, N>& values, int v) {
  const auto it = std::find(values.begin(), values.end(), v);
  return static_cast<std::size_t>(it - values.begin());
}

}  // namespace

bool is_valid_distance(int distance_m) {
  return position_of(kDistancesM, distance_m) < kDistancesM.size();
}

bool is_valid_visibility(int visibility_pct) {
  return position_of(kVisibilitiesPct, visibility_pct) < kVisibilitiesPct.size();
}

StratumKey::StratumKey(int distance_m, int visibility_pct)
    : distance_m_(distance_m), visibility_pct_(visibility_pct) {
  if (!is_valid_distance(distance_m)) {
    throw InvalidArgument("distance_m must be one of 10/30/50/70/90, got " + std::to_string(distance_m));
  }
  if (!is_valid_visibility(visibility_pct)) {
    throw InvalidArgument("visibility_pct must be a multiple of 10 in [10,100], got " +
                          std::to_string(visibility_pct));
  }
}

StratumKey StratumKey::from_index(std::size_t index) {
  if (index >= kStrataCount) throw InvalidArgument("stratum index out of range");
  return {kDistancesM[index / kVisibilitiesPct.size()], kVisibilitiesPct[index % kVisibilitiesPct.size()]};
}

std::size_t StratumKey::distance_index() const { return position_of(kDistancesM, distance_m_); }
std::size_t StratumKey::visibility_index() const { return position_of(kVisibilitiesPct, visibility_pct_); }
std::size_t StratumKey::index() const { return distance_index() * kVisibilitiesPct.size() + visibility_index(); }

std::vector<StratumKey> all_strata() {
  std::vector<StratumKey> out;
  out.reserve(kStrataCount);
  for (std::size_t i = 0; i < kStrataCount; ++i) out.push_back(StratumKey::from_index(i));
  return out;
}

void Annotation::validate() const {
  if (image_id.empty()) throw InvalidArgument("annotation has empty image_id");
  if (actor_id < 1 || actor_id > 100) {
    throw InvalidArgument(image_id + ": actor_id must be in [1,100]");
  }
  (void)stratum();
  if (image_width_px <= 0 || image_height_px <= 0) {
    throw InvalidArgument(image_id + ": image dimensions must be positive");
  }
  if (!gt_box.valid()) throw InvalidArgument(image_id + ": gt_box must have positive extent");
  if (gt_box.x_min < 0.0 || gt_box.y_min < 0.0 || gt_box.x_max() > image_width_px ||
      gt_box.y_max() > image_height_px) {
    throw InvalidArgument(image_id + ": gt_box " + to_string(gt_box) + " lies outside the image");
  }
}

void to_json(nlohmann::json& j, const Box& b) {
  j = nlohmann::json{{"x_min", b.x_min}, {"y_min", b.y_min}, {"width", b.width}, {"height", b.height}};
}

void from_json(const nlohmann::json& j, Box& b) {
  b.x_min = j.at("x_min").get<double>();
  b.y_min = j.at("y_min").get<double>();
  b.width = j.at("width").get<double>();
  b.height = j.at("height").get<double>();
}

void to_json(nlohmann::json& j, const CircleSelection& c) {
  j = nlohmann::json{{"cx", c.cx}, {"cy", c.cy}, {"radius", c.radius}};
}

void from_json(const nlohmann::json& j, CircleSelection& c) {
  c.cx = j.at("cx").get<double>();
  c.cy = j.at("cy").get<double>();
  c.radius = j.at("radius").get<double>();
}

void to_json(nlohmann::json& j, const Annotation& a) {
  j = nlohmann::json{{"image_id", a.image_id},
                     {"actor_id", a.actor_id},
                     {"distance_m", a.distance_m},
                     {"visibility_pct", a.visibility_pct},
                     {"gt_box", a.gt_box},
                     {"image_width_px", a.image_width_px},
                     {"image_height_px", a.image_height_px}};
}

void from_json(const nlohmann::json& j, Annotation& a) {
  a.image_id = j.at("image_id").get<std::string>();
  a.actor_id = j.at("actor_id").get<int>();
  a.distance_m = j.at("distance_m").get<int>();
  a.visibility_pct = j.at("visibility_pct").get<int>();
  a.gt_box = j.at("gt_box").get<Box>();
  a.image_width_px = j.at("image_width_px").get<int>();
  a.image_height_px = j.at("image_height_px").get<int>();
}

std::vector<Annotation> read_annotations(std::istream& in) {
  std::vector<Annotation> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto a = nlohmann::json::parse(line).get<Annotation>();
      a.validate();
      out.push_back(std::move(a));
    } catch (const std::exception& e) {
      throw ParseError("annotations line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<Annotation> read_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open annotation file " + path.string());
  return read_annotations(in);
}

void write_annotations(std::ostream& out, const std::vector<Annotation>& annotations) {
  for (const auto& a : annotations) out << nlohmann::json(a).dump() << '\n';
}

AnnotationIndex index_annotations(const std::vector<Annotation>& annotations) {
  AnnotationIndex index;
  index.reserve(annotations.size());
  for (const auto& a : annotations) {
    if (!index.emplace(a.image_id, a).second) {
      throw InvalidArgument("duplicate annotation for image_id " + a.image_id);
    }
  }
  return index;
}

}  // namespace psyloc
