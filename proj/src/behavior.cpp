#include "psyloc/behavior.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>

#include "psyloc/errors.hpp"

namespace psyloc {

namespace {

// Raised for trail ordering problems so ingest can report them under their own kind.
class NonMonotonicTrail : public ParseError {
 public:
  using ParseError::ParseError;
};

bool is_blank(const std::string& line) { return line.find_first_not_of(" \t\r") == std::string::npos; }

}  // namespace

nlohmann::json trail_event_to_json(const TrailEvent& e) {
  return {{"t_ms", e.t_ms}, {"x", e.x}, {"y", e.y}, {"zoom_level", e.zoom_level},
          {"lens_radius_px", e.lens_radius_px}};
}

TrailEvent trail_event_from_json(const nlohmann::json& j) {
  TrailEvent e;
  e.t_ms = j.at("t_ms").get<std::int64_t>();
  e.x = j.at("x").get<double>();
  e.y = j.at("y").get<double>();
  e.zoom_level = j.at("zoom_level").get<int>();
  e.lens_radius_px = j.at("lens_radius_px").get<double>();
  return e;
}

std::string to_string(IngestIssueKind kind) {
  switch (kind) {
    case IngestIssueKind::MalformedLine: return "MalformedLine";
    case IngestIssueKind::MissingAnnotation: return "MissingAnnotation";
    case IngestIssueKind::NonMonotonicTrail: return "NonMonotonicTrail";
  }
  return "Unknown";
}

nlohmann::json record_to_json(const BehavioralRecord& r, RecordFormat format) {
  nlohmann::json events = nlohmann::json::array();
  for (const auto& e : r.events) events.push_back(trail_event_to_json(e));
  nlohmann::json j{{"session_id", r.session_id},
                   {"worker_id", r.worker_id},
                   {"image_id", r.image_id},
                   {"is_control", r.is_control},
                   {"events", std::move(events)},
                   {"final_selection", r.final_selection},
                   {"response_time_ms", r.response_time_ms}};
  if (format == RecordFormat::enriched) {
    j["iou"] = r.iou;
    j["distance_m"] = r.stratum.distance_m();
    j["visibility_pct"] = r.stratum.visibility_pct();
  }
  return j;
}

BehavioralRecord record_from_json(const nlohmann::json& j, RecordFormat format) {
  BehavioralRecord r;
  r.session_id = j.at("session_id").get<std::string>();
  r.worker_id = j.at("worker_id").get<std::string>();
  r.image_id = j.at("image_id").get<std::string>();
  r.is_control = j.at("is_control").get<bool>();
  for (const auto& e : j.at("events")) r.events.push_back(trail_event_from_json(e));
  r.final_selection = j.at("final_selection").get<CircleSelection>();
  r.response_time_ms = j.at("response_time_ms").get<std::int64_t>();
  if (format == RecordFormat::enriched) {
    r.iou = j.at("iou").get<double>();
    r.stratum = StratumKey(j.at("distance_m").get<int>(), j.at("visibility_pct").get<int>());
  }
  return r;
}

void finalize_record(BehavioralRecord& r, const Annotation& annotation, std::vector<std::string>* warnings) {
  if (r.events.empty()) throw ParseError("record has no trail events");
  if (r.response_time_ms <= 0) throw ParseError("response_time_ms must be positive");
  if (!r.final_selection.valid()) throw ParseError("final_selection radius must be positive");

  for (std::size_t i = 0; i < r.events.size(); ++i) {
    const auto& e = r.events[i];
    if (e.t_ms < 0) throw ParseError("event " + std::to_string(i) + " has negative t_ms");
    if (e.zoom_level < 1) throw ParseError("event " + std::to_string(i) + " has zoom_level < 1");
    if (!(e.lens_radius_px > 0.0)) throw ParseError("event " + std::to_string(i) + " has non-positive lens radius");
    if (i > 0 && e.t_ms < r.events[i - 1].t_ms) {
      throw NonMonotonicTrail("t_ms decreases at event " + std::to_string(i));
    }
  }
  if (r.events.back().lens() != r.final_selection) {
    throw ParseError("final_selection does not match the last trail event's lens circle");
  }
  if (r.response_time_ms < r.events.back().t_ms) {
    throw ParseError("response_time_ms precedes the last trail event");
  }

  const double w = annotation.image_width_px;
  const double h = annotation.image_height_px;
  std::size_t clamped = 0;
  for (auto& e : r.events) {
    const double cx = std::clamp(e.x, 0.0, w);
    const double cy = std::clamp(e.y, 0.0, h);
    if (cx != e.x || cy != e.y) {
      ++clamped;
      e.x = cx;
      e.y = cy;
    }
  }
  if (clamped > 0) {
    r.final_selection = r.events.back().lens();
    if (warnings != nullptr) {
      warnings->push_back(r.session_id + "/" + r.image_id + ": clamped " + std::to_string(clamped) +
                          " lens position(s) into the image");
    }
  }

  r.stratum = annotation.stratum();
  r.iou = circle_box_iou(r.final_selection, annotation.gt_box);
}

IngestResult ingest(std::istream& behavior, const AnnotationIndex& annotations) {
  IngestResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(behavior, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    BehavioralRecord r;
    try {
      r = record_from_json(nlohmann::json::parse(line));
    } catch (const std::exception& e) {
      result.issues.push_back({IngestIssueKind::MalformedLine, line_no, "", "", e.what()});
      continue;
    }
    const auto it = annotations.find(r.image_id);
    if (it == annotations.end()) {
      result.issues.push_back({IngestIssueKind::MissingAnnotation, line_no, r.session_id, r.image_id,
                               "no annotation for image_id " + r.image_id});
      continue;
    }
    try {
      finalize_record(r, it->second, &result.warnings);
    } catch (const NonMonotonicTrail& e) {
      result.issues.push_back({IngestIssueKind::NonMonotonicTrail, line_no, r.session_id, r.image_id, e.what()});
      continue;
    } catch (const std::exception& e) {
      result.issues.push_back({IngestIssueKind::MalformedLine, line_no, r.session_id, r.image_id, e.what()});
      continue;
    }
    result.records.push_back(std::move(r));
  }
  result.summary = summarize(result.records);
  return result;
}

IngestResult ingest(const std::filesystem::path& behavior_file, const std::filesystem::path& annotation_file) {
  const auto index = index_annotations(read_annotations(annotation_file));
  std::ifstream in(behavior_file);
  if (!in) throw ParseError("cannot open behavioral file " + behavior_file.string());
  return ingest(in, index);
}

DatasetSummary summarize(std::span<const BehavioralRecord> records) {
  DatasetSummary s;
  std::set<std::string> workers;
  for (const auto& r : records) {
    ++s.record_count;
    ++s.per_stratum[r.stratum];
    (r.is_control ? s.control_count : s.positive_count) += 1;
    workers.insert(r.worker_id);
  }
  s.worker_count = workers.size();
  return s;
}

nlohmann::json summary_to_json(const DatasetSummary& summary) {
  nlohmann::json strata = nlohmann::json::array();
  for (const auto& key : all_strata()) {
    strata.push_back({{"distance_m", key.distance_m()},
                      {"visibility_pct", key.visibility_pct()},
                      {"count", summary.per_stratum[key]}});
  }
  return {{"record_count", summary.record_count},
          {"worker_count", summary.worker_count},
          {"control_count", summary.control_count},
          {"positive_count", summary.positive_count},
          {"per_stratum", std::move(strata)}};
}

void write_records(std::ostream& out, std::span<const BehavioralRecord> records, RecordFormat format) {
  for (const auto& r : records) out << record_to_json(r, format).dump() << '\n';
}

std::vector<BehavioralRecord> read_enriched_records(std::istream& in) {
  std::vector<BehavioralRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    try {
      out.push_back(record_from_json(nlohmann::json::parse(line), RecordFormat::enriched));
    } catch (const std::exception& e) {
      throw ParseError("records line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<BehavioralRecord> read_enriched_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open records file " + path.string());
  return read_enriched_records(in);
}

TpFpSplit label_tp_fp(std::span<const BehavioralRecord> records) {
  TpFpSplit split;
  for (const auto& r : records) {
    (is_true_positive(r) ? split.true_positives : split.false_positives).push_back(r);
  }
  return split;
}

}  // namespace psyloc
