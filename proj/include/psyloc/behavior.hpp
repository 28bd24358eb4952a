#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "psyloc/annotation.hpp"
#include "psyloc/geometry.hpp"

namespace psyloc {

/// One lens sample: where the magnifier was, how zoomed, and when.
struct TrailEvent {
  std::int64_t t_ms = 0;
  double x = 0.0;
  double y = 0.0;
  int zoom_level = 1;
  double lens_radius_px = 1.0;

  [[nodiscard]] CircleSelection lens() const { return {x, y, lens_radius_px}; }

  friend bool operator==(const TrailEvent&, const TrailEvent&) = default;
};

nlohmann::json trail_event_to_json(const TrailEvent& e);
TrailEvent trail_event_from_json(const nlohmann::json& j);

/// One worker x image outcome.
///
/// `iou` and `stratum` are derived at ingest from the image's annotation and
/// are not part of the raw on-disk record.
struct BehavioralRecord {
  std::string session_id;
  std::string worker_id;
  std::string image_id;
  bool is_control = false;
  std::vector<TrailEvent> events;
  CircleSelection final_selection;
  std::int64_t response_time_ms = 0;

  double iou = 0.0;
  StratumKey stratum{10, 100};

  friend bool operator==(const BehavioralRecord&, const BehavioralRecord&) = default;
};

inline bool is_true_positive(const BehavioralRecord& r) { return r.iou > 0.0; }

struct DatasetSummary {
  std::size_t record_count = 0;
  std::size_t worker_count = 0;
  std::size_t control_count = 0;
  std::size_t positive_count = 0;
  StratumGrid<std::size_t> per_stratum;
};

enum class IngestIssueKind { MalformedLine, MissingAnnotation, NonMonotonicTrail };

std::string to_string(IngestIssueKind kind);

struct IngestIssue {
  IngestIssueKind kind = IngestIssueKind::MalformedLine;
  std::size_t line_no = 0;
  std::string session_id;
  std::string image_id;
  std::string message;
};

struct IngestResult {
  std::vector<BehavioralRecord> records;
  DatasetSummary summary;
  std::vector<IngestIssue> issues;
  /// Non-fatal notes, e.g. lens coordinates clamped into the image.
  std::vector<std::string> warnings;
};

/// On-disk flavours of a record. `raw` is the behavioral file written by the
/// experiment service; `enriched` additionally carries iou, distance_m and
/// visibility_pct so analytics can run without the annotation file.
enum class RecordFormat { raw, enriched };

nlohmann::json record_to_json(const BehavioralRecord& r, RecordFormat format = RecordFormat::raw);
/// Parses the raw fields; derived fields are read only for RecordFormat::enriched.
BehavioralRecord record_from_json(const nlohmann::json& j, RecordFormat format = RecordFormat::raw);

/// Validates, clamps and scores a single record against its annotation.
/// Throws ParseError on invariant violations; returns warnings via `warnings`.
void finalize_record(BehavioralRecord& record, const Annotation& annotation,
                     std::vector<std::string>* warnings = nullptr);

/// Single pass over a JSON-lines behavioral stream. Bad lines become issues
/// and are skipped; every good record gets its iou populated.
IngestResult ingest(std::istream& behavior, const AnnotationIndex& annotations);
IngestResult ingest(const std::filesystem::path& behavior_file, const std::filesystem::path& annotation_file);

DatasetSummary summarize(std::span<const BehavioralRecord> records);
nlohmann::json summary_to_json(const DatasetSummary& summary);

void write_records(std::ostream& out, std::span<const BehavioralRecord> records,
                   RecordFormat format = RecordFormat::raw);
/// Reads records written with RecordFormat::enriched. Throws ParseError.
std::vector<BehavioralRecord> read_enriched_records(std::istream& in);
std::vector<BehavioralRecord> read_enriched_records(const std::filesystem::path& path);

struct TpFpSplit {
  std::vector<BehavioralRecord> true_positives;
  std::vector<BehavioralRecord> false_positives;
};

/// TP iff iou > 0.
TpFpSplit label_tp_fp(std::span<const BehavioralRecord> records);

}  // namespace psyloc
