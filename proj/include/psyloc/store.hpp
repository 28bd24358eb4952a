#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "psyloc/session.hpp"
#include "psyloc/survey.hpp"

namespace psyloc {

class UnknownSession : public Error {
 public:
  using Error::Error;
};
class UnknownSurvey : public Error {
 public:
  using Error::Error;
};
/// No survey is available, or the worker already took one.
class NoSurveyAvailable : public Error {
 public:
  using Error::Error;
};

struct StoreConfig {
  std::filesystem::path data_dir = "data";
  bool allow_multiple_surveys = false;
  ReviewThresholds thresholds;
};

// Durable state of the experiment service.
//
// Layout under data_dir:
//   surveys.json          practice images, assembled surveys and their status
//   events/<sid>.jsonl    append-only log per session; every line carries a
//                         global sequence number
//   behavior.jsonl        records of accepted sessions (raw format)
//   quarantine.jsonl      records of rejected sessions
//
// Every mutation is logged before it is applied, and startup replays all logs
// in sequence order, so the in-memory state after a crash equals the state
// after the last logged event. behavior.jsonl and quarantine.jsonl are
// rewritten from that state on startup.
//
// Thread safety: calls for one session are serialised by a per-session
// mutex; survey claims, reviews and requeues go through a store-wide mutex.
class ExperimentStore {
 public:
  /// `surveys` and `practice_images` are used only when data_dir has no
  /// surveys.json yet; otherwise the stored ones win.
  ExperimentStore(StoreConfig config, ImagePool pool, std::vector<Annotation> practice_images,
                  std::vector<Survey> surveys);

  ExperimentStore(const ExperimentStore&) = delete;
  ExperimentStore& operator=(const ExperimentStore&) = delete;

  /// Claims the first available survey. Throws NoSurveyAvailable.
  std::string create_session(const std::string& worker_id);

  [[nodiscard]] Session session(const std::string& session_id) const;
  [[nodiscard]] std::vector<std::string> session_ids() const;

  void acknowledge(const std::string& session_id, PhaseEvent event);
  bool submit_practice(const std::string& session_id, std::span<const CircleSelection> selections);

  /// A repeated `event_key` for the same session is ignored.
  void flush_trail(const std::string& session_id, std::size_t question_idx, std::span<const TrailEvent> events,
                   const std::optional<std::string>& event_key);
  /// A repeated `event_key` returns the stored record without re-applying.
  BehavioralRecord answer(const std::string& session_id, std::size_t question_idx, std::span<const TrailEvent> events,
                          const CircleSelection& final_selection, std::int64_t response_time_ms,
                          const std::optional<std::string>& event_key);

  [[nodiscard]] std::size_t score(const std::string& session_id) const;

  /// Reviews a finished session against the configured thresholds and
  /// settles its survey. Accepted records go to behavior.jsonl, rejected ones
  /// to quarantine.jsonl. Throws WrongPhase before the session is done and
  /// WrongStatus if it was already reviewed.
  ReviewResult review(const std::string& session_id);
  /// Computes the review without applying it.
  [[nodiscard]] ReviewResult preview_review(const std::string& session_id) const;

  /// Rejected survey -> available. Throws WrongStatus, UnknownSurvey.
  void requeue_survey(const std::string& survey_id);

  [[nodiscard]] std::vector<Survey> surveys() const;
  [[nodiscard]] std::vector<BehavioralRecord> accepted_records() const;
  [[nodiscard]] std::vector<BehavioralRecord> quarantined_records() const;
  [[nodiscard]] const std::vector<Annotation>& practice_images() const { return practice_; }
  [[nodiscard]] const AnnotationIndex& images() const { return images_; }
  [[nodiscard]] const StoreConfig& config() const { return config_; }

 private:
  struct Entry {
    std::mutex mutex;
    Session session;
    std::set<std::string> event_keys;
    bool reviewed = false;
  };

  std::shared_ptr<Entry> entry(const std::string& session_id) const;
  Survey& survey_ref(const std::string& survey_id);
  void log(const std::string& session_id, nlohmann::json event);
  void apply(const nlohmann::json& event);
  void replay();
  void persist_surveys() const;
  void rewrite_outputs() const;
  void append_records(const std::filesystem::path& file, std::span<const BehavioralRecord> records) const;

  StoreConfig config_;
  ImagePool pool_;
  AnnotationIndex images_;
  std::vector<Annotation> practice_;

  mutable std::mutex mutex_;  // guards everything below
  std::vector<Survey> surveys_;
  std::map<std::string, std::size_t> survey_pos_;
  std::map<std::string, std::string> survey_session_;  // survey -> most recent session
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::set<std::string> workers_;
  std::vector<BehavioralRecord> accepted_;
  std::vector<BehavioralRecord> quarantined_;
  std::uint64_t seq_ = 0;
  std::uint64_t id_counter_ = 0;
};

}  // namespace psyloc
