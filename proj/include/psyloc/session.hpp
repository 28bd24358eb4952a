#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "psyloc/annotation.hpp"
#include "psyloc/behavior.hpp"
#include "psyloc/errors.hpp"
#include "psyloc/survey.hpp"

namespace psyloc {

inline constexpr std::size_t kPracticeImages = 3;
/// Answers after which the half-way score is shown: ceil(13 / 2).
inline constexpr std::size_t kMidpointAnswers = 7;

class IllegalTransition : public Error {
 public:
  using Error::Error;
};
class WrongPhase : public Error {
 public:
  using Error::Error;
};
class OutOfOrderAnswer : public Error {
 public:
  using Error::Error;
};
class WrongTime : public Error {
 public:
  using Error::Error;
};

enum class Phase { consent, instructions, samples, practice, experiment, done };
enum class PhaseEvent { ack_consent, ack_instructions, ack_samples, practice_passed };

std::string to_string(Phase p);
std::string to_string(PhaseEvent e);
Phase phase_from_string(const std::string& s);
PhaseEvent phase_event_from_string(const std::string& s);

struct Session {
  std::string session_id;
  std::string worker_id;
  std::string survey_id;
  std::vector<SurveyQuestion> questions;
  Phase phase = Phase::consent;
  std::size_t practice_attempts = 0;
  /// Set only by a passing grade_practice.
  bool practice_passed = false;
  /// Trail events flushed for the current question before its answer.
  std::vector<TrailEvent> pending_trail;
  std::vector<BehavioralRecord> answers;

  [[nodiscard]] std::size_t current_question() const { return answers.size(); }
};

Session start_session(std::string session_id, std::string worker_id, const Survey& survey);

/// consent -ack_consent-> instructions -ack_instructions-> samples
/// -ack_samples-> practice -practice_passed-> experiment. The last event is
/// accepted only after grade_practice passed. Everything else throws
/// IllegalTransition; the session is left unchanged.
void advance_phase(Session& session, PhaseEvent event);

/// Passes iff every selection overlaps its practice image's box. A pass moves
/// the session to the experiment; a fail counts an attempt and stays in
/// practice. Throws WrongPhase outside practice, InvalidArgument unless there
/// are exactly three selections and three practice images.
bool grade_practice(Session& session, std::span<const CircleSelection> selections,
                    std::span<const Annotation> practice_images);

/// Buffers an incremental trail flush for the current question.
void append_trail(Session& session, std::size_t question_idx, std::span<const TrailEvent> events);

/// Scores and stores the answer to the current question. The stored trail is
/// the buffered flushes followed by `events`. Throws WrongPhase,
/// OutOfOrderAnswer or ParseError (invalid trail); the session is unchanged on
/// error. The 13th answer moves the session to done.
const BehavioralRecord& record_answer(Session& session, std::size_t question_idx, std::span<const TrailEvent> events,
                                      const CircleSelection& final_selection, std::int64_t response_time_ms,
                                      const AnnotationIndex& images);

/// Hits among the first seven answers. Throws WrongTime unless exactly seven
/// questions have been answered.
std::size_t midpoint_score(const Session& session);

struct ReviewThresholds {
  std::size_t min_controls = 2;
  std::int64_t rt_min_ms = 300;
  std::int64_t rt_max_ms = 300000;
  double min_coverage = 0.15;
  std::size_t coverage_grid = 10;
};

ReviewThresholds review_thresholds_from_json(const nlohmann::json& j, ReviewThresholds base = {});

enum class Verdict { accept, reject };

std::string to_string(Verdict v);

struct ReviewResult {
  std::size_t control_correct = 0;
  std::size_t control_total = 0;
  /// Indices (into the reviewed records) whose response time is out of range.
  std::vector<std::size_t> rt_flags;
  double trail_coverage_score = 0.0;
  Verdict verdict = Verdict::accept;
  std::vector<std::string> reasons;
};

nlohmann::json review_to_json(const ReviewResult& r);

/// Accept iff enough controls were hit, every response time is within
/// [rt_min, rt_max] and the mean trail coverage reaches min_coverage. A
/// submission without all 13 answers is rejected.
ReviewResult review_submission(std::span<const BehavioralRecord> records, const AnnotationIndex& images,
                               const ReviewThresholds& thresholds = {});

}  // namespace psyloc
