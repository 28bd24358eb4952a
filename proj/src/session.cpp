#include "psyloc/session.hpp"

#include <algorithm>
#include <numeric>

#include "psyloc/analytics.hpp"

namespace psyloc {

std::string to_string(Phase p) {
  switch (p) {
    case Phase::consent: return "consent";
    case Phase::instructions: return "instructions";
    case Phase::samples: return "samples";
    case Phase::practice: return "practice";
    case Phase::experiment: return "experiment";
    case Phase::done: return "done";
  }
  return "?";
}

std::string to_string(PhaseEvent e) {
  switch (e) {
    case PhaseEvent::ack_consent: return "ack_consent";
    case PhaseEvent::ack_instructions: return "ack_instructions";
    case PhaseEvent::ack_samples: return "ack_samples";
    case PhaseEvent::practice_passed: return "practice_passed";
  }
  return "?";
}

Phase phase_from_string(const std::string& s) {
  for (auto p : {Phase::consent, Phase::instructions, Phase::samples, Phase::practice, Phase::experiment,
                 Phase::done}) {
    if (to_string(p) == s) return p;
  }
  throw ParseError("unknown phase '" + s + "'");
}

PhaseEvent phase_event_from_string(const std::string& s) {
  for (auto e : {PhaseEvent::ack_consent, PhaseEvent::ack_instructions, PhaseEvent::ack_samples,
                 PhaseEvent::practice_passed}) {
    if (to_string(e) == s) return e;
  }
  throw ParseError("unknown phase event '" + s + "'");
}

Session start_session(std::string session_id, std::string worker_id, const Survey& survey) {
  if (survey.questions.size() != kQuestionsPerSurvey) {
    throw InvalidArgument("survey " + survey.survey_id + " does not have 13 questions");
  }
  Session s;
  s.session_id = std::move(session_id);
  s.worker_id = std::move(worker_id);
  s.survey_id = survey.survey_id;
  s.questions = survey.questions;
  return s;
}

void advance_phase(Session& session, PhaseEvent event) {
  const auto illegal = [&] {
    throw IllegalTransition("event " + to_string(event) + " is not allowed in phase " + to_string(session.phase));
  };
  switch (event) {
    case PhaseEvent::ack_consent:
      if (session.phase != Phase::consent) illegal();
      session.phase = Phase::instructions;
      return;
    case PhaseEvent::ack_instructions:
      if (session.phase != Phase::instructions) illegal();
      session.phase = Phase::samples;
      return;
    case PhaseEvent::ack_samples:
      if (session.phase != Phase::samples) illegal();
      session.phase = Phase::practice;
      return;
    case PhaseEvent::practice_passed:
      if (session.phase != Phase::practice || !session.practice_passed) illegal();
      session.phase = Phase::experiment;
      return;
  }
}

bool grade_practice(Session& session, std::span<const CircleSelection> selections,
                    std::span<const Annotation> practice_images) {
  if (session.phase != Phase::practice) {
    throw WrongPhase("practice can only be graded in the practice phase, not " + to_string(session.phase));
  }
  if (selections.size() != kPracticeImages || practice_images.size() != kPracticeImages) {
    throw InvalidArgument("practice needs exactly three selections");
  }
  for (const auto& sel : selections) {
    if (!sel.valid()) throw InvalidArgument("practice selection radius must be positive");
  }
  bool pass = true;
  for (std::size_t i = 0; i < kPracticeImages; ++i) {
    if (!(circle_box_iou(selections[i], practice_images[i].gt_box) > 0.0)) pass = false;
  }
  ++session.practice_attempts;
  if (pass) {
    session.practice_passed = true;
    advance_phase(session, PhaseEvent::practice_passed);
  }
  return pass;
}

namespace {

void check_answer_slot(const Session& session, std::size_t question_idx) {
  if (session.phase != Phase::experiment) {
    throw WrongPhase("answers are only accepted in the experiment phase, not " + to_string(session.phase));
  }
  if (question_idx != session.current_question()) {
    throw OutOfOrderAnswer("answer for question " + std::to_string(question_idx) + " while question " +
                           std::to_string(session.current_question()) + " is current");
  }
}

}  // namespace

void append_trail(Session& session, std::size_t question_idx, std::span<const TrailEvent> events) {
  check_answer_slot(session, question_idx);
  if (!events.empty() && !session.pending_trail.empty() && events.front().t_ms < session.pending_trail.back().t_ms) {
    throw ParseError("trail flush starts before the previous flush ended");
  }
  session.pending_trail.insert(session.pending_trail.end(), events.begin(), events.end());
}

const BehavioralRecord& record_answer(Session& session, std::size_t question_idx, std::span<const TrailEvent> events,
                                      const CircleSelection& final_selection, std::int64_t response_time_ms,
                                      const AnnotationIndex& images) {
  check_answer_slot(session, question_idx);
  const SurveyQuestion& q = session.questions.at(question_idx);
  const auto it = images.find(q.image_id);
  if (it == images.end()) throw InvalidArgument("no annotation for image '" + q.image_id + "'");

  BehavioralRecord r;
  r.session_id = session.session_id;
  r.worker_id = session.worker_id;
  r.image_id = q.image_id;
  r.is_control = q.is_control;
  r.events = session.pending_trail;
  r.events.insert(r.events.end(), events.begin(), events.end());
  r.final_selection = final_selection;
  r.response_time_ms = response_time_ms;
  finalize_record(r, it->second);

  session.answers.push_back(std::move(r));
  session.pending_trail.clear();
  if (session.answers.size() == session.questions.size()) session.phase = Phase::done;
  return session.answers.back();
}

std::size_t midpoint_score(const Session& session) {
  if (session.answers.size() != kMidpointAnswers) {
    throw WrongTime("the score is shown after 7 answers; " + std::to_string(session.answers.size()) + " so far");
  }
  return static_cast<std::size_t>(std::count_if(session.answers.begin(), session.answers.end(), is_true_positive));
}

ReviewThresholds review_thresholds_from_json(const nlohmann::json& j, ReviewThresholds base) {
  base.min_controls = j.value("min_controls", base.min_controls);
  base.rt_min_ms = j.value("rt_min_ms", base.rt_min_ms);
  base.rt_max_ms = j.value("rt_max_ms", base.rt_max_ms);
  base.min_coverage = j.value("min_coverage", base.min_coverage);
  base.coverage_grid = j.value("coverage_grid", base.coverage_grid);
  if (base.rt_min_ms > base.rt_max_ms) throw InvalidArgument("rt_min_ms exceeds rt_max_ms");
  if (base.coverage_grid == 0) throw InvalidArgument("coverage_grid must be positive");
  return base;
}

std::string to_string(Verdict v) { return v == Verdict::accept ? "accept" : "reject"; }

nlohmann::json review_to_json(const ReviewResult& r) {
  return {{"control_correct", r.control_correct},
          {"control_total", r.control_total},
          {"rt_flags", r.rt_flags},
          {"trail_coverage_score", r.trail_coverage_score},
          {"verdict", to_string(r.verdict)},
          {"reasons", r.reasons}};
}

ReviewResult review_submission(std::span<const BehavioralRecord> records, const AnnotationIndex& images,
                               const ReviewThresholds& thresholds) {
  ReviewResult out;
  double coverage = 0.0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.is_control) {
      ++out.control_total;
      if (is_true_positive(r)) ++out.control_correct;
    }
    if (r.response_time_ms < thresholds.rt_min_ms || r.response_time_ms > thresholds.rt_max_ms) {
      out.rt_flags.push_back(i);
    }
    const auto it = images.find(r.image_id);
    if (it == images.end()) throw InvalidArgument("no annotation for image '" + r.image_id + "'");
    coverage += trail_coverage(r, it->second.image_width_px, it->second.image_height_px, thresholds.coverage_grid);
  }
  out.trail_coverage_score = records.empty() ? 0.0 : coverage / static_cast<double>(records.size());

  if (records.size() != kQuestionsPerSurvey) {
    out.reasons.push_back("incomplete submission: " + std::to_string(records.size()) + " of 13 answers");
  }
  if (out.control_correct < thresholds.min_controls) {
    out.reasons.push_back("control questions: " + std::to_string(out.control_correct) + " correct, need " +
                          std::to_string(thresholds.min_controls));
  }
  if (!out.rt_flags.empty()) {
    out.reasons.push_back(std::to_string(out.rt_flags.size()) + " response time(s) outside [" +
                          std::to_string(thresholds.rt_min_ms) + ", " + std::to_string(thresholds.rt_max_ms) +
                          "] ms");
  }
  if (out.trail_coverage_score < thresholds.min_coverage) {
    out.reasons.push_back("trail coverage " + std::to_string(out.trail_coverage_score) + " below " +
                          std::to_string(thresholds.min_coverage));
  }
  out.verdict = out.reasons.empty() ? Verdict::accept : Verdict::reject;
  return out;
}

}  // namespace psyloc
