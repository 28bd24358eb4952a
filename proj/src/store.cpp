#include "psyloc/store.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

namespace psyloc {

namespace {

namespace fs = std::filesystem;

nlohmann::json events_json(std::span<const TrailEvent> events) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& e : events) out.push_back(trail_event_to_json(e));
  return out;
}

std::vector<TrailEvent> events_from(const nlohmann::json& j) {
  std::vector<TrailEvent> out;
  for (const auto& e : j) out.push_back(trail_event_from_json(e));
  return out;
}

std::vector<CircleSelection> selections_from(const nlohmann::json& j) {
  std::vector<CircleSelection> out;
  for (const auto& s : j) out.push_back(s.get<CircleSelection>());
  return out;
}

void write_atomically(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
    if (!out.flush()) throw Error("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string new_session_id(std::uint64_t counter) {
  static std::mutex m;
  static std::mt19937_64 gen{std::random_device{}()};
  std::uint64_t r = 0;
  {
    std::lock_guard lock(m);
    r = gen();
  }
  char buf[48];
  std::snprintf(buf, sizeof buf, "s%06llu-%08llx", static_cast<unsigned long long>(counter),
                static_cast<unsigned long long>(r & 0xffffffffULL));
  return buf;
}

}  // namespace

ExperimentStore::ExperimentStore(StoreConfig config, ImagePool pool, std::vector<Annotation> practice_images,
                                 std::vector<Survey> surveys)
    : config_(std::move(config)), pool_(std::move(pool)), practice_(std::move(practice_images)) {
  pool_.validate();
  fs::create_directories(config_.data_dir / "events");
  const fs::path table = config_.data_dir / "surveys.json";
  if (fs::exists(table)) {
    std::ifstream in(table);
    const auto j = nlohmann::json::parse(in);
    surveys = j.at("surveys").get<std::vector<Survey>>();
    if (j.contains("practice")) practice_ = j.at("practice").get<std::vector<Annotation>>();
  }
  if (practice_.size() != kPracticeImages) throw InvalidArgument("the service needs exactly three practice images");
  std::vector<Annotation> all = pool_.positives;
  all.insert(all.end(), pool_.controls.begin(), pool_.controls.end());
  all.insert(all.end(), practice_.begin(), practice_.end());
  images_ = index_annotations(all);
  for (const auto& s : surveys) {
    for (const auto& q : s.questions) {
      if (images_.count(q.image_id) == 0) throw InvalidArgument("survey image '" + q.image_id + "' is not in the pool");
    }
  }

  for (auto& s : surveys) s.status = SurveyStatus::available;
  surveys_ = std::move(surveys);
  for (std::size_t i = 0; i < surveys_.size(); ++i) {
    if (!survey_pos_.emplace(surveys_[i].survey_id, i).second) {
      throw InvalidArgument("duplicate survey id " + surveys_[i].survey_id);
    }
  }
  replay();
  persist_surveys();
  rewrite_outputs();
}

std::shared_ptr<ExperimentStore::Entry> ExperimentStore::entry(const std::string& session_id) const {
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw UnknownSession("unknown session '" + session_id + "'");
  return it->second;
}

Survey& ExperimentStore::survey_ref(const std::string& survey_id) {
  const auto it = survey_pos_.find(survey_id);
  if (it == survey_pos_.end()) throw UnknownSurvey("unknown survey '" + survey_id + "'");
  return surveys_[it->second];
}

// Caller holds mutex_.
void ExperimentStore::log(const std::string& session_id, nlohmann::json event) {
  event["seq"] = seq_;
  event["session_id"] = session_id;
  const fs::path file = config_.data_dir / "events" / (session_id + ".jsonl");
  std::ofstream out(file, std::ios::app);
  out << event.dump() << '\n';
  if (!out.flush()) throw Error("cannot append to " + file.string());
  ++seq_;
}

void ExperimentStore::persist_surveys() const {
  nlohmann::json j{{"practice", practice_}, {"surveys", surveys_}};
  write_atomically(config_.data_dir / "surveys.json", j.dump(1) + "\n");
}

void ExperimentStore::append_records(const fs::path& file, std::span<const BehavioralRecord> records) const {
  std::ofstream out(file, std::ios::app);
  write_records(out, records);
  if (!out.flush()) throw Error("cannot append to " + file.string());
}

void ExperimentStore::rewrite_outputs() const {
  std::ostringstream acc;
  write_records(acc, accepted_);
  write_atomically(config_.data_dir / "behavior.jsonl", acc.str());
  std::ostringstream quar;
  write_records(quar, quarantined_);
  write_atomically(config_.data_dir / "quarantine.jsonl", quar.str());
}

// Re-executes one logged event. Only used during replay, with every event
// having passed validation when it was first logged.
void ExperimentStore::apply(const nlohmann::json& ev) {
  const std::string type = ev.at("type").get<std::string>();
  const std::string sid = ev.at("session_id").get<std::string>();
  if (type == "create") {
    Survey& s = survey_ref(ev.at("survey_id").get<std::string>());
    claim_survey(s);
    auto e = std::make_shared<Entry>();
    e->session = start_session(sid, ev.at("worker_id").get<std::string>(), s);
    sessions_[sid] = e;
    survey_session_[s.survey_id] = sid;
    workers_.insert(e->session.worker_id);
    ++id_counter_;
    return;
  }
  const auto it = sessions_.find(sid);
  if (it == sessions_.end()) throw ParseError("event log refers to unknown session " + sid);
  Entry& e = *it->second;
  if (type == "ack") {
    advance_phase(e.session, phase_event_from_string(ev.at("event").get<std::string>()));
  } else if (type == "practice") {
    const auto sel = selections_from(ev.at("selections"));
    grade_practice(e.session, sel, practice_);
  } else if (type == "trail") {
    const auto events = events_from(ev.at("events"));
    append_trail(e.session, ev.at("question_idx").get<std::size_t>(), events);
    if (ev.contains("event_key")) e.event_keys.insert(ev.at("event_key").get<std::string>());
  } else if (type == "answer") {
    const auto events = events_from(ev.at("events"));
    record_answer(e.session, ev.at("question_idx").get<std::size_t>(), events,
                  ev.at("final_selection").get<CircleSelection>(), ev.at("response_time_ms").get<std::int64_t>(),
                  images_);
    if (ev.contains("event_key")) e.event_keys.insert(ev.at("event_key").get<std::string>());
    if (e.session.phase == Phase::done) submit_survey(survey_ref(e.session.survey_id));
  } else if (type == "review") {
    const bool accept = ev.at("verdict").get<std::string>() == "accept";
    decide_survey(survey_ref(e.session.survey_id), accept);
    e.reviewed = true;
    auto& dest = accept ? accepted_ : quarantined_;
    dest.insert(dest.end(), e.session.answers.begin(), e.session.answers.end());
  } else if (type == "requeue") {
    requeue(survey_ref(ev.at("survey_id").get<std::string>()));
  } else {
    throw ParseError("unknown event type '" + type + "'");
  }
}

void ExperimentStore::replay() {
  std::vector<nlohmann::json> events;
  for (const auto& file : fs::directory_iterator(config_.data_dir / "events")) {
    if (file.path().extension() != ".jsonl") continue;
    std::ifstream in(file.path());
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) {
      if (!line.empty()) lines.push_back(line);
    }
    for (std::size_t i = 0; i < lines.size(); ++i) {
      try {
        events.push_back(nlohmann::json::parse(lines[i]));
      } catch (const nlohmann::json::exception&) {
        // A torn final line is what a crash mid-append leaves behind. Drop it
        // so the next append starts on a clean line.
        if (i + 1 == lines.size()) {
          std::string kept;
          for (std::size_t k = 0; k < i; ++k) kept += lines[k] + '\n';
          write_atomically(file.path(), kept);
          break;
        }
        throw ParseError(file.path().string() + ": corrupt event on line " + std::to_string(i + 1));
      }
    }
  }
  std::sort(events.begin(), events.end(), [](const nlohmann::json& a, const nlohmann::json& b) {
    return a.at("seq").get<std::uint64_t>() < b.at("seq").get<std::uint64_t>();
  });
  for (const auto& ev : events) {
    apply(ev);
    seq_ = ev.at("seq").get<std::uint64_t>() + 1;
  }
}

std::string ExperimentStore::create_session(const std::string& worker_id) {
  if (worker_id.empty()) throw InvalidArgument("worker_id must not be empty");
  std::lock_guard lock(mutex_);
  if (!config_.allow_multiple_surveys && workers_.count(worker_id) != 0) {
    throw NoSurveyAvailable("worker '" + worker_id + "' already took a survey");
  }
  const auto it = std::find_if(surveys_.begin(), surveys_.end(),
                               [](const Survey& s) { return s.status == SurveyStatus::available; });
  if (it == surveys_.end()) throw NoSurveyAvailable("no survey is available");

  const std::string sid = new_session_id(id_counter_);
  auto e = std::make_shared<Entry>();
  e->session = start_session(sid, worker_id, *it);
  log(sid, {{"type", "create"}, {"worker_id", worker_id}, {"survey_id", it->survey_id}});
  claim_survey(*it);
  sessions_[sid] = e;
  survey_session_[it->survey_id] = sid;
  workers_.insert(worker_id);
  ++id_counter_;
  persist_surveys();
  return sid;
}

Session ExperimentStore::session(const std::string& session_id) const {
  const auto e = entry(session_id);
  std::lock_guard lock(e->mutex);
  return e->session;
}

std::vector<std::string> ExperimentStore::session_ids() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [id, _] : sessions_) out.push_back(id);
  return out;
}

void ExperimentStore::acknowledge(const std::string& session_id, PhaseEvent event) {
  const auto e = entry(session_id);
  std::lock_guard session_lock(e->mutex);
  Session next = e->session;
  advance_phase(next, event);
  {
    std::lock_guard lock(mutex_);
    log(session_id, {{"type", "ack"}, {"event", to_string(event)}});
  }
  e->session = std::move(next);
}

bool ExperimentStore::submit_practice(const std::string& session_id, std::span<const CircleSelection> selections) {
  const auto e = entry(session_id);
  std::lock_guard session_lock(e->mutex);
  Session next = e->session;
  const bool passed = grade_practice(next, selections, practice_);
  nlohmann::json sel = nlohmann::json::array();
  for (const auto& s : selections) sel.push_back(s);
  {
    std::lock_guard lock(mutex_);
    log(session_id, {{"type", "practice"}, {"selections", sel}});
  }
  e->session = std::move(next);
  return passed;
}

void ExperimentStore::flush_trail(const std::string& session_id, std::size_t question_idx,
                                  std::span<const TrailEvent> events, const std::optional<std::string>& event_key) {
  const auto e = entry(session_id);
  std::lock_guard session_lock(e->mutex);
  if (event_key && e->event_keys.count(*event_key) != 0) return;
  Session next = e->session;
  append_trail(next, question_idx, events);
  nlohmann::json ev{{"type", "trail"}, {"question_idx", question_idx}, {"events", events_json(events)}};
  if (event_key) ev["event_key"] = *event_key;
  {
    std::lock_guard lock(mutex_);
    log(session_id, std::move(ev));
  }
  e->session = std::move(next);
  if (event_key) e->event_keys.insert(*event_key);
}

BehavioralRecord ExperimentStore::answer(const std::string& session_id, std::size_t question_idx,
                                         std::span<const TrailEvent> events, const CircleSelection& final_selection,
                                         std::int64_t response_time_ms, const std::optional<std::string>& event_key) {
  const auto e = entry(session_id);
  std::lock_guard session_lock(e->mutex);
  if (event_key && e->event_keys.count(*event_key) != 0) {
    // Duplicate delivery: hand back what was stored the first time.
    if (question_idx < e->session.answers.size()) return e->session.answers[question_idx];
    throw InvalidArgument("event_key '" + *event_key + "' was already used for a different event");
  }
  Session next = e->session;
  const BehavioralRecord record = record_answer(next, question_idx, events, final_selection, response_time_ms, images_);
  nlohmann::json ev{{"type", "answer"},
                    {"question_idx", question_idx},
                    {"events", events_json(events)},
                    {"final_selection", final_selection},
                    {"response_time_ms", response_time_ms}};
  if (event_key) ev["event_key"] = *event_key;
  {
    std::lock_guard lock(mutex_);
    log(session_id, std::move(ev));
    if (next.phase == Phase::done) {
      submit_survey(survey_ref(next.survey_id));
      persist_surveys();
    }
  }
  e->session = std::move(next);
  if (event_key) e->event_keys.insert(*event_key);
  return record;
}

std::size_t ExperimentStore::score(const std::string& session_id) const {
  const auto e = entry(session_id);
  std::lock_guard session_lock(e->mutex);
  return midpoint_score(e->session);
}

ReviewResult ExperimentStore::preview_review(const std::string& session_id) const {
  const auto e = entry(session_id);
  std::lock_guard session_lock(e->mutex);
  if (e->session.phase != Phase::done) {
    throw WrongPhase("session " + session_id + " is in phase " + to_string(e->session.phase) + ", not done");
  }
  return review_submission(e->session.answers, images_, config_.thresholds);
}

ReviewResult ExperimentStore::review(const std::string& session_id) {
  const auto e = entry(session_id);
  std::lock_guard session_lock(e->mutex);
  if (e->session.phase != Phase::done) {
    throw WrongPhase("session " + session_id + " is in phase " + to_string(e->session.phase) + ", not done");
  }
  if (e->reviewed) throw WrongStatus("session " + session_id + " was already reviewed");
  const ReviewResult result = review_submission(e->session.answers, images_, config_.thresholds);
  const bool accept = result.verdict == Verdict::accept;
  std::lock_guard lock(mutex_);
  Survey& survey = survey_ref(e->session.survey_id);
  if (survey.status != SurveyStatus::submitted) {
    throw WrongStatus("survey " + survey.survey_id + " is " + to_string(survey.status) + ", not submitted");
  }
  log(session_id, {{"type", "review"}, {"verdict", to_string(result.verdict)}, {"result", review_to_json(result)}});
  decide_survey(survey, accept);
  e->reviewed = true;
  auto& dest = accept ? accepted_ : quarantined_;
  dest.insert(dest.end(), e->session.answers.begin(), e->session.answers.end());
  append_records(config_.data_dir / (accept ? "behavior.jsonl" : "quarantine.jsonl"), e->session.answers);
  persist_surveys();
  return result;
}

void ExperimentStore::requeue_survey(const std::string& survey_id) {
  std::lock_guard lock(mutex_);
  Survey& survey = survey_ref(survey_id);
  if (survey.status != SurveyStatus::rejected) {
    throw WrongStatus("survey " + survey_id + " is " + to_string(survey.status) + "; only rejected surveys requeue");
  }
  log(survey_session_.at(survey_id), {{"type", "requeue"}, {"survey_id", survey_id}});
  requeue(survey);
  persist_surveys();
}

std::vector<Survey> ExperimentStore::surveys() const {
  std::lock_guard lock(mutex_);
  return surveys_;
}

std::vector<BehavioralRecord> ExperimentStore::accepted_records() const {
  std::lock_guard lock(mutex_);
  return accepted_;
}

std::vector<BehavioralRecord> ExperimentStore::quarantined_records() const {
  std::lock_guard lock(mutex_);
  return quarantined_;
}

}  // namespace psyloc
