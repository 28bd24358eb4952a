#include "psyloc/server.hpp"

#include <fstream>
#include <regex>
#include <sstream>

#include <httplib.h>

namespace psyloc {

namespace {

ApiResponse error(int status, const std::string& message) { return {status, {{"error", message}}}; }

nlohmann::json parse_body(const std::string& body) {
  if (body.empty()) return nlohmann::json::object();
  auto j = nlohmann::json::parse(body);
  if (!j.is_object()) throw ParseError("request body must be a JSON object");
  return j;
}

std::vector<TrailEvent> events_from(const nlohmann::json& j) {
  std::vector<TrailEvent> out;
  if (!j.is_array()) throw ParseError("events must be an array");
  for (const auto& e : j) out.push_back(trail_event_from_json(e));
  return out;
}

PhaseEvent ack_event(const std::string& what) {
  if (what == "consent") return PhaseEvent::ack_consent;
  if (what == "instructions") return PhaseEvent::ack_instructions;
  if (what == "samples") return PhaseEvent::ack_samples;
  throw InvalidArgument("acknowledge must be one of consent, instructions, samples");
}

std::string content_type(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  return "application/octet-stream";
}

}  // namespace

ApiResponse Api::next(const std::string& sid) {
  const Session s = store_.session(sid);
  nlohmann::json j{{"session_id", s.session_id}, {"phase", to_string(s.phase)}};
  switch (s.phase) {
    case Phase::consent:
    case Phase::instructions:
    case Phase::samples:
      j["acknowledge"] = to_string(s.phase);
      break;
    case Phase::practice: {
      nlohmann::json images = nlohmann::json::array();
      for (const auto& a : store_.practice_images()) {
        images.push_back({{"image_id", a.image_id},
                          {"image_url", "/images/" + a.image_id},
                          {"width", a.image_width_px},
                          {"height", a.image_height_px}});
      }
      j["images"] = images;
      j["attempts"] = s.practice_attempts;
      break;
    }
    case Phase::experiment: {
      const std::size_t q = s.current_question();
      const auto& image = store_.images().at(s.questions.at(q).image_id);
      j["question_idx"] = q;
      j["question_count"] = s.questions.size();
      j["image_id"] = image.image_id;
      j["image_url"] = "/images/" + image.image_id;
      j["width"] = image.image_width_px;
      j["height"] = image.image_height_px;
      j["score_available"] = q == kMidpointAnswers;
      break;
    }
    case Phase::done:
      j["answered"] = s.answers.size();
      break;
  }
  return {200, j};
}

ApiResponse Api::dispatch(const std::string& method, const std::string& path, const std::string& body) {
  static const std::regex session_route(R"(^/sessions/([A-Za-z0-9_.-]+)/(consent|next|practice|answers|score)$)");
  static const std::regex admin_route(R"(^/admin/(review|requeue)/([A-Za-z0-9_.-]+)$)");
  std::smatch m;
  try {
    if (path == "/sessions") {
      if (method != "POST") return error(405, "use POST");
      const auto j = parse_body(body);
      const std::string sid = store_.create_session(j.at("worker_id").get<std::string>());
      const Session s = store_.session(sid);
      return {201, {{"session_id", sid}, {"phase", to_string(s.phase)}}};
    }
    if (std::regex_match(path, m, session_route)) {
      const std::string sid = m[1];
      const std::string action = m[2];
      const bool is_get = action == "next" || action == "score";
      if (method != (is_get ? "GET" : "POST")) return error(405, is_get ? "use GET" : "use POST");
      if (action == "next") return next(sid);
      if (action == "score") return {200, {{"score", store_.score(sid)}, {"answered", kMidpointAnswers}}};
      const auto j = parse_body(body);
      if (action == "consent") {
        store_.acknowledge(sid, ack_event(j.at("acknowledge").get<std::string>()));
        return {200, {{"phase", to_string(store_.session(sid).phase)}}};
      }
      if (action == "practice") {
        std::vector<CircleSelection> sel;
        for (const auto& c : j.at("selections")) sel.push_back(c.get<CircleSelection>());
        const bool passed = store_.submit_practice(sid, sel);
        const Session s = store_.session(sid);
        return {200, {{"passed", passed}, {"attempts", s.practice_attempts}, {"phase", to_string(s.phase)}}};
      }
      // answers
      const auto q = j.at("question_idx").get<std::size_t>();
      const auto events = events_from(j.at("events"));
      std::optional<std::string> key;
      if (j.contains("event_key")) key = j.at("event_key").get<std::string>();
      if (j.value("partial", false)) {
        store_.flush_trail(sid, q, events, key);
        return {202, {{"question_idx", q}, {"buffered", events.size()}}};
      }
      store_.answer(sid, q, events, j.at("final_selection").get<CircleSelection>(),
                    j.at("response_time_ms").get<std::int64_t>(), key);
      const Session s = store_.session(sid);
      return {200,
              {{"question_idx", q},
               {"next_question", s.current_question()},
               {"phase", to_string(s.phase)},
               {"score_available", s.current_question() == kMidpointAnswers}}};
    }
    if (std::regex_match(path, m, admin_route)) {
      if (method != "POST") return error(405, "use POST");
      const std::string action = m[1];
      const std::string id = m[2];
      if (action == "review") {
        const auto j = parse_body(body);
        const ReviewResult r = j.value("dry_run", false) ? store_.preview_review(id) : store_.review(id);
        return {200, review_to_json(r)};
      }
      store_.requeue_survey(id);
      return {200, {{"survey_id", id}, {"status", "available"}}};
    }
    return error(404, "no route for " + method + " " + path);
  } catch (const UnknownSession& e) {
    return error(404, e.what());
  } catch (const UnknownSurvey& e) {
    return error(404, e.what());
  } catch (const IllegalTransition& e) {
    return error(409, e.what());
  } catch (const WrongPhase& e) {
    return error(409, e.what());
  } catch (const OutOfOrderAnswer& e) {
    return error(409, e.what());
  } catch (const WrongTime& e) {
    return error(409, e.what());
  } catch (const WrongStatus& e) {
    return error(409, e.what());
  } catch (const NoSurveyAvailable& e) {
    return error(409, e.what());
  } catch (const InvalidArgument& e) {
    return error(400, e.what());
  } catch (const ParseError& e) {
    return error(400, e.what());
  } catch (const nlohmann::json::exception& e) {
    return error(400, e.what());
  }
}

ExperimentServer::ExperimentServer(ExperimentStore& store, ServerOptions options)
    : api_(store), options_(std::move(options)), http_(std::make_unique<httplib::Server>()) {
  const auto forward = [this](const httplib::Request& req, httplib::Response& res) {
    const ApiResponse r = api_.dispatch(req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  http_->Get(R"(/sessions/.*)", forward);
  http_->Post(R"(/sessions(/.*)?)", forward);
  http_->Post(R"(/admin/.*)", forward);
  http_->Get(R"(/images/([A-Za-z0-9_.-]+))", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    if (!options_.images_dir.empty() && std::filesystem::is_directory(options_.images_dir)) {
      for (const auto& f : std::filesystem::directory_iterator(options_.images_dir)) {
        if (f.path().stem() != id) continue;
        std::ifstream in(f.path(), std::ios::binary);
        std::ostringstream data;
        data << in.rdbuf();
        res.set_content(data.str(), content_type(f.path()));
        return;
      }
    }
    res.status = 404;
    res.set_content(nlohmann::json{{"error", "no image " + id}}.dump(), "application/json");
  });
}

ExperimentServer::~ExperimentServer() = default;

int ExperimentServer::bind() {
  if (options_.port == 0) {
    const int port = http_->bind_to_any_port(options_.host);
    if (port < 0) throw Error("cannot bind " + options_.host);
    return port;
  }
  if (!http_->bind_to_port(options_.host, options_.port)) {
    throw Error("cannot bind " + options_.host + ":" + std::to_string(options_.port));
  }
  return options_.port;
}

void ExperimentServer::run() { http_->listen_after_bind(); }

void ExperimentServer::stop() { http_->stop(); }

}  // namespace psyloc
