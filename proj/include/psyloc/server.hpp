#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include <json.hpp>

#include "psyloc/store.hpp"

namespace httplib {
class Server;
}

namespace psyloc {

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

/// The JSON API, independent of the transport.
///
///   POST /sessions                      {worker_id}
///   POST /sessions/{id}/consent         {acknowledge: consent|instructions|samples}
///   GET  /sessions/{id}/next
///   POST /sessions/{id}/practice        {selections: [circle x3]}
///   POST /sessions/{id}/answers         {question_idx, events, final_selection, response_time_ms,
///                                        event_key?, partial?}
///   GET  /sessions/{id}/score
///   POST /admin/review/{session_id}     {dry_run?}
///   POST /admin/requeue/{survey_id}
///
/// Illegal state changes answer 409, malformed input 400, unknown ids 404.
class Api {
 public:
  explicit Api(ExperimentStore& store) : store_(store) {}

  ApiResponse dispatch(const std::string& method, const std::string& path, const std::string& body);

 private:
  ApiResponse next(const std::string& sid);

  ExperimentStore& store_;
};

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8080;
  /// Served at GET /images/{id}; the file is <images_dir>/<id>.<ext>.
  std::filesystem::path images_dir;
};

/// HTTP front end (cpp-httplib) over Api.
class ExperimentServer {
 public:
  ExperimentServer(ExperimentStore& store, ServerOptions options);
  ~ExperimentServer();

  /// Binds; returns the bound port (useful with port 0). Throws Error.
  int bind();
  /// Serves until stop(); call bind() first.
  void run();
  void stop();

 private:
  Api api_;
  ServerOptions options_;
  std::unique_ptr<httplib::Server> http_;
};

}  // namespace psyloc
