#pragma once

// Scratch data directories and a scripted worker for the store and server tests.

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <string>
#include <vector>

#include "psyloc/store.hpp"
#include "support/fixtures.hpp"

namespace psyloc::fixture {

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("psyloc_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  [[nodiscard]] const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::vector<Annotation> practice_set() {
  return {make_annotation("prac-a", 1, 10, 100), make_annotation("prac-b", 2, 50, 50),
          make_annotation("prac-c", 3, 90, 10)};
}

/// Twelve actors per cell, so a handful of surveys assemble without reuse.
inline ImagePool service_pool() {
  Rng rng(404);
  return random_pool(rng, 12, 9);
}

struct ServiceSetup {
  ImagePool pool = service_pool();
  std::vector<Annotation> practice = practice_set();
  std::vector<Survey> surveys = assemble_surveys(pool, 3, 11);

  [[nodiscard]] StoreConfig config(const std::filesystem::path& dir, bool multiple = false) const {
    StoreConfig c;
    c.data_dir = dir;
    c.allow_multiple_surveys = multiple;
    return c;
  }
};

inline std::vector<CircleSelection> practice_selections(const std::vector<Annotation>& practice, bool pass) {
  std::vector<CircleSelection> out;
  for (std::size_t i = 0; i < practice.size(); ++i) {
    const auto c = practice[i].gt_box.center();
    const bool hit = pass || i > 0;
    out.push_back(hit ? CircleSelection{c.x, c.y, 10} : CircleSelection{990, 790, 5});
  }
  return out;
}

/// Trail and selection for one question; `careful` sweeps the whole image and
/// hits the box, otherwise a single quick miss.
struct ScriptedAnswer {
  std::vector<TrailEvent> events;
  CircleSelection selection;
  std::int64_t rt_ms = 0;
};

inline ScriptedAnswer scripted_answer(const Annotation& a, bool careful) {
  ScriptedAnswer out;
  if (careful) {
    out.selection = {a.gt_box.center().x, a.gt_box.center().y, 40};
    out.events = sweep_trail(a, out.selection);
    out.rt_ms = out.events.back().t_ms + 250;
  } else {
    out.selection = {a.image_width_px - 4.0, a.image_height_px - 4.0, 3};
    out.events = {{0, out.selection.cx, out.selection.cy, 1, out.selection.radius}};
    out.rt_ms = 120;
  }
  return out;
}

/// Drives a new session from consent to done.
inline std::string complete_session(ExperimentStore& store, const std::string& worker, bool careful) {
  const std::string sid = store.create_session(worker);
  store.acknowledge(sid, PhaseEvent::ack_consent);
  store.acknowledge(sid, PhaseEvent::ack_instructions);
  store.acknowledge(sid, PhaseEvent::ack_samples);
  const auto sel = practice_selections(store.practice_images(), true);
  store.submit_practice(sid, sel);
  for (std::size_t q = 0; q < kQuestionsPerSurvey; ++q) {
    const Session s = store.session(sid);
    const auto ans = scripted_answer(store.images().at(s.questions[q].image_id), careful);
    store.answer(sid, q, ans.events, ans.selection, ans.rt_ms, std::nullopt);
  }
  return sid;
}

}  // namespace psyloc::fixture
