#pragma once

// Builders shared by the tests: annotation pools, trails and full sessions.

#include <string>
#include <vector>

#include "psyloc/annotation.hpp"
#include "psyloc/behavior.hpp"
#include "psyloc/rng.hpp"
#include "psyloc/survey.hpp"

namespace psyloc::fixture {

inline Annotation make_annotation(std::string id, int actor, int distance, int visibility, Box box = {100, 100, 40, 90},
                                  int w = 1000, int h = 800) {
  Annotation a;
  a.image_id = std::move(id);
  a.actor_id = actor;
  a.distance_m = distance;
  a.visibility_pct = visibility;
  a.gt_box = box;
  a.image_width_px = w;
  a.image_height_px = h;
  return a;
}

/// 100 actors x 50 strata minus 117 images (4,883 positives) and 768 controls.
/// Two or three images are dropped from every cell so each visibility label
/// keeps 488 or 489 images and each distance 976 or 977.
inline ImagePool paper_sized_pool() {
  int extra[5][10] = {};
  int k = 0;
  for (int v = 0; v < 10; ++v) {
    for (int t = 0; t < (v < 7 ? 2 : 1); ++t) extra[k++ % 5][v] = 1;
  }
  ImagePool pool;
  for (const auto& key : all_strata()) {
    const int drop = 2 + extra[key.distance_index()][key.visibility_index()];
    for (int actor = drop + 1; actor <= 100; ++actor) {
      pool.positives.push_back(make_annotation("p" + std::to_string(key.index()) + "-" + std::to_string(actor), actor,
                                               key.distance_m(), key.visibility_pct(), {1800, 1000, 40, 90}, 3840,
                                               2160));
    }
  }
  for (int i = 0; i < 768; ++i) {
    pool.controls.push_back(make_annotation("c" + std::to_string(i), 1 + i % 100, 10, i % 2 == 0 ? 100 : 90,
                                            {1800, 1000, 200, 400}, 3840, 2160));
  }
  return pool;
}

/// The smallest pool that admits one survey: one positive per visibility,
/// two per distance, ten distinct actors, three controls.
inline ImagePool minimal_pool() {
  ImagePool pool;
  for (int v = 0; v < 10; ++v) {
    pool.positives.push_back(
        make_annotation("m" + std::to_string(v), v + 1, kDistancesM[v / 2], kVisibilitiesPct[v]));
  }
  for (int i = 0; i < 3; ++i) pool.controls.push_back(make_annotation("mc" + std::to_string(i), 50 + i, 10, 100));
  return pool;
}

/// Random pool with `actors` actors per cell over the given distances.
inline ImagePool random_pool(Rng& rng, int actors, int controls) {
  ImagePool pool;
  int id = 0;
  for (const auto& key : all_strata()) {
    for (int a = 1; a <= actors; ++a) {
      if (rng.bernoulli(0.2)) continue;
      pool.positives.push_back(make_annotation("r" + std::to_string(id++), a, key.distance_m(), key.visibility_pct()));
    }
  }
  for (int i = 0; i < controls; ++i) {
    pool.controls.push_back(make_annotation("rc" + std::to_string(i), 1 + i % actors, 10, rng.bernoulli(0.5) ? 100 : 90));
  }
  return pool;
}

/// Trail of `n` events wandering over a w x h image; the last event sits at
/// `end` with radius r.
inline std::vector<TrailEvent> random_trail(Rng& rng, int n, double w, double h, double r) {
  std::vector<TrailEvent> out;
  std::int64_t t = 0;
  for (int i = 0; i < n; ++i) {
    t += 20 + static_cast<std::int64_t>(rng.index(200));
    out.push_back({t, rng.uniform(0, w), rng.uniform(0, h), 1 + static_cast<int>(rng.index(3)), r});
  }
  return out;
}

/// Raw record whose trail is two events ending on `selection`.
inline BehavioralRecord make_record(const Annotation& a, const CircleSelection& selection, std::string session = "s1",
                                    std::string worker = "w1", std::int64_t rt_ms = 4000) {
  BehavioralRecord r;
  r.session_id = std::move(session);
  r.worker_id = std::move(worker);
  r.image_id = a.image_id;
  r.events = {{0, a.image_width_px / 2.0, a.image_height_px / 2.0, 1, selection.radius},
              {rt_ms / 2, selection.cx, selection.cy, 2, selection.radius}};
  r.final_selection = selection;
  r.response_time_ms = rt_ms;
  return r;
}

/// Enriched record with a chosen iou and stratum, for analytics tests.
inline BehavioralRecord scored_record(int distance, int visibility, double iou, std::int64_t rt_ms = 3000,
                                      bool control = false) {
  BehavioralRecord r;
  r.session_id = "s";
  r.worker_id = "w";
  r.image_id = "i";
  r.is_control = control;
  r.events = {{0, 10, 10, 1, 5}};
  r.final_selection = {10, 10, 5};
  r.response_time_ms = rt_ms;
  r.iou = iou;
  r.stratum = StratumKey(distance, visibility);
  return r;
}

/// A sweep over the whole image in rows, ending on `target`.
inline std::vector<TrailEvent> sweep_trail(const Annotation& a, const CircleSelection& target) {
  std::vector<TrailEvent> out;
  std::int64_t t = 0;
  const double step = target.radius * 1.5;
  for (double y = step / 2; y < a.image_height_px; y += step) {
    for (double x = step / 2; x < a.image_width_px; x += step) {
      out.push_back({t, x, y, 1, target.radius});
      t += 50;
    }
  }
  out.push_back({t, target.cx, target.cy, 1, target.radius});
  return out;
}

}  // namespace psyloc::fixture
