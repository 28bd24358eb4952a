#include "psyloc/survey.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <unordered_set>

#include "psyloc/rng.hpp"

namespace psyloc {

bool is_control_stratum(const StratumKey& key) {
  return key.distance_m() == 10 && (key.visibility_pct() == 90 || key.visibility_pct() == 100);
}

void ImagePool::validate() const {
  std::unordered_set<std::string> ids;
  for (const auto* list : {&positives, &controls}) {
    for (const auto& a : *list) {
      a.validate();
      if (!ids.insert(a.image_id).second) throw InvalidArgument("image '" + a.image_id + "' appears twice in the pool");
    }
  }
  for (const auto& c : controls) {
    if (!is_control_stratum(c.stratum())) {
      throw InvalidArgument("control image '" + c.image_id + "' is not at 10 m with visibility 90 or 100");
    }
  }
}

AnnotationIndex ImagePool::index() const {
  std::vector<Annotation> all = positives;
  all.insert(all.end(), controls.begin(), controls.end());
  return index_annotations(all);
}

ImagePool split_pool(const std::vector<Annotation>& annotations) {
  ImagePool pool;
  for (const auto& a : annotations) {
    (is_control_stratum(a.stratum()) ? pool.controls : pool.positives).push_back(a);
  }
  return pool;
}

std::string to_string(SurveyStatus s) {
  switch (s) {
    case SurveyStatus::available: return "available";
    case SurveyStatus::assigned: return "assigned";
    case SurveyStatus::submitted: return "submitted";
    case SurveyStatus::accepted: return "accepted";
    case SurveyStatus::rejected: return "rejected";
  }
  return "?";
}

SurveyStatus survey_status_from_string(const std::string& s) {
  for (auto v : {SurveyStatus::available, SurveyStatus::assigned, SurveyStatus::submitted, SurveyStatus::accepted,
                 SurveyStatus::rejected}) {
    if (to_string(v) == s) return v;
  }
  throw ParseError("unknown survey status '" + s + "'");
}

void to_json(nlohmann::json& j, const Survey& s) {
  nlohmann::json qs = nlohmann::json::array();
  for (const auto& q : s.questions) {
    qs.push_back({{"image_id", q.image_id}, {"is_control", q.is_control}, {"reused", q.reused}});
  }
  j = {{"survey_id", s.survey_id}, {"status", to_string(s.status)}, {"questions", qs}};
}

void from_json(const nlohmann::json& j, Survey& s) {
  s.survey_id = j.at("survey_id").get<std::string>();
  s.status = survey_status_from_string(j.at("status").get<std::string>());
  s.questions.clear();
  for (const auto& q : j.at("questions")) {
    s.questions.push_back({q.at("image_id").get<std::string>(), q.at("is_control").get<bool>(),
                           q.value("reused", false)});
  }
}

namespace {

constexpr std::size_t kSlots = kDistancesM.size() * kPositivesPerDistance;
static_assert(kSlots == kVisibilitiesPct.size(), "one positive per visibility label");

// Minimum-cost perfect assignment on a square matrix (Hungarian method with
// potentials). Returns row -> column.
std::array<std::size_t, kSlots> min_cost_assignment(const std::array<std::array<double, kSlots>, kSlots>& cost) {
  constexpr std::size_t n = kSlots;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<bool> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::array<std::size_t, kSlots> row_to_col{};
  for (std::size_t j = 1; j <= n; ++j) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

// Max flow on a dense capacity matrix (Edmonds-Karp). Neighbours are visited
// in `order`, which lets callers randomise which of several maximum flows is
// found. `cap` is left holding the residual capacities.
std::size_t max_flow(std::vector<std::vector<std::size_t>>& cap, std::size_t s, std::size_t t,
                     const std::vector<std::size_t>& order) {
  const std::size_t n = cap.size();
  std::size_t total = 0;
  for (;;) {
    std::vector<std::size_t> prev(n, n);
    prev[s] = s;
    std::vector<std::size_t> queue{s};
    for (std::size_t head = 0; head < queue.size() && prev[t] == n; ++head) {
      const std::size_t u = queue[head];
      for (std::size_t v : order) {
        if (prev[v] == n && cap[u][v] > 0) {
          prev[v] = u;
          queue.push_back(v);
        }
      }
    }
    if (prev[t] == n) return total;
    std::size_t push = std::numeric_limits<std::size_t>::max();
    for (std::size_t v = t; v != s; v = prev[v]) push = std::min(push, cap[prev[v]][v]);
    for (std::size_t v = t; v != s; v = prev[v]) {
      cap[prev[v]][v] -= push;
      cap[v][prev[v]] += push;
    }
    total += push;
  }
}

constexpr std::size_t kDistances = kDistancesM.size();
using CellMatrix = std::array<std::array<std::size_t, kDistances>, kSlots>;  // [visibility][distance]

// Node layout: source, one node per visibility, one per distance, sink.
constexpr std::size_t kSource = 0;
constexpr std::size_t kSink = 1 + kSlots + kDistances;

// Largest sub-matrix of `avail` with every visibility row summing to `rows`
// and every distance column to `cols_per_distance * rows`; nullopt if none.
std::optional<CellMatrix> regular_submatrix(const CellMatrix& avail, std::size_t rows, std::size_t per_distance,
                                            const std::vector<std::size_t>& order) {
  std::vector<std::vector<std::size_t>> cap(kSink + 1, std::vector<std::size_t>(kSink + 1, 0));
  for (std::size_t v = 0; v < kSlots; ++v) {
    cap[kSource][1 + v] = rows;
    for (std::size_t d = 0; d < kDistances; ++d) cap[1 + v][1 + kSlots + d] = avail[v][d];
  }
  for (std::size_t d = 0; d < kDistances; ++d) cap[1 + kSlots + d][kSink] = per_distance * rows;
  if (max_flow(cap, kSource, kSink, order) != rows * kSlots) return std::nullopt;
  CellMatrix out{};
  for (std::size_t v = 0; v < kSlots; ++v) {
    for (std::size_t d = 0; d < kDistances; ++d) out[v][d] = cap[1 + kSlots + d][1 + v];
  }
  return out;
}

// Splits the fresh images into as many complete surveys as possible, as cell
// plans (per visibility, the distance index). A matrix whose rows all sum to K
// and columns to 2K is a sum of K single-survey patterns (the assignment
// polytope is integral), so peeling one pattern at a time never gets stuck.
std::vector<std::array<std::size_t, kSlots>> plan_fresh_surveys(const CellMatrix& fresh, std::size_t wanted,
                                                                Rng& rng) {
  std::vector<std::size_t> order(kSink + 1);
  std::iota(order.begin(), order.end(), 0);
  std::size_t k = wanted;
  for (std::size_t v = 0; v < kSlots; ++v) {
    std::size_t row = 0;
    for (std::size_t d = 0; d < kDistances; ++d) row += fresh[v][d];
    k = std::min(k, row);
  }
  for (std::size_t d = 0; d < kDistances; ++d) {
    std::size_t col = 0;
    for (std::size_t v = 0; v < kSlots; ++v) col += fresh[v][d];
    k = std::min(k, col / kPositivesPerDistance);
  }
  std::optional<CellMatrix> remaining;
  for (; k > 0; --k) {
    rng.shuffle(order);
    remaining = regular_submatrix(fresh, k, kPositivesPerDistance, order);
    if (remaining) break;
  }
  std::vector<std::array<std::size_t, kSlots>> plans;
  for (; k > 0; --k) {
    rng.shuffle(order);
    CellMatrix support{};
    for (std::size_t v = 0; v < kSlots; ++v) {
      for (std::size_t d = 0; d < kDistances; ++d) support[v][d] = (*remaining)[v][d] > 0 ? 1 : 0;
    }
    const auto pattern = regular_submatrix(support, 1, kPositivesPerDistance, order);
    if (!pattern) throw InfeasiblePool("internal: survey plan could not be decomposed");
    std::array<std::size_t, kSlots> plan{};
    for (std::size_t v = 0; v < kSlots; ++v) {
      for (std::size_t d = 0; d < kDistances; ++d) {
        if ((*pattern)[v][d] == 1) {
          plan[v] = d;
          --(*remaining)[v][d];
        }
      }
    }
    plans.push_back(plan);
  }
  rng.shuffle(plans);
  return plans;
}

class Assembler {
 public:
  Assembler(const ImagePool& pool, std::size_t n_surveys, std::uint64_t seed) : pool_(pool), rng_(seed) {
    uses_.assign(pool.positives.size(), 0);
    for (std::size_t i = 0; i < pool.positives.size(); ++i) {
      cells_[pool.positives[i].stratum().index()].push_back(i);
    }
    for (auto& c : cells_) rng_.shuffle(c);
    fresh_ = {};
    for (std::size_t k = 0; k < kStrataCount; ++k) fresh_[k] = cells_[k].size();
    control_deck_.resize(pool.controls.size());
    std::iota(control_deck_.begin(), control_deck_.end(), 0);
    rng_.shuffle(control_deck_);
    CellMatrix counts{};
    for (std::size_t k = 0; k < kStrataCount; ++k) {
      const auto key = StratumKey::from_index(k);
      counts[key.visibility_index()][key.distance_index()] = cells_[k].size();
    }
    plans_ = plan_fresh_surveys(counts, n_surveys, rng_);
  }

  Survey next(std::string survey_id) {
    Survey s;
    s.survey_id = std::move(survey_id);
    const auto cells = next_plan_ < plans_.size() ? planned_cells(plans_[next_plan_++]) : choose_cells();
    const auto picks = choose_images(cells);
    for (std::size_t i : picks) {
      s.questions.push_back({pool_.positives[i].image_id, false, uses_[i] > 0});
      if (uses_[i] == 0) --fresh_[pool_.positives[i].stratum().index()];
      ++uses_[i];
    }
    for (std::size_t i = 0; i < kControlsPerSurvey; ++i) {
      const auto [idx, reused] = next_control(s);
      s.questions.push_back({pool_.controls[idx].image_id, true, reused});
    }
    rng_.shuffle(s.questions);
    return s;
  }

 private:
  static std::array<std::size_t, kSlots> planned_cells(const std::array<std::size_t, kSlots>& plan) {
    std::array<std::size_t, kSlots> out{};
    for (std::size_t v = 0; v < kSlots; ++v) out[v] = StratumKey(kDistancesM[plan[v]], kVisibilitiesPct[v]).index();
    return out;
  }

  // For each visibility label, the stratum (cell) index it is asked at.
  std::array<std::size_t, kSlots> choose_cells() {
    // Rows are visibility labels, columns are distance slots (two per distance).
    // A cell with an unused image is worth far more than one without, and
    // fuller cells are drained first so the pool empties evenly.
    constexpr double kForbidden = 1e12;
    std::array<std::array<double, kSlots>, kSlots> cost{};
    for (std::size_t v = 0; v < kSlots; ++v) {
      for (std::size_t slot = 0; slot < kSlots; ++slot) {
        const std::size_t d = slot / kPositivesPerDistance;
        const std::size_t cell = StratumKey(kDistancesM[d], kVisibilitiesPct[v]).index();
        if (cells_[cell].empty()) {
          cost[v][slot] = kForbidden;
        } else {
          const double fresh = static_cast<double>(fresh_[cell]);
          cost[v][slot] = -((fresh > 0 ? 1e6 : 0.0) + fresh + 0.5 * rng_.uniform());
        }
      }
    }
    const auto assign = min_cost_assignment(cost);
    std::array<std::size_t, kSlots> out{};
    for (std::size_t v = 0; v < kSlots; ++v) {
      if (cost[v][assign[v]] >= kForbidden) {
        throw InfeasiblePool("no assignment of visibility labels to distances (two per distance) is covered by the pool");
      }
      const std::size_t d = assign[v] / kPositivesPerDistance;
      out[v] = StratumKey(kDistancesM[d], kVisibilitiesPct[v]).index();
    }
    return out;
  }

  // Candidates for a cell in preference order, at most one per actor:
  // unused images first (pool order shuffled once), then least-used.
  std::vector<std::size_t> candidates(std::size_t cell) const {
    std::vector<std::size_t> order = cells_[cell];
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return uses_[a] < uses_[b]; });
    std::vector<std::size_t> out;
    std::set<int> actors;
    for (std::size_t i : order) {
      if (actors.insert(pool_.positives[i].actor_id).second) out.push_back(i);
    }
    return out;
  }

  std::size_t fresh_count(const std::vector<std::size_t>& c) const {
    return static_cast<std::size_t>(std::count_if(c.begin(), c.end(), [&](std::size_t i) { return uses_[i] == 0; }));
  }

  std::vector<std::size_t> choose_images(const std::array<std::size_t, kSlots>& cells) {
    std::array<std::vector<std::size_t>, kSlots> cand;
    for (std::size_t v = 0; v < kSlots; ++v) cand[v] = candidates(cells[v]);
    std::array<std::size_t, kSlots> order{};
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return fresh_count(cand[a]) < fresh_count(cand[b]); });

    std::array<std::size_t, kSlots> pick{};
    std::set<int> actors;
    std::size_t budget = 0;
    // Depth-first over slots; `reuse_left` caps how many picks may be images
    // already placed in earlier surveys.
    const auto search = [&](auto&& self, std::size_t depth, std::size_t reuse_left) -> bool {
      if (depth == kSlots) return true;
      const std::size_t v = order[depth];
      for (std::size_t i : cand[v]) {
        if (budget == 0) return false;
        --budget;
        const bool reused = uses_[i] > 0;
        if (reused && reuse_left == 0) break;  // candidates are sorted fresh first
        const int actor = pool_.positives[i].actor_id;
        if (actors.count(actor) != 0) continue;
        actors.insert(actor);
        pick[v] = i;
        if (self(self, depth + 1, reuse_left - (reused ? 1 : 0))) return true;
        actors.erase(actor);
      }
      return false;
    };
    bool found = false;
    for (std::size_t allowed = 0; allowed <= kSlots && !found; ++allowed) {
      budget = 20000;
      actors.clear();
      found = search(search, 0, allowed);
    }
    if (!found) throw InfeasiblePool("not enough distinct actors to fill a survey");
    return {pick.begin(), pick.end()};
  }

  std::pair<std::size_t, bool> next_control(const Survey& s) {
    if (pool_.controls.size() < kControlsPerSurvey) throw InfeasiblePool("fewer than three control images");
    for (;;) {
      if (deck_pos_ == control_deck_.size()) {
        rng_.shuffle(control_deck_);
        deck_pos_ = 0;
        ++deck_round_;
      }
      const std::size_t idx = control_deck_[deck_pos_++];
      const auto& id = pool_.controls[idx].image_id;
      const bool taken = std::any_of(s.questions.begin(), s.questions.end(),
                                     [&](const SurveyQuestion& q) { return q.image_id == id; });
      if (!taken) return {idx, deck_round_ > 0};
    }
  }

  const ImagePool& pool_;
  Rng rng_;
  std::array<std::vector<std::size_t>, kStrataCount> cells_;
  std::array<std::size_t, kStrataCount> fresh_{};
  std::vector<std::size_t> uses_;
  std::vector<std::size_t> control_deck_;
  std::size_t deck_pos_ = 0;
  std::size_t deck_round_ = 0;
  std::vector<std::array<std::size_t, kSlots>> plans_;
  std::size_t next_plan_ = 0;
};

}  // namespace

std::vector<Survey> assemble_surveys(const ImagePool& pool, std::size_t n_surveys, std::uint64_t seed) {
  pool.validate();
  Assembler assembler(pool, n_surveys, seed);
  std::vector<Survey> out;
  out.reserve(n_surveys);
  const int width = n_surveys < 10000 ? 4 : 8;
  for (std::size_t i = 0; i < n_surveys; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "survey-%0*zu", width, i + 1);
    out.push_back(assembler.next(id));
  }
  return out;
}

std::vector<std::string> check_survey(const Survey& survey, const AnnotationIndex& images) {
  std::vector<std::string> problems;
  if (survey.questions.size() != kQuestionsPerSurvey) {
    problems.push_back("has " + std::to_string(survey.questions.size()) + " questions, expected 13");
  }
  std::size_t controls = 0;
  std::array<std::size_t, kDistancesM.size()> per_distance{};
  std::set<int> actors;
  std::set<int> visibilities;
  std::set<std::string> ids;
  for (const auto& q : survey.questions) {
    if (!ids.insert(q.image_id).second) problems.push_back("image '" + q.image_id + "' appears twice");
    const auto it = images.find(q.image_id);
    if (it == images.end()) {
      problems.push_back("unknown image '" + q.image_id + "'");
      continue;
    }
    const Annotation& a = it->second;
    if (q.is_control) {
      ++controls;
      if (!is_control_stratum(a.stratum())) problems.push_back("control '" + a.image_id + "' is not an easy image");
      continue;
    }
    ++per_distance[a.stratum().distance_index()];
    if (!actors.insert(a.actor_id).second) problems.push_back("actor " + std::to_string(a.actor_id) + " repeats");
    if (!visibilities.insert(a.visibility_pct).second) {
      problems.push_back("visibility " + std::to_string(a.visibility_pct) + " repeats");
    }
  }
  if (controls != kControlsPerSurvey) problems.push_back("has " + std::to_string(controls) + " controls, expected 3");
  for (std::size_t d = 0; d < per_distance.size(); ++d) {
    if (per_distance[d] != kPositivesPerDistance) {
      problems.push_back(std::to_string(per_distance[d]) + " positives at " + std::to_string(kDistancesM[d]) +
                         " m, expected 2");
    }
  }
  return problems;
}

namespace {

void move_status(Survey& s, SurveyStatus from, SurveyStatus to) {
  if (s.status != from) {
    throw WrongStatus("survey " + s.survey_id + " is " + to_string(s.status) + ", expected " + to_string(from));
  }
  s.status = to;
}

}  // namespace

void claim_survey(Survey& s) { move_status(s, SurveyStatus::available, SurveyStatus::assigned); }
void submit_survey(Survey& s) { move_status(s, SurveyStatus::assigned, SurveyStatus::submitted); }
void decide_survey(Survey& s, bool accept) {
  move_status(s, SurveyStatus::submitted, accept ? SurveyStatus::accepted : SurveyStatus::rejected);
}
void requeue(Survey& s) { move_status(s, SurveyStatus::rejected, SurveyStatus::available); }

}  // namespace psyloc
