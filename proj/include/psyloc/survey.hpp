#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "psyloc/annotation.hpp"
#include "psyloc/errors.hpp"

namespace psyloc {

inline constexpr std::size_t kQuestionsPerSurvey = 13;
inline constexpr std::size_t kControlsPerSurvey = 3;
inline constexpr std::size_t kPositivesPerDistance = 2;

class InfeasiblePool : public Error {
 public:
  using Error::Error;
};

class WrongStatus : public Error {
 public:
  using Error::Error;
};

/// Images available to the survey assembler. Controls are easy images
/// (10 m, visibility 90 or 100) used to catch inattentive workers.
struct ImagePool {
  std::vector<Annotation> positives;
  std::vector<Annotation> controls;

  /// Throws InvalidArgument on a non-conforming control or a duplicate id.
  void validate() const;
  [[nodiscard]] AnnotationIndex index() const;
};

bool is_control_stratum(const StratumKey& key);

/// Splits one annotation list into a pool: 10 m / {90,100} images become
/// controls, everything else a positive.
ImagePool split_pool(const std::vector<Annotation>& annotations);

enum class SurveyStatus { available, assigned, submitted, accepted, rejected };

std::string to_string(SurveyStatus s);
SurveyStatus survey_status_from_string(const std::string& s);

struct SurveyQuestion {
  std::string image_id;
  bool is_control = false;
  /// The image had already been placed in an earlier survey.
  bool reused = false;

  friend bool operator==(const SurveyQuestion&, const SurveyQuestion&) = default;
};

struct Survey {
  std::string survey_id;
  std::vector<SurveyQuestion> questions;
  SurveyStatus status = SurveyStatus::available;

  friend bool operator==(const Survey&, const Survey&) = default;
};

void to_json(nlohmann::json& j, const Survey& s);
void from_json(const nlohmann::json& j, Survey& s);

/// Deterministic in (pool, n_surveys, seed). Positives are drawn without
/// replacement while any unused image fits the survey's constraints; after
/// that images are reused and flagged. Throws InfeasiblePool.
std::vector<Survey> assemble_surveys(const ImagePool& pool, std::size_t n_surveys, std::uint64_t seed);

/// Human-readable violations of the survey composition rules; empty if valid.
std::vector<std::string> check_survey(const Survey& survey, const AnnotationIndex& images);

/// Status moves: claim (available -> assigned), submit (assigned ->
/// submitted), decide (submitted -> accepted | rejected), requeue
/// (rejected -> available). Each throws WrongStatus from any other state.
void claim_survey(Survey& s);
void submit_survey(Survey& s);
void decide_survey(Survey& s, bool accept);
void requeue(Survey& s);

}  // namespace psyloc
