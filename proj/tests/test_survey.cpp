#include <gtest/gtest.h>

#include <set>

#include "psyloc/survey.hpp"
#include "support/fixtures.hpp"

using namespace psyloc;

TEST(Pool, ValidateRejectsOffStratumControlAndDuplicates) {
  auto pool = fixture::minimal_pool();
  EXPECT_NO_THROW(pool.validate());
  pool.controls[0].visibility_pct = 80;
  EXPECT_THROW(pool.validate(), InvalidArgument);
  pool = fixture::minimal_pool();
  pool.controls[0].image_id = pool.positives[0].image_id;
  EXPECT_THROW(pool.validate(), InvalidArgument);
}

TEST(Pool, SplitSendsEasyStrataToControls) {
  const auto pool = split_pool({fixture::make_annotation("a", 1, 10, 100), fixture::make_annotation("b", 1, 10, 90),
                                fixture::make_annotation("c", 1, 10, 80), fixture::make_annotation("d", 1, 30, 100)});
  EXPECT_EQ(pool.controls.size(), 2u);
  EXPECT_EQ(pool.positives.size(), 2u);
  EXPECT_TRUE(is_control_stratum({10, 90}));
  EXPECT_FALSE(is_control_stratum({30, 100}));
}

TEST(Assemble, MinimalPoolGivesTheUniqueSurvey) {
  const auto pool = fixture::minimal_pool();
  const auto surveys = assemble_surveys(pool, 1, 3);
  ASSERT_EQ(surveys.size(), 1u);
  EXPECT_TRUE(check_survey(surveys[0], pool.index()).empty());
  std::set<std::string> ids;
  for (const auto& q : surveys[0].questions) {
    ids.insert(q.image_id);
    EXPECT_FALSE(q.reused);
  }
  std::set<std::string> expected;
  for (const auto& a : pool.positives) expected.insert(a.image_id);
  for (const auto& a : pool.controls) expected.insert(a.image_id);
  EXPECT_EQ(ids, expected);
  EXPECT_EQ(surveys[0].status, SurveyStatus::available);
}

TEST(Assemble, SingleDistancePoolIsInfeasible) {
  ImagePool pool;
  for (int v = 0; v < 10; ++v) pool.positives.push_back(fixture::make_annotation("x" + std::to_string(v), v + 1, 50, kVisibilitiesPct[v]));
  pool.controls = fixture::minimal_pool().controls;
  EXPECT_THROW(assemble_surveys(pool, 1, 1), InfeasiblePool);
}

TEST(Assemble, TooFewControlsIsInfeasible) {
  auto pool = fixture::minimal_pool();
  pool.controls.pop_back();
  EXPECT_THROW(assemble_surveys(pool, 1, 1), InfeasiblePool);
}

TEST(Assemble, RepeatedActorsAreInfeasible) {
  auto pool = fixture::minimal_pool();
  for (auto& a : pool.positives) a.actor_id = 1;
  EXPECT_THROW(assemble_surveys(pool, 1, 1), InfeasiblePool);
}

TEST(Assemble, RandomPoolsAlwaysSatisfyInvariants) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    const auto pool = fixture::random_pool(rng, 10 + static_cast<int>(rng.index(10)), 3 + static_cast<int>(rng.index(20)));
    const auto index = pool.index();
    const auto surveys = assemble_surveys(pool, 5 + rng.index(40), seed);
    for (const auto& s : surveys) {
      const auto problems = check_survey(s, index);
      EXPECT_TRUE(problems.empty()) << "seed " << seed << ": " << (problems.empty() ? "" : problems.front());
    }
  }
}

TEST(Assemble, SameSeedIsBitIdentical) {
  Rng rng(5);
  const auto pool = fixture::random_pool(rng, 12, 12);
  EXPECT_EQ(assemble_surveys(pool, 30, 9), assemble_surveys(pool, 30, 9));
  EXPECT_NE(assemble_surveys(pool, 30, 9), assemble_surveys(pool, 30, 10));
}

TEST(Assemble, FreshImagesFirstThenFlaggedReuse) {
  Rng rng(6);
  const auto pool = fixture::random_pool(rng, 10, 6);
  const auto surveys = assemble_surveys(pool, 60, 2);
  std::set<std::string> seen;
  bool any_reuse = false;
  for (const auto& s : surveys) {
    for (const auto& q : s.questions) {
      if (q.is_control) continue;
      EXPECT_EQ(q.reused, seen.count(q.image_id) > 0) << q.image_id;
      any_reuse = any_reuse || q.reused;
      seen.insert(q.image_id);
    }
  }
  EXPECT_TRUE(any_reuse);  // 600 slots over at most 500 positives
}

TEST(Assemble, PaperSizedPoolUsesEveryPositiveBeforeReuse) {
  const auto pool = fixture::paper_sized_pool();
  ASSERT_EQ(pool.positives.size(), 4883u);
  const auto index = pool.index();
  const auto surveys = assemble_surveys(pool, 500, 7);
  ASSERT_EQ(surveys.size(), 500u);
  std::set<std::string> distinct;
  std::size_t slot = 0, first_reuse_slot = 0, reused = 0;
  for (const auto& s : surveys) {
    ASSERT_TRUE(check_survey(s, index).empty()) << s.survey_id;
    for (const auto& q : s.questions) {
      if (q.is_control) continue;
      ++slot;
      if (q.reused) {
        ++reused;
        if (first_reuse_slot == 0) first_reuse_slot = slot;
      } else {
        distinct.insert(q.image_id);
      }
    }
  }
  EXPECT_EQ(distinct.size(), 4883u);
  EXPECT_EQ(reused, 5000u - 4883u);
  // Each survey takes one image per visibility label and the scarcest label
  // holds 488 images, so 488 complete surveys is the most that can stay fresh.
  EXPECT_GT(first_reuse_slot, 4880u);
}

TEST(CheckSurvey, ReportsEachBrokenRule) {
  const auto pool = fixture::minimal_pool();
  const auto index = pool.index();
  auto s = assemble_surveys(pool, 1, 1).front();
  auto broken = s;
  broken.questions.pop_back();
  EXPECT_FALSE(check_survey(broken, index).empty());

  broken = s;
  for (auto& q : broken.questions) {
    if (q.is_control) {
      q.is_control = false;
      break;
    }
  }
  EXPECT_FALSE(check_survey(broken, index).empty());

  broken = s;
  broken.questions[0].image_id = "nope";
  EXPECT_FALSE(check_survey(broken, index).empty());
}

TEST(Status, TransitionsAndWrongStatus) {
  Survey s;
  claim_survey(s);
  EXPECT_EQ(s.status, SurveyStatus::assigned);
  EXPECT_THROW(claim_survey(s), WrongStatus);
  submit_survey(s);
  decide_survey(s, false);
  EXPECT_EQ(s.status, SurveyStatus::rejected);
  requeue(s);
  EXPECT_EQ(s.status, SurveyStatus::available);

  Survey ok;
  claim_survey(ok);
  submit_survey(ok);
  decide_survey(ok, true);
  EXPECT_THROW(requeue(ok), WrongStatus);
  EXPECT_THROW(decide_survey(ok, false), WrongStatus);
}

TEST(Status, JsonRoundTrip) {
  const auto s = assemble_surveys(fixture::minimal_pool(), 1, 4).front();
  nlohmann::json j = s;
  EXPECT_EQ(j.get<Survey>(), s);
  EXPECT_EQ(survey_status_from_string(to_string(SurveyStatus::rejected)), SurveyStatus::rejected);
  EXPECT_THROW(survey_status_from_string("lost"), ParseError);
}
