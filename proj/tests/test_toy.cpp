#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "psyloc/toy.hpp"

using namespace psyloc;

namespace {

PsychLossParams default_params() {
  PsychLossParams p;
  p.sigma_table = default_toy_sigma_table();
  return p;
}

double far_center_error(const StratifiedReport& r) {
  double sum = 0.0;
  int n = 0;
  for (const auto& key : all_strata()) {
    if (key.distance_m() < 70 || !r.strata[key]) continue;
    sum += r.strata[key]->center_err_px;
    ++n;
  }
  return sum / n;
}

}  // namespace

TEST(Dataset, SameSeedSameScenes) {
  ToyConfig c;
  const auto a = generate_dataset(c, 20, 4);
  const auto b = generate_dataset(c, 20, 4);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  const auto other = generate_dataset(c, 20, 5);
  EXPECT_NE(a.train, other.train);
}

TEST(Dataset, NoiseFormulaAnchors) {
  ToyConfig c;
  c.base_noise_px = 0.5;
  EXPECT_DOUBLE_EQ(noise_std_px(c, {10, 100}), 0.5);
  EXPECT_DOUBLE_EQ(noise_std_px(c, {90, 10}), 45.0);
  EXPECT_DOUBLE_EQ(noise_std_px(c, {50, 50}), 5.0);
}

TEST(Dataset, ObservedNoiseMatchesFormula) {
  ToyConfig c;
  c.base_noise_px = 0.2;
  const auto ds = generate_dataset(c, 2000, 9);
  double sum2 = 0.0;
  std::size_t n = 0;
  for (const auto* part : {&ds.train, &ds.val, &ds.test}) {
    for (const auto& s : *part) {
      if (s.stratum != StratumKey(90, 10)) continue;
      const double e = s.features[0] * c.frame_px - s.gt_box.center().x;
      sum2 += e * e;
      ++n;
    }
  }
  EXPECT_NEAR(std::sqrt(sum2 / static_cast<double>(n)), 18.0, 18.0 * 0.05);
}

TEST(Dataset, SplitIsEightyTenTenByGroup) {
  ToyConfig c;
  const auto ds = generate_dataset(c, 100, 1);
  EXPECT_EQ(ds.train.size(), 4000u);
  EXPECT_EQ(ds.val.size(), 500u);
  EXPECT_EQ(ds.test.size(), 500u);
  std::set<int> train_groups, test_groups;
  for (const auto& s : ds.train) train_groups.insert(s.group);
  for (const auto& s : ds.test) test_groups.insert(s.group);
  for (int g : test_groups) EXPECT_EQ(train_groups.count(g), 0u);
  for (const auto& s : ds.test) EXPECT_FALSE(s.has_behavioral_data);
  for (const auto& s : ds.train) {
    EXPECT_GE(s.gt_box.x_min, 0.0);
    EXPECT_LE(s.gt_box.x_max(), c.frame_px);
  }
}

TEST(Dataset, RejectsTooFewScenes) { EXPECT_THROW(generate_dataset(ToyConfig{}, 9, 1), InvalidArgument); }

TEST(Dataset, ScenesRoundTrip) {
  const auto ds = generate_dataset(ToyConfig{}, 10, 2);
  std::stringstream ss;
  write_scenes(ss, ds.train);
  EXPECT_EQ(read_scenes(ss), ds.train);
}

TEST(Train, LossDoesNotIncrease) {
  ToyConfig c;
  const auto ds = generate_dataset(c, 40, 3);
  for (auto mode : {LossMode::baseline, LossMode::psych}) {
    const auto r = train(ds.train, mode, default_params(), c, 3);
    ASSERT_EQ(r.loss_curve.size(), c.epochs + 1);
    EXPECT_LE(r.loss_curve.back(), r.loss_curve.front());
    EXPECT_TRUE(r.model.finite());
  }
}

TEST(Train, ZeroNoiseConvergesBelowOnePixel) {
  ToyConfig c;
  c.base_noise_px = 0.0;
  c.epochs = 30;
  const auto ds = generate_dataset(c, 100, 11);
  for (auto mode : {LossMode::baseline, LossMode::psych}) {
    const auto r = train(ds.train, mode, default_params(), c, 11);
    const auto rep = evaluate(r.model, ds.test);
    EXPECT_LT(rep.pooled.center_err_px, 1.0) << to_string(mode);
  }
}

TEST(Train, DeterministicGivenSeed) {
  ToyConfig c;
  c.epochs = 3;
  const auto ds = generate_dataset(c, 20, 6);
  const auto a = train(ds.train, LossMode::psych, default_params(), c, 6);
  const auto b = train(ds.train, LossMode::psych, default_params(), c, 6);
  EXPECT_EQ(a.model, b.model);
  EXPECT_EQ(a.loss_curve, b.loss_curve);
  const auto other = train(ds.train, LossMode::psych, default_params(), c, 7);
  EXPECT_NE(a.model.params(), other.model.params());
}

TEST(Train, BaselineRecoveryIsBitIdentical) {
  ToyConfig c;
  c.epochs = 4;
  PsychLossParams p = default_params();
  p.A = 0.0;
  p.B = 1.0;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto ds = generate_dataset(c, 20, seed);
    for (auto& s : ds.train) s.has_behavioral_data = false;
    const auto base = train(ds.train, LossMode::baseline, p, c, seed);
    const auto psych = train(ds.train, LossMode::psych, p, c, seed);
    EXPECT_EQ(base.model.params(), psych.model.params()) << seed;
    EXPECT_EQ(base.loss_curve, psych.loss_curve) << seed;
  }
}

TEST(Train, HiddenLayerVariantTrains) {
  ToyConfig c;
  c.hidden_units = 8;
  c.epochs = 3;
  const auto ds = generate_dataset(c, 20, 8);
  const auto r = train(ds.train, LossMode::psych, default_params(), c, 8);
  EXPECT_LE(r.loss_curve.back(), r.loss_curve.front());
  const auto again = Regressor::from_json(r.model.to_json());
  EXPECT_EQ(again, r.model);
}

TEST(Train, DivergenceIsReported) {
  ToyConfig c;
  c.learning_rate = 1e307;
  c.epochs = 2;
  const auto ds = generate_dataset(c, 10, 1);
  EXPECT_THROW(train(ds.train, LossMode::baseline, default_params(), c, 1), DivergedLoss);
}

TEST(Train, EmptyTrainingSetIsRejected) {
  EXPECT_THROW(train({}, LossMode::baseline, default_params(), ToyConfig{}, 1), InvalidArgument);
}

TEST(Model, JsonRoundTripPredictsIdentically) {
  ToyConfig c;
  c.epochs = 2;
  const auto ds = generate_dataset(c, 10, 4);
  const auto r = train(ds.train, LossMode::baseline, default_params(), c, 4);
  const auto back = Regressor::from_json(nlohmann::json::parse(r.model.to_json().dump()));
  for (const auto& s : ds.test) EXPECT_EQ(back.predict(s.features), r.model.predict(s.features));
}

TEST(Harness, PsychNoWorseOnFarStrataOverFiveSeeds) {
  ToyConfig c;
  const auto p = default_params();
  double base = 0.0, psych = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    base += far_center_error(run_toy(c, p, LossMode::baseline, seed).report);
    psych += far_center_error(run_toy(c, p, LossMode::psych, seed).report);
  }
  EXPECT_LE(psych / 5.0, base / 5.0);
}

TEST(SigmaDefaults, ToyTableFallsWithDifficulty) {
  const auto t = default_toy_sigma_table();
  EXPECT_NEAR(t.sigma({10, 100}), 1.0, 1e-9);
  EXPECT_NEAR(t.sigma({90, 10}), 95.0, 1e-9);
  for (const auto& key : all_strata()) {
    if (key.distance_m() < 90) EXPECT_LE(t.sigma(key), t.sigma(StratumKey(key.distance_m() + 20, key.visibility_pct())));
  }
}
