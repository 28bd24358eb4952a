#include <gtest/gtest.h>

#include <cmath>

#include "psyloc/errors.hpp"
#include "psyloc/geometry.hpp"
#include "psyloc/rng.hpp"
#include "support/oracles.hpp"

using namespace psyloc;

TEST(Box, CheckedRejectsDegenerateExtent) {
  EXPECT_THROW(Box::checked(0, 0, 0, 5), InvalidArgument);
  EXPECT_THROW(Box::checked(0, 0, 5, -1), InvalidArgument);
  EXPECT_NO_THROW(Box::checked(-3, 2, 1, 1));
}

TEST(Box, CenterIsMidpoint) {
  const Box b{10, 20, 30, 40};
  EXPECT_DOUBLE_EQ(b.center().x, 25);
  EXPECT_DOUBLE_EQ(b.center().y, 40);
  EXPECT_DOUBLE_EQ(box_center(b).x, 25);
}

TEST(CircleSelection, CheckedRejectsNonPositiveRadius) {
  EXPECT_THROW(CircleSelection::checked(0, 0, 0), InvalidArgument);
  EXPECT_NO_THROW(CircleSelection::checked(0, 0, 1e-6));
}

TEST(BoxIou, IdenticalDisjointAndHalf) {
  const Box a{0, 0, 10, 10};
  EXPECT_DOUBLE_EQ(box_iou(a, a), 1.0);
  EXPECT_DOUBLE_EQ(box_iou(a, {20, 20, 5, 5}), 0.0);
  EXPECT_DOUBLE_EQ(box_iou(a, {5, 0, 10, 10}), 50.0 / 150.0);
  EXPECT_DOUBLE_EQ(box_iou(a, {10, 0, 10, 10}), 0.0);  // touching edges
}

TEST(CircleBoxIou, InscribedCircleIsPiOverFour) {
  const double iou = circle_box_iou({5, 5, 5}, {0, 0, 10, 10});
  EXPECT_NEAR(iou, M_PI / 4.0, 1e-12);
}

TEST(CircleBoxIou, DisjointIsZero) {
  EXPECT_EQ(circle_box_iou({0, 0, 1}, {5, 5, 1, 1}), 0.0);
  // Circle touching a corner from outside.
  EXPECT_EQ(circle_box_iou({0, 0, 1}, {std::sqrt(0.5), std::sqrt(0.5), 1, 1}), 0.0);
}

TEST(CircleBoxIou, BoxInsideCircle) {
  const CircleSelection c{0, 0, 10};
  const Box b{-1, -1, 2, 2};
  EXPECT_NEAR(circle_box_iou(c, b), 4.0 / (M_PI * 100.0), 1e-12);
}

TEST(CircleBoxIntersection, HalfPlaneCuts) {
  // Box covering the right half of the circle and beyond.
  EXPECT_NEAR(circle_box_intersection_area({0, 0, 2}, {0, -5, 10, 10}), M_PI * 2.0, 1e-12);
  // Quarter.
  EXPECT_NEAR(circle_box_intersection_area({0, 0, 2}, {0, 0, 10, 10}), M_PI, 1e-12);
}

TEST(CircleBoxIntersection, SymmetricUnderReflection) {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const CircleSelection c{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(0.1, 6)};
    const Box b{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(0.1, 6), rng.uniform(0.1, 6)};
    const CircleSelection cm{-c.cx, c.cy, c.radius};
    const Box bm{-b.x_max(), b.y_min, b.width, b.height};
    EXPECT_NEAR(circle_box_intersection_area(c, b), circle_box_intersection_area(cm, bm), 1e-9);
  }
}

TEST(CircleBoxIou, MatchesSupersamplingOracle) {
  Rng rng(11);
  for (int i = 0; i < 25; ++i) {
    const Box b{rng.uniform(0, 50), rng.uniform(0, 50), rng.uniform(2, 40), rng.uniform(2, 40)};
    const CircleSelection c{rng.uniform(-10, 90), rng.uniform(-10, 90), rng.uniform(1, 40)};
    EXPECT_NEAR(circle_box_iou(c, b), oracle::circle_box_iou_sampled(c, b, 600), 2e-3) << i;
  }
}

TEST(CircleBoxIou, BoundedInUnitInterval) {
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const Box b{rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(0.01, 20), rng.uniform(0.01, 20)};
    const CircleSelection c{rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(0.01, 20)};
    const double v = circle_box_iou(c, b);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}
