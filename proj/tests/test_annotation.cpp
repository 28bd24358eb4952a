#include <gtest/gtest.h>

#include <sstream>

#include "psyloc/annotation.hpp"
#include "support/fixtures.hpp"

using namespace psyloc;

TEST(StratumKey, RejectsValuesOutsideEnumerations) {
  EXPECT_THROW(StratumKey(20, 50), InvalidArgument);
  EXPECT_THROW(StratumKey(10, 55), InvalidArgument);
  EXPECT_THROW(StratumKey(10, 0), InvalidArgument);
}

TEST(StratumKey, IndexRoundTrips) {
  for (std::size_t i = 0; i < kStrataCount; ++i) EXPECT_EQ(StratumKey::from_index(i).index(), i);
  EXPECT_EQ(StratumKey(30, 20).index(), 11u);
  EXPECT_EQ(all_strata().size(), 50u);
}

TEST(Annotation, ValidateCatchesBoxOutsideImage) {
  auto a = fixture::make_annotation("x", 1, 10, 100, {990, 10, 20, 20});
  EXPECT_THROW(a.validate(), InvalidArgument);
  a.gt_box = {0, 0, 10, 10};
  EXPECT_NO_THROW(a.validate());
  a.actor_id = 101;
  EXPECT_THROW(a.validate(), InvalidArgument);
}

TEST(Annotation, JsonLinesRoundTrip) {
  std::vector<Annotation> in{fixture::make_annotation("a", 3, 50, 40), fixture::make_annotation("b", 7, 90, 10)};
  std::stringstream ss;
  write_annotations(ss, in);
  EXPECT_EQ(read_annotations(ss), in);
}

TEST(Annotation, ParseErrorNamesTheLine) {
  std::stringstream ss;
  write_annotations(ss, {fixture::make_annotation("a", 3, 50, 40)});
  ss << "\n{\"image_id\": \"b\"}\n";
  try {
    read_annotations(ss);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(Annotation, IndexRejectsDuplicates) {
  EXPECT_THROW(index_annotations({fixture::make_annotation("a", 1, 10, 10), fixture::make_annotation("a", 2, 10, 10)}),
               InvalidArgument);
}
