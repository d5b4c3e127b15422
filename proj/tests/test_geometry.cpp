#include <gtest/gtest.h>

#include <random>

#include "helmetcv/errors.hpp"
#include "helmetcv/geometry.hpp"
#include "oracles.hpp"

using namespace helmetcv;

namespace {

Box frame_box(double x, double y, double w, double h) { return {x, y, w, h, CoordSpace::frame()}; }

void expect_box_near(const Box& actual, const Box& expected, double rel = 1e-9) {
  auto close = [&](double a, double e) { return std::abs(a - e) <= rel * std::max(1.0, std::abs(e)); };
  EXPECT_TRUE(close(actual.x, expected.x) && close(actual.y, expected.y) && close(actual.w, expected.w) &&
              close(actual.h, expected.h))
      << "got (" << actual.x << "," << actual.y << "," << actual.w << "," << actual.h << ") expected ("
      << expected.x << "," << expected.y << "," << expected.w << "," << expected.h << ")";
}

}  // namespace

TEST(Iou, IdenticalBoxesGiveOne) {
  EXPECT_DOUBLE_EQ(iou(frame_box(3, 4, 10, 20), frame_box(3, 4, 10, 20)), 1.0);
}

TEST(Iou, DisjointBoxesGiveZero) {
  EXPECT_DOUBLE_EQ(iou(frame_box(0, 0, 10, 10), frame_box(20, 20, 5, 5)), 0.0);
}

TEST(Iou, HalfShiftedSquares) {
  // Overlap 5x10 = 50, union 100 + 100 - 50 = 150.
  EXPECT_NEAR(iou(frame_box(0, 0, 10, 10), frame_box(5, 0, 10, 10)), 50.0 / 150.0, 1e-12);
  EXPECT_NEAR(iou(frame_box(0, 0, 10, 10), frame_box(5, 0, 10, 10)), 0.33333, 1e-5);
}

TEST(Iou, DegenerateBoxesGiveZero) {
  EXPECT_DOUBLE_EQ(iou(frame_box(5, 5, 0, 0), frame_box(5, 5, 0, 0)), 0.0);
  EXPECT_DOUBLE_EQ(iou(frame_box(5, 5, 0, 10), frame_box(0, 0, 20, 20)), 0.0);
}

TEST(Iou, MismatchedSpacesAreUsageErrors) {
  const Box a = frame_box(0, 0, 10, 10);
  Box b = a;
  b.space = CoordSpace::model_input();
  EXPECT_THROW(iou(a, b), UsageError);
  b.space = CoordSpace::crop({1, 2});
  EXPECT_THROW(iou(a, b), UsageError);
}

TEST(Iou, PropertiesOnRandomBoxes) {
  std::mt19937 rng(1234);
  for (int i = 0; i < 2000; ++i) {
    const Box a = oracle::random_box(rng);
    const Box b = i % 2 ? oracle::random_box(rng, &a) : oracle::random_box(rng);
    const double ab = iou(a, b);
    EXPECT_DOUBLE_EQ(ab, iou(b, a));
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 1.0);
    EXPECT_NEAR(ab, oracle::iou(a.x, a.y, a.w, a.h, b.x, b.y, b.w, b.h), 1e-12);
    if (a.area() > 0) {
      EXPECT_NEAR(iou(a, a), 1.0, 1e-12);
    }
  }
}

TEST(ExpandBox, MarginsOnLeftRightTop) {
  const Box out = expand_box(frame_box(100, 100, 200, 300), kRiderMargins, kFrameSize);
  EXPECT_EQ(out, frame_box(50, 50, 300, 350));
}

TEST(ExpandBox, ClampsAtFrameOrigin) {
  const Box out = expand_box(frame_box(10, 10, 100, 100), kRiderMargins, kFrameSize);
  EXPECT_EQ(out, frame_box(0, 0, 160, 110));
}

TEST(ExpandBox, FullFrameUnchanged) {
  const Box full = frame_box(0, 0, 1920, 1080);
  EXPECT_EQ(expand_box(full, kRiderMargins, kFrameSize), full);
  EXPECT_EQ(expand_box(full, {500, 500, 500, 500}, kFrameSize), full);
}

TEST(ExpandBox, ClampsAtFarEdges) {
  const Box out = expand_box(frame_box(1850, 1000, 60, 80), {50, 50, 50, 50}, kFrameSize);
  EXPECT_EQ(out, frame_box(1800, 950, 120, 130));
}

TEST(ExpandBox, ContainsClampedInput) {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> pos(-100, 2000), size(0, 400), margin(0, 80);
  for (int i = 0; i < 1000; ++i) {
    const Box b = frame_box(pos(rng), pos(rng) / 2, size(rng), size(rng));
    const Margins m{margin(rng), margin(rng), margin(rng), margin(rng)};
    const Box out = expand_box(b, m, kFrameSize);
    EXPECT_TRUE(contains(out, clamp_to(b, kFrameSize), 1e-9));
    EXPECT_TRUE(contains(frame_box(0, 0, 1920, 1080), out, 1e-9));
  }
}

TEST(RescaleBox, ModelInputToFrame) {
  const Box in{480, 480, 96, 96, CoordSpace::model_input()};
  const Box out = rescale_box(in, kModelInputSize, kFrameSize, CoordSpace::frame());
  EXPECT_EQ(out, frame_box(960, 540, 192, 108));
}

TEST(RescaleBox, IdentityScale) {
  const Box b = frame_box(1.5, 2.25, 30, 40);
  EXPECT_EQ(rescale_box(b, kFrameSize, kFrameSize), b);
}

TEST(RescaleBox, ZeroSizeIsUsageError) {
  EXPECT_THROW(rescale_box(frame_box(0, 0, 1, 1), {0, 10}, kFrameSize), UsageError);
  EXPECT_THROW(rescale_box(frame_box(0, 0, 1, 1), kFrameSize, {10, 0}), UsageError);
}

TEST(RescaleBox, RoundTripAndContainment) {
  std::mt19937 rng(99);
  std::uniform_int_distribution<int> dim(1, 4000);
  for (int i = 0; i < 1000; ++i) {
    const ImageSize a{dim(rng), dim(rng)}, b{dim(rng), dim(rng)};
    const Box outer = oracle::random_box(rng);
    const Box inner{outer.x + 0.25 * outer.w, outer.y + 0.25 * outer.h, 0.5 * outer.w, 0.5 * outer.h,
                    outer.space};
    expect_box_near(rescale_box(rescale_box(outer, a, b), b, a), outer);
    EXPECT_TRUE(contains(rescale_box(outer, a, b), rescale_box(inner, a, b), 1e-9));
  }
}

TEST(CropTranslation, ZeroOriginUnchanged) {
  const Box b = frame_box(5, 5, 10, 10);
  EXPECT_EQ(crop_to_frame(b, {0, 0}), b);
}

TEST(CropTranslation, AddsOrigin) {
  const Box in_crop{5, 5, 10, 10, CoordSpace::crop({100, 200})};
  EXPECT_EQ(crop_to_frame(in_crop, {100, 200}), frame_box(105, 205, 10, 10));
}

TEST(CropTranslation, InversePair) {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> origin(0, 1500);
  for (int i = 0; i < 500; ++i) {
    const Box b = oracle::random_box(rng);
    const Point o{origin(rng), origin(rng)};
    const Box crop = frame_to_crop(b, o);
    EXPECT_EQ(crop.space, CoordSpace::crop(o));
    expect_box_near(crop_to_frame(crop, o), b);
  }
}

TEST(CoveringRect, RoundsOutwardAndClamps) {
  EXPECT_EQ(covering_rect(frame_box(10.2, 20.7, 5.1, 5.0), kFrameSize), (PixelRect{10, 20, 6, 6}));
  EXPECT_EQ(covering_rect(frame_box(-5, -5, 20, 20), kFrameSize), (PixelRect{0, 0, 15, 15}));
  EXPECT_EQ(covering_rect(frame_box(1900, 1070, 50, 50), kFrameSize), (PixelRect{1900, 1070, 20, 10}));
}
