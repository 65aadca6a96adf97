#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "musreg/io.hpp"
#include "musreg/stitch.hpp"
#include "oracles.hpp"

namespace {

using namespace musreg;

Image2D rgb_ramp(int w, int h, Vec2 spacing = {1.0, 1.0}) {
  Image2D img(w, h, 3, spacing);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      img.at(c, r, 0) = (c + 1.0) / (w + 1.0);
      img.at(c, r, 1) = (r + 1.0) / (h + 1.0);
      img.at(c, r, 2) = ((c * 7 + r * 3) % 11) / 10.0;
    }
  }
  return img;
}

TEST(OrientFragment, IdentityLeavesImageUnchanged) {
  const Image2D img = rgb_ramp(5, 3);
  EXPECT_EQ(orient_fragment({img, false, 0.0, InkSide::kNone}), img);
}

TEST(OrientFragment, DoubleFlipIsIdentity) {
  const Image2D img = rgb_ramp(5, 3);
  const Image2D once = orient_fragment({img, true, 0.0, InkSide::kLeftBlack});
  EXPECT_NE(once, img);
  EXPECT_EQ(orient_fragment({once, true, 0.0, InkSide::kLeftBlack}), img);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 5; ++c) EXPECT_EQ(once.at(c, r, 2), img.at(4 - c, r, 2));
  }
}

TEST(OrientFragment, QuarterTurnsPermuteIndices) {
  const int w = 5, h = 3;
  const Image2D img = rgb_ramp(w, h);
  // Counter-clockwise as displayed (row 0 on top): the top-right corner
  // moves to the top-left.
  const Image2D r90 = orient_fragment({img, false, 90.0, InkSide::kNone});
  ASSERT_EQ(r90.width(), h);
  ASSERT_EQ(r90.height(), w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      for (int ch = 0; ch < 3; ++ch) EXPECT_EQ(r90.at(r, w - 1 - c, ch), img.at(c, r, ch));
    }
  }
  const Image2D r180 = orient_fragment({img, false, 180.0, InkSide::kNone});
  const Image2D r270 = orient_fragment({img, false, -90.0, InkSide::kNone});
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      EXPECT_EQ(r180.at(w - 1 - c, h - 1 - r, 0), img.at(c, r, 0));
      EXPECT_EQ(r270.at(h - 1 - r, c, 1), img.at(c, r, 1));
    }
  }
  EXPECT_EQ(orient_fragment({img, false, 360.0, InkSide::kNone}), img);
}

TEST(OrientFragment, FlipAppliesBeforeRotation) {
  const Image2D img = rgb_ramp(4, 2);
  const Image2D both = orient_fragment({img, true, 90.0, InkSide::kNone});
  const Image2D flipped = orient_fragment({img, true, 0.0, InkSide::kNone});
  EXPECT_EQ(both, orient_fragment({flipped, false, 90.0, InkSide::kNone}));
}

TEST(OrientFragment, ArbitraryRotationHasWhiteCorners) {
  const Image2D img(20, 20, 3, {1, 1}, 0.0);
  const Image2D out = orient_fragment({img, false, 30.0, InkSide::kNone});
  EXPECT_GT(out.width(), 20);
  EXPECT_EQ(out.at(0, 0, 0), 1.0);
  EXPECT_EQ(out.at(out.width() / 2, out.height() / 2, 0), 0.0);
}

TEST(FitRigid, PureTranslation) {
  std::vector<LandmarkPair> pairs = {{{0, 0}, {5, -3}}, {{1, 0}, {6, -3}}, {{0, 2}, {5, -1}}};
  const RigidTransform2D t = fit_rigid_landmarks(pairs, false);
  EXPECT_NEAR(t.rotation_deg, 0.0, 1e-12);
  EXPECT_NEAR(t.translation_mm.x, 5.0, 1e-12);
  EXPECT_NEAR(t.translation_mm.y, -3.0, 1e-12);
  EXPECT_FALSE(t.scale);
}

TEST(FitRigid, QuarterTurnMatchesProcrustesOracle) {
  std::vector<LandmarkPair> pairs;
  for (Vec2 m : {Vec2{1, 0}, Vec2{0, 2}, Vec2{-3, 1}, Vec2{2, 2}}) pairs.push_back({m, {-m.y, m.x}});
  const RigidTransform2D t = fit_rigid_landmarks(pairs, false);
  const auto ref = oracle::procrustes(pairs);
  EXPECT_NEAR(t.rotation_deg, 90.0, 1e-9);
  EXPECT_NEAR(t.rotation_deg, ref[0], 1e-9);
  EXPECT_NEAR(norm(t.translation_mm), 0.0, 1e-9);
  EXPECT_LT(landmark_rms(t, pairs), 1e-9);
}

TEST(FitRigid, RandomNoisyPairsMatchProcrustesOracle) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-20, 20), ang(-180, 180);
  std::normal_distribution<double> noise(0.0, 0.3);
  for (int trial = 0; trial < 50; ++trial) {
    const double theta = deg_to_rad(ang(rng));
    const Vec2 shift{u(rng), u(rng)};
    std::vector<LandmarkPair> pairs;
    for (int i = 0; i < 6; ++i) {
      const Vec2 m{u(rng), u(rng)};
      const Vec2 f{std::cos(theta) * m.x - std::sin(theta) * m.y + shift.x + noise(rng),
                   std::sin(theta) * m.x + std::cos(theta) * m.y + shift.y + noise(rng)};
      pairs.push_back({m, f});
    }
    const RigidTransform2D t = fit_rigid_landmarks(pairs, false);
    const auto ref = oracle::procrustes(pairs);
    const double d = std::remainder(t.rotation_deg - ref[0], 360.0);
    EXPECT_NEAR(d, 0.0, 1e-7);
    EXPECT_NEAR(t.translation_mm.x, ref[1], 1e-7);
    EXPECT_NEAR(t.translation_mm.y, ref[2], 1e-7);
    EXPECT_LE(landmark_rms(t, pairs), landmark_rms(RigidTransform2D{}, pairs) + 1e-12);
  }
}

TEST(FitRigid, NeverReflects) {
  // Mirror-image targets: the best proper rotation is still a rotation.
  std::vector<LandmarkPair> pairs;
  for (Vec2 m : {Vec2{1, 0}, Vec2{0, 1}, Vec2{2, 3}, Vec2{-1, 2}}) pairs.push_back({m, {-m.x, m.y}});
  for (bool scale : {false, true}) {
    const RigidTransform2D t = fit_rigid_landmarks(pairs, scale);
    const double th = deg_to_rad(t.rotation_deg);
    const double k = t.scale_or_one();
    EXPECT_GT(k * k * (std::cos(th) * std::cos(th) + std::sin(th) * std::sin(th)), 0.0);
    EXPECT_GT(k, 0.0);
  }
}

TEST(FitRigid, SimilarityRecoversScale) {
  std::vector<LandmarkPair> pairs;
  for (Vec2 m : {Vec2{1, 0}, Vec2{0, 2}, Vec2{-3, 1}}) pairs.push_back({m, m * 1.5 + Vec2{1, 1}});
  const RigidTransform2D t = fit_rigid_landmarks(pairs, true);
  ASSERT_TRUE(t.scale);
  EXPECT_NEAR(*t.scale, 1.5, 1e-12);
  EXPECT_LT(landmark_rms(t, pairs), 1e-12);
}

TEST(FitRigid, IdenticalSetsGiveIdentity) {
  std::vector<LandmarkPair> pairs = {{{1, 2}, {1, 2}}, {{3, -1}, {3, -1}}, {{0, 5}, {0, 5}}};
  const RigidTransform2D t = fit_rigid_landmarks(pairs, false);
  EXPECT_NEAR(t.rotation_deg, 0.0, 1e-12);
  EXPECT_NEAR(norm(t.translation_mm), 0.0, 1e-12);
}

TEST(FitRigid, DegenerateInputsAreRejected) {
  std::vector<LandmarkPair> one = {{{0, 0}, {1, 1}}};
  EXPECT_THROW(fit_rigid_landmarks(one, false), ValidationError);
  std::vector<LandmarkPair> same = {{{2, 2}, {0, 0}}, {{2, 2}, {1, 1}}};
  EXPECT_THROW(fit_rigid_landmarks(same, false), DegenerateError);
}

TEST(Compose, SingleFragmentIdentityIsIdempotent) {
  const Image2D img = rgb_ramp(6, 4, {0.5, 0.5});
  const std::vector<Image2D> frags = {img};
  const std::vector<RigidTransform2D> ts = {RigidTransform2D{}};
  const Canvas canvas{6, 4, {0.5, 0.5}, 1.0};
  const Image2D out = compose_fragments(frags, ts, canvas);
  EXPECT_EQ(out, img);
  const std::vector<Image2D> again = {out};
  EXPECT_EQ(compose_fragments(again, ts, canvas), out);
}

TEST(Compose, DisjointFragmentsFormTheUnion) {
  const Image2D a = rgb_ramp(3, 4);
  Image2D b(3, 4, 3, {1, 1}, 0.25);
  const std::vector<Image2D> frags = {a, b};
  const std::vector<RigidTransform2D> ts = {RigidTransform2D{}, {0.0, {5.0, 0.0}, std::nullopt}};
  const Image2D out = compose_fragments(frags, ts, {8, 4, {1, 1}, 1.0});
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 8; ++c) {
      for (int ch = 0; ch < 3; ++ch) {
        const double expect = c < 3 ? a.at(c, r, ch) : c < 5 ? 1.0 : 0.25;
        EXPECT_EQ(out.at(c, r, ch), expect) << c << "," << r;
      }
    }
  }
}

TEST(Compose, FirstFragmentWinsOverlap) {
  const Image2D a(4, 4, 1, {1, 1}, 0.2);
  const Image2D b(4, 4, 1, {1, 1}, 0.8);
  const std::vector<Image2D> frags = {a, b};
  const std::vector<RigidTransform2D> ts = {RigidTransform2D{}, {0.0, {2.0, 0.0}, std::nullopt}};
  const Image2D out = compose_fragments(frags, ts, {6, 4, {1, 1}, 1.0});
  EXPECT_EQ(out.at(3, 1), 0.2);
  EXPECT_EQ(out.at(5, 1), 0.8);
}

TEST(Compose, FootprintOutsideCanvasIsRejected) {
  const std::vector<Image2D> frags = {Image2D(4, 4, 1)};
  const std::vector<RigidTransform2D> ts = {{0.0, {3.0, 0.0}, std::nullopt}};
  EXPECT_THROW(compose_fragments(frags, ts, {5, 4, {1, 1}, 1.0}), ValidationError);
}

TEST(Compose, SplitThenStitchReproducesTheOriginal) {
  std::mt19937_64 rng(4);
  const Vec2 sp{0.2, 0.2};
  const Image2D whole = oracle::smooth_texture(rng, 40, 30, sp);
  // Left and right halves with a two-column overlap, then the right half is
  // rotated 90 degrees; landmarks at the seam undo the rotation.
  const int split = 21;
  Image2D left(split, 30, 1, sp), right(40 - split + 2, 30, 1, sp);
  for (int r = 0; r < 30; ++r) {
    for (int c = 0; c < left.width(); ++c) left.at(c, r) = whole.at(c, r);
    for (int c = 0; c < right.width(); ++c) right.at(c, r) = whole.at(c + split - 2, r);
  }
  const Image2D right_rot = orient_fragment({right, false, 90.0, InkSide::kNone});

  StitchPlan plan;
  plan.canvas = {40, 30, sp, 1.0};
  plan.fragments.resize(2);
  plan.fragments[0].transform = RigidTransform2D{};
  plan.fragments[1].gross_rotation_deg = -90.0;  // human undoes the scan rotation
  const double off = (split - 2) * sp.x;
  for (Vec2 p : {Vec2{0.0, 0.0}, Vec2{0.4, 5.0}, Vec2{3.0, 2.0}, Vec2{1.0, 5.8}}) {
    plan.fragments[1].landmarks.push_back({p, p + Vec2{off, 0.0}});
  }
  const std::vector<Image2D> images = {left, right_rot};
  const Image2D out = stitch(images, plan);
  for (int r = 0; r < 30; ++r) {
    for (int c = 0; c < 40; ++c) EXPECT_NEAR(out.at(c, r), whole.at(c, r), 1.0 / 255.0);
  }
}

TEST(StitchPlanFile, ParsesTransformsAndLandmarks) {
  const auto dir = oracle::scratch_dir("plan");
  std::ofstream(dir / "plan.json") << R"({
    "canvas": {"width_px": 10, "height_px": 8, "spacing_mm": [0.5, 0.5], "background": 1.0},
    "allow_scale": false,
    "fragments": [
      {"flip_horizontal": true, "rotation_deg": 90, "ink_side": "left-black",
       "transform": {"rotation_deg": 0, "translation_mm": [0, 0]}},
      {"ink_side": "right-blue",
       "landmarks": [{"fragment_mm": [0, 0], "canvas_mm": [1, 1]},
                     {"fragment_mm": [1, 0], "canvas_mm": [2, 1]}]}
    ]})";
  const StitchPlan plan = load_stitch_plan(dir / "plan.json");
  EXPECT_EQ(plan.canvas.width_px, 10);
  EXPECT_EQ(plan.canvas.spacing_mm, (Vec2{0.5, 0.5}));
  ASSERT_EQ(plan.fragments.size(), 2u);
  EXPECT_TRUE(plan.fragments[0].flip_horizontal);
  EXPECT_EQ(plan.fragments[0].ink_side, InkSide::kLeftBlack);
  EXPECT_EQ(plan.fragments[1].ink_side, InkSide::kRightBlue);
  EXPECT_EQ(plan.fragments[1].landmarks.size(), 2u);
}

TEST(StitchPlanFile, FragmentWithoutPlacementIsRejected) {
  EXPECT_THROW(stitch_plan_from_json(
                   R"({"canvas": {"width_px": 4, "height_px": 4}, "fragments": [{}]})"),
               ValidationError);
  EXPECT_THROW(stitch_plan_from_json("{"), FormatError);
  EXPECT_THROW(stitch_plan_from_json(
                   R"({"canvas": {"width_px": 4, "height_px": 4}, "fragments": [
                       {"ink_side": "green", "transform": {}}]})"),
               ValidationError);
}

}  // namespace
