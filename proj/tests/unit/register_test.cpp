#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "musreg/metrics.hpp"
#include "musreg/register.hpp"
#include "musreg/resample.hpp"
#include "oracles.hpp"

namespace {

using namespace musreg;

constexpr Vec2 kSpacing{0.5, 0.5};

// Ellipse with semi-axes (ax, ay) mm centred at c, on a w x h grid.
Mask2D ellipse(int w, int h, Vec2 c, double ax, double ay) {
  Mask2D m(w, h, kSpacing);
  for (int r = 0; r < h; ++r) {
    for (int col = 0; col < w; ++col) {
      const Vec2 p = m.physical(col, r) - c;
      m.at(col, r) = (p.x * p.x) / (ax * ax) + (p.y * p.y) / (ay * ay) <= 1.0;
    }
  }
  return m;
}

// Irregular blob so rotations and shears are observable.
Mask2D lobed(int w, int h, Vec2 c, double scale = 1.0) {
  Mask2D m(w, h, kSpacing);
  for (int r = 0; r < h; ++r) {
    for (int col = 0; col < w; ++col) {
      const Vec2 p = (m.physical(col, r) - c) * (1.0 / scale);
      const double a = std::atan2(p.y, p.x);
      const double radius = 12.0 * (1.0 + 0.15 * std::cos(2 * a) + 0.1 * std::sin(3 * a));
      m.at(col, r) = std::hypot(p.x, p.y) <= radius;
    }
  }
  return m;
}

RegistrationConfig fast_config() {
  RegistrationConfig c;
  c.iterations_per_level = 30;
  return c;
}

TEST(RegisterAffine, InitialisationAlignsCentresAndArea) {
  const Mask2D fixed = ellipse(80, 80, {20, 20}, 10, 7);
  const Mask2D moving = ellipse(80, 80, {22, 17}, 12, 8.4);
  const AffineTransform2D t = initialize_affine(fixed, moving);
  const Vec2 mapped = t.apply(*center_of_mass(fixed));
  EXPECT_NEAR(distance(mapped, *center_of_mass(moving)), 0.0, 1e-9);
  EXPECT_NEAR(t.linear.a, std::sqrt(double(foreground_count(moving)) / foreground_count(fixed)), 1e-12);
  EXPECT_EQ(t.linear.b, 0.0);
}

TEST(RegisterAffine, SelfRegistrationIsNearIdentity) {
  const Mask2D m = lobed(80, 80, {20, 20});
  const AffineResult r = register_affine(m, m, fast_config());
  const GridSpec grid{m.width(), m.height(), m.spacing()};
  EXPECT_GE(dice(warp_mask(m, r.transform, grid), m), 0.99);
  EXPECT_NEAR(r.transform.linear.a, 1.0, 0.01);
  EXPECT_NEAR(r.transform.linear.d, 1.0, 0.01);
  EXPECT_NEAR(r.transform.translation.x, 0.0, 0.25);
  EXPECT_NEAR(r.transform.translation.y, 0.0, 0.25);
}

TEST(RegisterAffine, RecoversTranslation) {
  const Mask2D fixed = lobed(100, 90, {24, 24});
  const Mask2D moving = lobed(100, 90, {24 + 5.0, 24 - 3.0});
  const AffineResult r = register_affine(fixed, moving, fast_config());
  for (Vec2 p : {Vec2{24, 24}, Vec2{14, 20}, Vec2{30, 30}}) {
    EXPECT_LT(distance(r.transform.apply(p), p + Vec2{5, -3}), 0.5);
  }
}

TEST(RegisterAffine, RecoversScale) {
  const Mask2D fixed = lobed(100, 100, {25, 25});
  const Mask2D moving = lobed(100, 100, {25, 25}, 1.2);
  const AffineResult r = register_affine(fixed, moving, fast_config());
  EXPECT_NEAR(r.transform.linear.a, 1.2, 0.024);
  EXPECT_NEAR(r.transform.linear.d, 1.2, 0.024);
}

TEST(RegisterAffine, FinalLossNeverExceedsInitial) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const Mask2D fixed = oracle::random_mask(rng, 60, 60, kSpacing);
    const Mask2D moving = oracle::random_mask(rng, 60, 60, kSpacing);
    if (foreground_count(fixed) == 0 || foreground_count(moving) == 0) continue;
    const AffineResult r = register_affine(fixed, moving, RegistrationConfig{});
    EXPECT_LE(r.final_loss, r.initial_loss);
    EXPECT_EQ(r.trace.size(), 3u);
  }
}

TEST(RegisterAffine, TracesAreMonotoneInAcceptedSteps) {
  const Mask2D fixed = lobed(80, 80, {20, 20});
  const Mask2D moving = lobed(80, 80, {23, 18}, 1.1);
  const AffineResult r = register_affine(fixed, moving, RegistrationConfig{});
  for (const LevelTrace& level : r.trace) {
    double best = level.start_loss;
    ASSERT_EQ(level.trial_losses.size(), level.accepted.size());
    for (std::size_t i = 0; i < level.trial_losses.size(); ++i) {
      if (level.accepted[i]) {
        EXPECT_LT(level.trial_losses[i], best);
        best = level.trial_losses[i];
      }
    }
    EXPECT_EQ(level.best_loss, best);
  }
}

TEST(RegisterAffine, LongerSingleLevelRunNeverEndsWorse) {
  const Mask2D fixed = lobed(80, 80, {20, 20});
  const Mask2D moving = lobed(80, 80, {24, 17}, 1.15);
  RegistrationConfig c;
  c.schedule.levels = {{2, 1.0}};
  c.iterations_per_level = 10;
  const AffineResult short_run = register_affine(fixed, moving, c);
  c.iterations_per_level = 20;
  const AffineResult long_run = register_affine(fixed, moving, c);
  EXPECT_LE(long_run.final_loss, short_run.final_loss);
}

TEST(RegisterAffine, EmptyMaskIsRejected) {
  const Mask2D m = lobed(40, 40, {10, 10}, 0.5);
  const Mask2D empty(40, 40, kSpacing);
  EXPECT_THROW(register_affine(empty, m, RegistrationConfig{}), ValidationError);
  EXPECT_THROW(register_affine(m, empty, RegistrationConfig{}), ValidationError);
}

TEST(RegisterFfd, IdentityProblemKeepsSmallDisplacements) {
  std::mt19937_64 rng(12);
  const Mask2D mask = lobed(80, 80, {20, 20});
  const Image2D image = apply_mask(oracle::smooth_texture(rng, 80, 80, kSpacing), mask);
  const FfdResult r = register_ffd(image, image, mask, mask, AffineTransform2D{}, RegistrationConfig{});
  double sum = 0.0;
  for (int k = 0; k < r.ffd.control_count(); ++k) {
    const int i = k % r.ffd.grid_dims()[0], j = k / r.ffd.grid_dims()[0];
    sum += norm(r.ffd.control_displacement(i, j));
  }
  EXPECT_LE(sum / r.ffd.control_count(), 0.1);
  EXPECT_LE(r.final_loss, r.initial_loss);
  EXPECT_FALSE(r.degenerate);
}

TEST(RegisterFfd, GridFollowsTheProstateBoundingBox) {
  const Mask2D mask = ellipse(100, 100, {25, 25}, 14, 10.5);
  const Vec2 s = ffd_grid_spacing(mask, RegistrationConfig{});
  // 57 x 43 pixel bounding box at 0.5 mm over seven cells.
  EXPECT_NEAR(s.x, 28.0 / 7.0, 0.5 / 7.0 + 1e-9);
  EXPECT_NEAR(s.y, 21.0 / 7.0, 0.5 / 7.0 + 1e-9);
  RegistrationConfig c;
  c.ffd_grid_spacing_mm = 5.0;
  EXPECT_EQ(ffd_grid_spacing(mask, c), (Vec2{5.0, 5.0}));
}

TEST(RegisterFfd, ConstantImagesReportDegenerateMi) {
  const Mask2D everywhere(60, 60, kSpacing, 1);
  const Image2D constant(60, 60, 1, kSpacing, 0.5);
  const FfdResult r =
      register_ffd(constant, constant, everywhere, everywhere, AffineTransform2D{}, RegistrationConfig{});
  EXPECT_TRUE(r.degenerate);
  EXPECT_FALSE(r.warning.empty());
  EXPECT_TRUE(r.ffd.is_zero());
}

TEST(RegisterPair, IsDeterministic) {
  std::mt19937_64 rng(13);
  const Mask2D fixed_mask = lobed(80, 80, {20, 20});
  const Mask2D moving_mask = lobed(80, 80, {22, 19}, 1.08);
  const Image2D fixed = oracle::smooth_texture(rng, 80, 80, kSpacing);
  const Image2D moving = oracle::smooth_texture(rng, 80, 80, kSpacing);
  const RegistrationResult a = register_pair(fixed, moving, fixed_mask, moving_mask, RegistrationConfig{});
  const RegistrationResult b = register_pair(fixed, moving, fixed_mask, moving_mask, RegistrationConfig{});
  EXPECT_EQ(a.affine.transform, b.affine.transform);
  EXPECT_EQ(a.ffd.ffd, b.ffd.ffd);
  EXPECT_EQ(a.ffd.final_loss, b.ffd.final_loss);
}

TEST(RegistrationConfigJson, JsonRoundTrip) {
  RegistrationConfig c;
  c.learning_rate = 0.35;
  c.iterations_per_level = 7;
  c.mi_bins = 48;
  c.ffd_grid_spacing_mm = 4.5;
  c.bending_weight = 0.01;
  c.schedule = PyramidSchedule::literal();
  EXPECT_EQ(config_from_json(config_to_json(c)), c);
  EXPECT_EQ(config_from_json(config_to_json(RegistrationConfig{})), RegistrationConfig{});
  EXPECT_EQ(config_from_json("{}"), RegistrationConfig{});
}

TEST(RegistrationConfigJson, RejectsBadInput) {
  EXPECT_THROW(config_from_json(R"({"learnig_rate": 0.1})"), ValidationError);
  EXPECT_THROW(config_from_json(R"({"learning_rate": "fast"})"), FormatError);
  EXPECT_THROW(config_from_json("[1, 2"), FormatError);
  EXPECT_THROW(config_from_json(R"({"mi_bins": 4})"), ValidationError);
  EXPECT_THROW(config_from_json(R"({"learning_rate": -1})"), ValidationError);
  EXPECT_THROW(config_from_json(R"({"schedule": [[0, 1]]})"), ValidationError);
  EXPECT_THROW(config_from_json(R"({"schedule": []})"), ValidationError);
}

TEST(PyramidSchedule, DefaultAndLiteralOrders) {
  const PyramidSchedule d = PyramidSchedule::coarse_to_fine();
  EXPECT_EQ(d.levels, (std::vector<PyramidLevel>{{8, 4.0}, {4, 2.0}, {2, 1.0}}));
  const PyramidSchedule l = PyramidSchedule::literal();
  EXPECT_EQ(l.levels, (std::vector<PyramidLevel>{{4, 4.0}, {8, 2.0}, {2, 1.0}}));
  EXPECT_NO_THROW(d.validate());
  EXPECT_NO_THROW(l.validate());
}

TEST(BendingEnergy, ZeroForAffineFieldsAndGradientMatches) {
  FFDTransform2D f = FFDTransform2D::covering({0, 0}, {20, 20}, {5, 5});
  for (int j = 0; j < f.grid_dims()[1]; ++j) {
    for (int i = 0; i < f.grid_dims()[0]; ++i) f.set_control_displacement(i, j, {0.3 * i - 0.1 * j, 0.2 * j});
  }
  EXPECT_NEAR(bending_energy(f), 0.0, 1e-20);

  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> u(-1, 1);
  for (double& d : f.displacements()) d = u(rng);
  std::vector<double> g;
  bending_energy(f, &g);
  const std::vector<double> x(f.displacements().begin(), f.displacements().end());
  const auto e = [&](const std::vector<double>& p) {
    FFDTransform2D t = f;
    std::copy(p.begin(), p.end(), t.displacements().begin());
    return bending_energy(t);
  };
  for (std::size_t k = 0; k < x.size(); ++k) {
    EXPECT_NEAR(g[k], oracle::central_difference(e, x, k, 1e-4), 1e-6);
  }
}

}  // namespace
