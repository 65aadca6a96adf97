#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "musreg/io.hpp"
#include "musreg/metrics.hpp"
#include "musreg/resample.hpp"
#include "musreg/transform.hpp"
#include "oracles.hpp"

namespace {

using namespace musreg;

AffineTransform2D similarity(double deg, double scale, Vec2 t) {
  const double a = deg_to_rad(deg);
  return {{scale * std::cos(a), -scale * std::sin(a), scale * std::sin(a), scale * std::cos(a)}, t};
}

FFDTransform2D random_ffd(std::mt19937_64& rng, Vec2 lo, Vec2 hi, Vec2 spacing, double amp) {
  FFDTransform2D f = FFDTransform2D::covering(lo, hi, spacing);
  std::uniform_real_distribution<double> u(-amp, amp);
  for (double& d : f.displacements()) d = u(rng);
  return f;
}

TEST(Affine, ParametersRoundTrip) {
  const AffineTransform2D t{{1.1, 0.2, -0.3, 0.9}, {4.0, -2.0}};
  const auto p = t.parameters();
  EXPECT_EQ(p, (std::array<double, 6>{1.1, 0.2, 4.0, -0.3, 0.9, -2.0}));
  EXPECT_EQ(AffineTransform2D::from_parameters(p), t);
}

TEST(Affine, InverseAndCompose) {
  const AffineTransform2D t = similarity(17.0, 1.3, {2.0, -5.0});
  const AffineTransform2D id = t.compose(t.inverse());
  const Vec2 p{3.0, 7.0};
  EXPECT_NEAR(distance(id.apply(p), p), 0.0, 1e-12);
  const AffineTransform2D u = similarity(-4.0, 0.9, {1.0, 1.0});
  EXPECT_NEAR(distance(t.compose(u).apply(p), t.apply(u.apply(p))), 0.0, 1e-12);
}

TEST(Affine, SingularIsRejected) {
  const AffineTransform2D t{{1.0, 2.0, 2.0, 4.0}, {}};
  EXPECT_THROW(t.validate(), ValidationError);
}

TEST(Ffd, CoveringAddsOneRing) {
  const FFDTransform2D f = FFDTransform2D::covering({0, 0}, {20, 10}, {5, 5});
  EXPECT_EQ(f.grid_dims(), (std::array<int, 2>{4 + 3, 2 + 3}));
  EXPECT_EQ(f.grid_origin(), (Vec2{-5, -5}));
  EXPECT_TRUE(f.is_zero());
  EXPECT_EQ(f.displacement({3, 4}), (Vec2{0, 0}));
}

TEST(Ffd, UniformControlDisplacementIsATranslation) {
  FFDTransform2D f = FFDTransform2D::covering({0, 0}, {20, 10}, {5, 5});
  for (int j = 0; j < f.grid_dims()[1]; ++j) {
    for (int i = 0; i < f.grid_dims()[0]; ++i) f.set_control_displacement(i, j, {1.5, -0.5});
  }
  for (Vec2 p : {Vec2{0, 0}, Vec2{7.3, 2.2}, Vec2{19.9, 9.9}}) {
    EXPECT_NEAR(f.displacement(p).x, 1.5, 1e-12);
    EXPECT_NEAR(f.displacement(p).y, -0.5, 1e-12);
  }
}

TEST(Ffd, JacobianMatchesFiniteDifferences) {
  std::mt19937_64 rng(2);
  const FFDTransform2D f = random_ffd(rng, {0, 0}, {30, 20}, {6, 5}, 2.0);
  std::uniform_real_distribution<double> ux(0.5, 29.5), uy(0.5, 19.5);
  for (int i = 0; i < 100; ++i) {
    const Vec2 p{ux(rng), uy(rng)};
    const Mat2 j = f.displacement_jacobian(p);
    const double h = 1e-6;
    const Vec2 dx = (f.displacement(p + Vec2{h, 0}) - f.displacement(p - Vec2{h, 0})) * (0.5 / h);
    const Vec2 dy = (f.displacement(p + Vec2{0, h}) - f.displacement(p - Vec2{0, h})) * (0.5 / h);
    EXPECT_NEAR(j.a, dx.x, 1e-6);
    EXPECT_NEAR(j.c, dx.y, 1e-6);
    EXPECT_NEAR(j.b, dy.x, 1e-6);
    EXPECT_NEAR(j.d, dy.y, 1e-6);
  }
}

TEST(Composite, AppliesFfdThenAffine) {
  std::mt19937_64 rng(3);
  const FFDTransform2D f = random_ffd(rng, {0, 0}, {10, 10}, {5, 5}, 1.0);
  const AffineTransform2D a = similarity(10.0, 1.2, {3.0, 1.0});
  const CompositeTransform t{a, f};
  const Vec2 p{4.0, 6.0};
  EXPECT_EQ(t.apply(p), a.apply(p + f.displacement(p)));
}

TEST(Composite, InvertPointRoundTrips) {
  std::mt19937_64 rng(4);
  const CompositeTransform t{similarity(-7.0, 1.05, {1.0, -2.0}),
                             random_ffd(rng, {0, 0}, {40, 30}, {8, 8}, 1.5)};
  std::uniform_real_distribution<double> ux(2, 38), uy(2, 28);
  for (int i = 0; i < 200; ++i) {
    const Vec2 p{ux(rng), uy(rng)};
    EXPECT_NEAR(distance(invert_point(t, t.apply(p)), p), 0.0, 1e-8);
  }
}

TEST(TransformJson, RoundTripIsExact) {
  std::mt19937_64 rng(5);
  const AffineTransform2D a = similarity(12.345678901234, 0.987654321, {1.0 / 3.0, -2.0 / 7.0});
  EXPECT_EQ(affine_from_json(affine_to_json(a)), a);
  const FFDTransform2D f = random_ffd(rng, {-1.5, 2.25}, {17.1, 9.9}, {3.3, 2.2}, 1.0);
  EXPECT_EQ(ffd_from_json(ffd_to_json(f)), f);
  const auto dir = oracle::scratch_dir("xfjson");
  save_affine(a, dir / "a.json");
  save_ffd(f, dir / "f.json");
  EXPECT_EQ(load_affine(dir / "a.json"), a);
  EXPECT_EQ(load_ffd(dir / "f.json"), f);
}

TEST(TransformJson, MalformedIsFormatError) {
  EXPECT_THROW(affine_from_json(R"({"matrix": [[1, 0], [0, 1]]})"), FormatError);
  EXPECT_THROW(affine_from_json("nope"), FormatError);
  EXPECT_THROW(ffd_from_json(R"({"grid_origin_mm": [0, 0], "grid_spacing_mm": [1, 1],
                                 "grid_dims": [2, 2], "displacements_mm": [0, 0]})"),
               FormatError);
}

TEST(Resample, IdentityIsExactAtGridPoints) {
  std::mt19937_64 rng(6);
  const Image2D img = oracle::smooth_texture(rng, 17, 11, {0.3, 0.3});
  for (auto interp : {Interpolation::kBilinear, Interpolation::kNearest}) {
    EXPECT_EQ(resample(img, [](Vec2 p) { return p; }, GridSpec::of(img), interp), img);
  }
}

TEST(Resample, IntegerShiftMovesPixelsAndFillsVacatedColumns) {
  std::mt19937_64 rng(7);
  const Image2D img = oracle::smooth_texture(rng, 10, 6, {0.5, 0.5});
  // output(p) = src(p - 2 px): content moves right by two columns.
  const Image2D out = resample(img, [](Vec2 p) { return p - Vec2{1.0, 0.0}; }, GridSpec::of(img),
                               Interpolation::kBilinear, -1.0);
  for (int r = 0; r < 6; ++r) {
    for (int c = 0; c < 10; ++c) EXPECT_EQ(out.at(c, r), c < 2 ? -1.0 : img.at(c - 2, r));
  }
}

TEST(Resample, ZeroFfdCompositeEqualsAffineOnly) {
  std::mt19937_64 rng(8);
  const Image2D img = oracle::smooth_texture(rng, 30, 20, {0.5, 0.5});
  const AffineTransform2D a = similarity(8.0, 1.1, {0.7, -0.4});
  const CompositeTransform t{a, FFDTransform2D::covering({0, 0}, {15, 10}, {3, 3})};
  const Image2D x = resample(img, [&](Vec2 p) { return t.apply(p); }, GridSpec::of(img));
  const Image2D y = resample(img, [&](Vec2 p) { return a.apply(p); }, GridSpec::of(img));
  EXPECT_EQ(x, y);
}

TEST(Resample, RgbChannelsAreResampledIndependently) {
  Image2D img(4, 4, 3, {1, 1});
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      img.at(c, r, 0) = c / 3.0;
      img.at(c, r, 1) = r / 3.0;
      img.at(c, r, 2) = 0.5;
    }
  }
  const Image2D out = resample(img, [](Vec2 p) { return p + Vec2{0.5, 0.0}; }, GridSpec::of(img),
                               Interpolation::kBilinear, 1.0);
  EXPECT_NEAR(out.at(1, 2, 0), 1.5 / 3.0, 1e-12);
  EXPECT_NEAR(out.at(1, 2, 1), 2.0 / 3.0, 1e-12);
  EXPECT_EQ(out.at(3, 2, 2), 1.0);
}

TEST(WarpLabels, IdentityKeepsLabels) {
  std::mt19937_64 rng(9);
  LabelMap2D labels(20, 15, {0.5, 0.5});
  for (auto& v : labels.values()) v = static_cast<Label>(rng() % kLabelCount);
  EXPECT_EQ(warp_labels(labels, [](Vec2 p) { return p; }, GridSpec::of(labels)), labels);
}

TEST(WarpLabels, ShiftVacatesToBackground) {
  LabelMap2D labels(10, 4, {1, 1}, Label::kCancer);
  const LabelMap2D out =
      warp_labels(labels, [](Vec2 p) { return p - Vec2{3, 0}; }, GridSpec::of(labels));
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 10; ++c) EXPECT_EQ(out.at(c, r), c < 3 ? Label::kBackground : Label::kCancer);
  }
}

TEST(WarpLabels, OutputLabelsAreASubsetOfInput) {
  std::mt19937_64 rng(10);
  LabelMap2D labels(30, 30, {0.5, 0.5});
  for (int r = 5; r < 25; ++r) {
    for (int c = 5; c < 25; ++c) labels.at(c, r) = (c + r) % 3 ? Label::kProstate : Label::kUrethra;
  }
  const CompositeTransform t{similarity(13, 0.8, {2, 1}),
                             random_ffd(rng, {0, 0}, {15, 15}, {5, 5}, 1.0)};
  const LabelMap2D out = warp_labels(labels, [&](Vec2 p) { return t.apply(p); }, GridSpec::of(labels));
  for (Label l : out.values()) {
    EXPECT_TRUE(l == Label::kBackground || l == Label::kProstate || l == Label::kUrethra);
  }
}

TEST(WarpLabels, ForwardThenNumericalInverseRestoresLabels) {
  std::mt19937_64 rng(11);
  const Vec2 sp{0.25, 0.25};
  LabelMap2D labels(120, 100, sp);
  for (int r = 0; r < 100; ++r) {
    for (int c = 0; c < 120; ++c) {
      const double x = c * sp.x - 15.0, y = r * sp.y - 12.5;
      if (x * x / 100.0 + y * y / 64.0 <= 1.0) labels.at(c, r) = Label::kProstate;
      if ((x - 3) * (x - 3) + (y + 2) * (y + 2) <= 9.0) labels.at(c, r) = Label::kCancer;
      if (x * x + (y - 4) * (y - 4) <= 2.25) labels.at(c, r) = Label::kUrethra;
    }
  }
  const CompositeTransform t{AffineTransform2D{}, random_ffd(rng, {0, 0}, {30, 25}, {6, 6}, 1.2)};
  const InverseTransform inv{&t};
  const GridSpec grid = GridSpec::of(labels);
  const LabelMap2D warped = warp_labels(labels, [&](Vec2 p) { return t.apply(p); }, grid);
  const LabelMap2D back = warp_labels(warped, [&](Vec2 p) { return inv(p); }, grid);
  for (Label l : {Label::kProstate, Label::kCancer, Label::kUrethra}) {
    EXPECT_GE(dice(label_mask(back, l), label_mask(labels, l)), 0.95) << label_name(l);
  }
}

TEST(Smoothing, ZeroSigmaCopiesAndConstantsSurvive) {
  std::mt19937_64 rng(12);
  const Image2D img = oracle::smooth_texture(rng, 12, 9, {0.5, 0.5});
  EXPECT_EQ(gaussian_smooth(img, 0.0), img);
  const Image2D flat(12, 9, 1, {0.5, 0.5}, 0.3);
  const Image2D smoothed = gaussian_smooth(flat, 1.7);
  for (double v : smoothed.values()) EXPECT_NEAR(v, 0.3, 1e-12);
}

TEST(Shrink, KeepsEveryFactorthPixel) {
  std::mt19937_64 rng(13);
  const Image2D img = oracle::smooth_texture(rng, 13, 9, {0.5, 0.25});
  const Image2D s = shrink(img, 4);
  EXPECT_EQ(s.width(), 4);
  EXPECT_EQ(s.height(), 3);
  EXPECT_EQ(s.spacing(), (Vec2{2.0, 1.0}));
  EXPECT_EQ(s.at(2, 1), img.at(8, 4));
  // Pixel centres keep their physical positions.
  EXPECT_EQ(s.physical(2, 1), img.physical(8, 4));
}

}  // namespace
