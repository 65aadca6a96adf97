#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <sstream>

#include "musreg/metrics.hpp"
#include "musreg/phantom.hpp"
#include "musreg/register.hpp"
#include "musreg/resample.hpp"
#include "oracles.hpp"

namespace {

using namespace musreg;

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    files[fs::relative(e.path(), root).string()] = s.str();
  }
  return files;
}

PhantomSpec small_spec(std::uint64_t seed) {
  PhantomSpec spec;
  spec.seed = seed;
  spec.angle_count = 60;
  return spec;
}

TEST(Phantom, SameSeedWritesIdenticalCases) {
  const fs::path a = oracle::scratch_dir("phantom_a");
  const fs::path b = oracle::scratch_dir("phantom_b");
  generate_phantom(small_spec(5), a);
  generate_phantom(small_spec(5), b);
  const auto sa = snapshot(a);
  EXPECT_GT(sa.size(), 20u);
  EXPECT_TRUE(sa == snapshot(b));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Phantom, CaseLayoutIsComplete) {
  const fs::path root = oracle::scratch_dir("phantom_layout");
  const CaseLayout layout = generate_phantom(small_spec(6), root);
  EXPECT_TRUE(fs::exists(layout.manifest()));
  EXPECT_TRUE(fs::exists(layout.correspondence()));
  EXPECT_TRUE(fs::exists(layout.microus_landmarks()));
  EXPECT_TRUE(fs::exists(layout.histology_landmarks()));
  const int n = layout.histology_count();
  EXPECT_GE(n, 5);
  for (int i = 0; i < n; ++i) {
    EXPECT_TRUE(fs::exists(layout.histology_slice(i, n)));
    EXPECT_TRUE(fs::exists(layout.histology_mask(i, n)));
  }
  fs::remove_all(root);
}

TEST(Phantom, DifferentSeedsDiffer) {
  PhantomSpec a, b;
  a.seed = 1;
  b.seed = 2;
  const PhantomSlice sa = make_phantom_slice(a);
  const PhantomSlice sb = make_phantom_slice(b);
  EXPECT_FALSE(sa.truth.affine == sb.truth.affine);
  EXPECT_FALSE(sa.histology == sb.histology);
}

TEST(Phantom, TruthMapsHistologyLabelsOntoTheFixedSlice) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    PhantomSpec spec;
    spec.seed = seed;
    const PhantomSlice s = make_phantom_slice(spec);
    const LabelMap2D warped = warp_labels(
        s.histology_labels, [&](Vec2 p) { return s.truth.apply(p); }, GridSpec::of(s.fixed_labels));
    EXPECT_GE(dice(prostate_mask(warped), prostate_mask(s.fixed_labels)), 0.98) << seed;
  }
}

TEST(Phantom, InitialLandmarkErrorIsLarge) {
  int with_landmark = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    PhantomSpec spec;
    spec.seed = seed;
    const PhantomSlice s = make_phantom_slice(spec);
    if (!s.fixed_landmark) continue;
    ++with_landmark;
    EXPECT_GE(s.initial_landmark_error_mm, 1.5) << "seed " << seed;
    EXPECT_NEAR(distance(s.truth.apply(*s.fixed_landmark), *s.histology_landmark), 0.0, 1e-12);
  }
  EXPECT_GE(with_landmark, 8);
}

TEST(Phantom, ZeroWarpRegistersAlmostPerfectly) {
  for (std::uint64_t seed : {1u, 4u}) {
    PhantomSpec spec;
    spec.seed = seed;
    spec.warp_amplitude_mm = 0.0;
    const PhantomSlice s = make_phantom_slice(spec);
    EXPECT_TRUE(s.truth.ffd->is_zero());
    const Mask2D fixed_mask = prostate_mask(s.fixed_labels);
    const RegistrationResult r = register_pair(s.fixed, s.histology, fixed_mask,
                                               prostate_mask(s.histology_labels), RegistrationConfig{});
    const CompositeTransform t = r.transform();
    const LabelMap2D warped = warp_labels(
        s.histology_labels, [&](Vec2 p) { return t.apply(p); }, GridSpec::of(s.fixed_labels));
    EXPECT_GE(dice(prostate_mask(warped), fixed_mask), 0.99) << "seed " << seed;
  }
}

TEST(Phantom, InvalidSpecIsRejected) {
  PhantomSpec spec;
  spec.prostate_semi_axes_mm.x = 0.0;
  EXPECT_THROW(spec.validate(), ValidationError);
  spec = PhantomSpec{};
  spec.noise_sigma = -1.0;
  EXPECT_THROW(spec.validate(), ValidationError);
}

}  // namespace
