#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "musreg/image.hpp"
#include "musreg/pipeline.hpp"
#include "musreg/reconstruct.hpp"
#include "musreg/transform.hpp"

namespace musreg {

struct PhantomSpec {
  std::uint64_t seed = 1;

  // Anatomy, in volume coordinates (x left-right, y depth, z probe axis).
  Vec3 prostate_semi_axes_mm{22.0, 15.0, 20.0};
  double prostate_center_y_mm = 28.0;
  double shape_irregularity = 0.06;
  double posterior_flattening = 0.25;
  double urethra_radius_mm = 1.5;
  double nodule_radius_mm = 3.0;
  int lesion_count = 2;
  double lesion_radius_mm = 4.5;
  double texture_amplitude = 0.08;

  // Histology warp: similarity followed by a random B-spline displacement.
  double warp_amplitude_mm = 3.0;
  double warp_control_spacing_mm = 10.0;
  /// The displacement at the landmark is redrawn until it reaches this.
  double min_landmark_displacement_mm = 1.6;
  double rotation_deg = 4.0;
  double scale = 1.05;
  double offset_jitter_mm = 2.0;

  // Modality remap of the histology intensities.
  bool invert = true;
  double gamma = 0.7;
  double noise_sigma = 0.02;

  // Acquisition.
  ProbeGeometry probe{8.0, 40.0, 48.0, 0.2};
  int angle_count = 240;
  double max_angle_deg = 89.6;
  VolumeSpec volume;
  double histology_pixel_mm = 0.2;
  double histology_slice_spacing_mm = 3.0;

  void validate() const;
};

struct Lesion {
  Vec3 center;
  double radius_mm = 0.0;
};

struct TextureWave {
  Vec3 frequency;  // radians per mm
  double phase = 0.0;
  double amplitude = 0.0;
};

/// Seeded synthetic prostate: an irregular ellipsoid with urethra, a
/// nodule used as the anatomical landmark, lesions and smooth texture.
struct PhantomAnatomy {
  Vec3 semi_axes;
  Vec3 center;
  double posterior_flattening = 0.0;
  std::vector<double> harmonic_amplitude;  // shape harmonics 2..4
  std::vector<double> harmonic_phase;
  Vec2 urethra_xy;
  double urethra_radius_mm = 0.0;
  Vec3 nodule_center;
  double nodule_radius_mm = 0.0;
  double nodule_half_length_mm = 0.0;
  double nodule_tilt = 0.0;  // dx/dz of the nodule axis
  std::vector<Lesion> lesions;
  std::vector<TextureWave> texture;

  Label label(Vec3 p) const;
  double intensity(Vec3 p) const;
  /// Nodule axis position at height z, if its cross-section there is at least 1 mm wide.
  std::optional<Vec2> nodule_center_at(double z_mm) const;
  bool prostate_contains(Vec3 p) const;
};

PhantomAnatomy make_anatomy(const PhantomSpec& spec);

struct PhantomSlice {
  double z_mm = 0.0;
  Image2D fixed;             // analytic micro-US slice on the axial grid
  LabelMap2D fixed_labels;
  Image2D histology;         // RGB on the histology grid
  LabelMap2D histology_labels;
  /// Ground truth map from fixed-image to histology coordinates.
  CompositeTransform truth;
  std::optional<Vec2> fixed_landmark;
  std::optional<Vec2> histology_landmark;
  std::optional<Vec2> fixed_urethra;
  std::optional<Vec2> histology_urethra;
  /// Landmark error of the truth with its displacement field removed.
  double initial_landmark_error_mm = 0.0;
};

/// One histology/micro-US slice pair at height z with an independent warp.
PhantomSlice make_phantom_slice(const PhantomSpec& spec, const PhantomAnatomy& anatomy,
                                double z_mm, std::uint64_t warp_seed);
/// Slice through the prostate centre, warp seeded by spec.seed.
PhantomSlice make_phantom_slice(const PhantomSpec& spec);

/// Noise-free truth volume on the reconstruction grid; out-of-fan voxels are 0.
Volume3D phantom_volume(const PhantomSpec& spec, const PhantomAnatomy& anatomy);

/// Writes a complete case directory and returns its layout.
CaseLayout generate_phantom(const PhantomSpec& spec, const fs::path& out_dir);

}  // namespace musreg
