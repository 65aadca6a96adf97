#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "musreg/frame_stack.hpp"
#include "musreg/volume.hpp"

namespace musreg {

/// Probe and frame geometry of a rotational sweep, in millimetres.
struct ProbeGeometry {
  double radius_mm = 0.0;         // r
  double height_mm = 0.0;         // h, radial depth of a frame
  double width_mm = 0.0;          // w, extent along the probe axis
  double pixel_spacing_mm = 1.0;

  static ProbeGeometry from_stack(const FrameStack& stack);
  void validate() const;
};

/// Voxel sizes of the axial volume. Defaults match the clinical setting.
struct VolumeSpec {
  double in_plane_mm = 0.4;       // sigma_i
  double through_plane_mm = 1.0;  // sigma_t
  void validate() const;
};

/// How the radial distance of a voxel maps to a frame row.
enum class RadialConvention {
  /// Distance from the frame bottom is rho - r (bottom edge on the probe surface).
  kRadiusOffset,
  /// Distance from the frame bottom is rho, ignoring the probe radius.
  kLiteral,
};

enum class FrameInterpolation { kBilinear, kNearest };

struct ReconstructOptions {
  FrameInterpolation interpolation = FrameInterpolation::kBilinear;
  RadialConvention convention = RadialConvention::kRadiusOffset;
  /// Voxels whose nearest frame is farther than gap_factor * median angular
  /// spacing stay background.
  double gap_factor = 1.5;
};

struct AngleRange {
  double min_deg = -90.0;
  double max_deg = 90.0;
};

/// Position of a physical point inside the rotating frame.
struct FanCoordinate {
  double angle_deg = 0.0;
  double u_mm = 0.0;  // along the probe axis (= z)
  double v_mm = 0.0;  // depth measured from the frame top
  bool in_fan = false;
};

/// Volume extents: S_LR = 2(h+r), S_PA = h+r, S_SI = w, each divided by its
/// voxel size and rounded up.
Volume3D::Dims volume_dims(const ProbeGeometry& geom, const VolumeSpec& spec);
/// Physical position of voxel (0,0,0): (-(h+r), 0, 0).
Vec3 volume_origin(const ProbeGeometry& geom);

FanCoordinate voxel_to_fan(Vec3 p, const ProbeGeometry& geom, AngleRange sweep,
                           RadialConvention convention = RadialConvention::kRadiusOffset);
/// Inverse of voxel_to_fan for in-fan coordinates.
Vec3 fan_to_physical(const FanCoordinate& fan, const ProbeGeometry& geom,
                     RadialConvention convention = RadialConvention::kRadiusOffset);

/// Index minimising |angles[i] - angle| over a sorted list; ties go to the lower index.
std::size_t nearest_angle_index(std::span<const double> sorted_angles, double angle_deg);

/// Median of the positive consecutive differences; 0 for fewer than two distinct angles.
double median_angular_spacing(std::span<const double> sorted_angles);

/// Nearest-angle resampling of fan frames onto the axial voxel grid.
Volume3D reconstruct_volume(const FrameStack& stack, const VolumeSpec& spec,
                            const ReconstructOptions& options = {});

/// Simulates a sweep: one frame per angle, each pixel sampled trilinearly
/// from the volume. Frame size is round(w/ps) x round(h/ps).
FrameStack sample_fan_frames(const Volume3D& volume, std::span<const double> angles_deg,
                             const ProbeGeometry& geom);

}  // namespace musreg
