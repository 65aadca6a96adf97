#include "musreg/reconstruct.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "musreg/errors.hpp"
#include "parallel.hpp"

namespace musreg {

ProbeGeometry ProbeGeometry::from_stack(const FrameStack& stack) {
  return {stack.probe_radius_mm, stack.frame_height_mm(), stack.frame_width_mm(),
          stack.pixel_spacing_mm};
}

void ProbeGeometry::validate() const {
  if (!(radius_mm >= 0.0)) throw ValidationError("probe radius must be >= 0");
  if (!(height_mm > 0.0) || !(width_mm > 0.0)) {
    throw ValidationError("frame height and width must be > 0");
  }
  if (!(pixel_spacing_mm > 0.0)) throw ValidationError("frame pixel spacing must be > 0");
}

void VolumeSpec::validate() const {
  if (!(in_plane_mm > 0.0) || !(through_plane_mm > 0.0)) {
    throw ValidationError("voxel sizes must be > 0");
  }
}

namespace {

int voxel_count(double extent_mm, double voxel_mm) {
  return std::max(1, static_cast<int>(std::ceil(extent_mm / voxel_mm - 1e-9)));
}

}  // namespace

Volume3D::Dims volume_dims(const ProbeGeometry& geom, const VolumeSpec& spec) {
  geom.validate();
  spec.validate();
  const double reach = geom.height_mm + geom.radius_mm;
  return {voxel_count(2.0 * reach, spec.in_plane_mm), voxel_count(reach, spec.in_plane_mm),
          voxel_count(geom.width_mm, spec.through_plane_mm)};
}

Vec3 volume_origin(const ProbeGeometry& geom) {
  return {-(geom.height_mm + geom.radius_mm), 0.0, 0.0};
}

FanCoordinate voxel_to_fan(Vec3 p, const ProbeGeometry& geom, AngleRange sweep,
                           RadialConvention convention) {
  FanCoordinate fan;
  // atan2(x, y): 0 deg along +y, +90 deg along +x; the y = 0 plane lands on +-90.
  fan.angle_deg = rad_to_deg(std::atan2(p.x, p.y));
  fan.u_mm = p.z;
  const double rho = std::hypot(p.x, p.y);
  const double from_bottom =
      convention == RadialConvention::kRadiusOffset ? rho - geom.radius_mm : rho;
  fan.v_mm = geom.height_mm - from_bottom;
  fan.in_fan = from_bottom >= 0.0 && from_bottom <= geom.height_mm && p.z >= 0.0 &&
               p.z <= geom.width_mm && fan.angle_deg >= sweep.min_deg &&
               fan.angle_deg <= sweep.max_deg;
  return fan;
}

Vec3 fan_to_physical(const FanCoordinate& fan, const ProbeGeometry& geom,
                     RadialConvention convention) {
  const double from_bottom = geom.height_mm - fan.v_mm;
  const double rho =
      convention == RadialConvention::kRadiusOffset ? from_bottom + geom.radius_mm : from_bottom;
  const double theta = deg_to_rad(fan.angle_deg);
  return {rho * std::sin(theta), rho * std::cos(theta), fan.u_mm};
}

std::size_t nearest_angle_index(std::span<const double> sorted_angles, double angle_deg) {
  if (sorted_angles.empty()) throw ValidationError("no angles to search");
  const auto it = std::lower_bound(sorted_angles.begin(), sorted_angles.end(), angle_deg);
  if (it == sorted_angles.begin()) return 0;
  // Step back over equal angles so ties resolve to the lowest index.
  auto lo = std::prev(it);
  while (lo != sorted_angles.begin() && *std::prev(lo) == *lo) --lo;
  if (it == sorted_angles.end()) return static_cast<std::size_t>(lo - sorted_angles.begin());
  const auto hi = it;
  const double d_lo = angle_deg - *lo;
  const double d_hi = *hi - angle_deg;
  return static_cast<std::size_t>((d_hi < d_lo ? hi : lo) - sorted_angles.begin());
}

double median_angular_spacing(std::span<const double> sorted_angles) {
  std::vector<double> gaps;
  for (std::size_t i = 1; i < sorted_angles.size(); ++i) {
    const double g = sorted_angles[i] - sorted_angles[i - 1];
    if (g > 0.0) gaps.push_back(g);
  }
  if (gaps.empty()) return 0.0;
  const std::size_t mid = gaps.size() / 2;
  std::nth_element(gaps.begin(), gaps.begin() + static_cast<std::ptrdiff_t>(mid), gaps.end());
  if (gaps.size() % 2 == 1) return gaps[mid];
  const double upper = gaps[mid];
  const double lower = *std::max_element(gaps.begin(), gaps.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

namespace {

double sample_frame(const Image2D& frame, double col, double row, FrameInterpolation mode) {
  col = std::clamp(col, 0.0, static_cast<double>(frame.width() - 1));
  row = std::clamp(row, 0.0, static_cast<double>(frame.height() - 1));
  if (mode == FrameInterpolation::kNearest) {
    return frame.at(static_cast<int>(std::lround(col)), static_cast<int>(std::lround(row)));
  }
  const int c0 = std::min(static_cast<int>(col), std::max(frame.width() - 2, 0));
  const int r0 = std::min(static_cast<int>(row), std::max(frame.height() - 2, 0));
  const int c1 = std::min(c0 + 1, frame.width() - 1);
  const int r1 = std::min(r0 + 1, frame.height() - 1);
  const double tc = col - c0;
  const double tr = row - r0;
  const double top = frame.at(c0, r0) * (1 - tc) + frame.at(c1, r0) * tc;
  const double bottom = frame.at(c0, r1) * (1 - tc) + frame.at(c1, r1) * tc;
  return top * (1 - tr) + bottom * tr;
}

}  // namespace

Volume3D reconstruct_volume(const FrameStack& stack, const VolumeSpec& spec,
                            const ReconstructOptions& options) {
  if (stack.frames.empty()) throw ValidationError("cannot reconstruct from an empty frame stack");
  stack.validate();
  const ProbeGeometry geom = ProbeGeometry::from_stack(stack);
  const auto dims = volume_dims(geom, spec);
  const Vec3 origin = volume_origin(geom);
  Volume3D volume(dims, {spec.in_plane_mm, spec.in_plane_mm, spec.through_plane_mm}, origin);

  const std::span<const double> angles = stack.angles_deg;
  const AngleRange sweep{angles.front(), angles.back()};
  const double spacing = median_angular_spacing(angles);
  const double max_gap = spacing > 0.0 ? options.gap_factor * spacing
                                       : std::numeric_limits<double>::infinity();
  const double ps = stack.pixel_spacing_mm;
  const int last_row = stack.height_px - 1;

  detail::parallel_for(dims[2], [&](int k) {
    for (int j = 0; j < dims[1]; ++j) {
      for (int i = 0; i < dims[0]; ++i) {
        const Vec3 p = volume.physical(i, j, k);
        const FanCoordinate fan = voxel_to_fan(p, geom, sweep, options.convention);
        if (!fan.in_fan) continue;
        const std::size_t idx = nearest_angle_index(angles, fan.angle_deg);
        if (std::abs(angles[idx] - fan.angle_deg) > max_gap) continue;
        const double from_bottom = geom.height_mm - fan.v_mm;
        const double col = fan.u_mm / ps;
        const double row = last_row - from_bottom / ps;
        volume.at(i, j, k) =
            static_cast<float>(sample_frame(stack.frames[idx], col, row, options.interpolation));
      }
    }
  });
  return volume;
}

FrameStack sample_fan_frames(const Volume3D& volume, std::span<const double> angles_deg,
                             const ProbeGeometry& geom) {
  geom.validate();
  FrameStack stack;
  stack.probe_radius_mm = geom.radius_mm;
  stack.pixel_spacing_mm = geom.pixel_spacing_mm;
  stack.width_px = std::max(1, static_cast<int>(std::lround(geom.width_mm / geom.pixel_spacing_mm)));
  stack.height_px =
      std::max(1, static_cast<int>(std::lround(geom.height_mm / geom.pixel_spacing_mm)));
  stack.angles_deg.assign(angles_deg.begin(), angles_deg.end());
  for (double a : stack.angles_deg) {
    if (!(a >= -90.0 && a <= 90.0)) throw ValidationError("sampling angle outside [-90, 90]");
  }
  stack.frames.assign(angles_deg.size(), Image2D(stack.width_px, stack.height_px, 1,
                                                 {geom.pixel_spacing_mm, geom.pixel_spacing_mm}));
  // h and w follow the frame's pixel grid so the stack satisfies its invariants.
  ProbeGeometry frame_geom = geom;
  frame_geom.height_mm = stack.frame_height_mm();
  frame_geom.width_mm = stack.frame_width_mm();

  const int last_row = stack.height_px - 1;
  detail::parallel_for(static_cast<int>(angles_deg.size()), [&](int f) {
    Image2D& frame = stack.frames[f];
    for (int r = 0; r < stack.height_px; ++r) {
      for (int c = 0; c < stack.width_px; ++c) {
        FanCoordinate fan;
        fan.angle_deg = stack.angles_deg[f];
        fan.u_mm = c * geom.pixel_spacing_mm;
        fan.v_mm = frame_geom.height_mm - (last_row - r) * geom.pixel_spacing_mm;
        fan.in_fan = true;
        frame.at(c, r) = volume.sample(fan_to_physical(fan, frame_geom));
      }
    }
  });
  if (!std::is_sorted(stack.angles_deg.begin(), stack.angles_deg.end())) {
    std::vector<std::size_t> order(stack.angles_deg.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return stack.angles_deg[a] < stack.angles_deg[b];
    });
    FrameStack sorted = stack;
    for (std::size_t i = 0; i < order.size(); ++i) {
      sorted.frames[i] = stack.frames[order[i]];
      sorted.angles_deg[i] = stack.angles_deg[order[i]];
    }
    return sorted;
  }
  return stack;
}

}  // namespace musreg
