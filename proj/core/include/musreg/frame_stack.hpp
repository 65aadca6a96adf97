#pragma once

#include <vector>

#include "musreg/image.hpp"

namespace musreg {

/// Fan frames of one rotational sweep, sorted by rotation angle.
///
/// In a frame, column c sits at distance c * pixel_spacing from the left edge
/// (along the probe axis) and row r sits at distance
/// (height_px - 1 - r) * pixel_spacing above the bottom edge, which touches
/// the probe surface. The lower-left pixel is the frame origin.
struct FrameStack {
  std::vector<Image2D> frames;
  std::vector<double> angles_deg;
  double probe_radius_mm = 0.0;
  double pixel_spacing_mm = 1.0;
  int width_px = 0;
  int height_px = 0;

  /// Radial depth h covered by a frame.
  double frame_height_mm() const { return height_px * pixel_spacing_mm; }
  /// Extent w along the probe axis.
  double frame_width_mm() const { return width_px * pixel_spacing_mm; }

  /// Throws ValidationError when any invariant is broken.
  void validate() const;
};

}  // namespace musreg
