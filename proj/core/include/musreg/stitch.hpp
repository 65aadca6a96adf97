#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "musreg/image.hpp"

namespace musreg {

enum class InkSide { kLeftBlack, kRightBlue, kNone };

/// One histology fragment and the human orientation decisions recorded for it.
struct Fragment {
  Image2D image;
  bool flip_horizontal = false;
  double gross_rotation_deg = 0.0;  // counter-clockwise as displayed
  InkSide ink_side = InkSide::kNone;
};

/// p' = scale * R(rotation) * p + translation, all in millimetres.
struct RigidTransform2D {
  double rotation_deg = 0.0;
  Vec2 translation_mm;
  std::optional<double> scale;

  double scale_or_one() const { return scale.value_or(1.0); }
  Vec2 apply(Vec2 p) const;
  Vec2 apply_inverse(Vec2 p) const;
};

struct LandmarkPair {
  Vec2 moving;
  Vec2 fixed;
};

struct Canvas {
  int width_px = 0;
  int height_px = 0;
  Vec2 spacing_mm{1.0, 1.0};
  double background = 1.0;  // white slide background
};

/// Horizontal flip first, then rotation about the image centre. Multiples of
/// 90 degrees are exact index permutations; other angles are resampled
/// bilinearly onto the rotated bounding box with a white background.
Image2D orient_fragment(const Fragment& fragment);

/// Least-squares rigid (or similarity) fit minimising sum |T(m_i) - f_i|^2.
/// Never returns a reflection.
RigidTransform2D fit_rigid_landmarks(std::span<const LandmarkPair> pairs, bool allow_scale);

/// Root-mean-square residual of a transform over landmark pairs.
double landmark_rms(const RigidTransform2D& t, std::span<const LandmarkPair> pairs);

/// Resamples every fragment into the canvas. transforms[i] maps fragment i's
/// physical coordinates into canvas coordinates. Earlier fragments win where
/// footprints overlap; uncovered pixels take the canvas background.
Image2D compose_fragments(std::span<const Image2D> fragments,
                          std::span<const RigidTransform2D> transforms, const Canvas& canvas);

// ---- Stitch plan -------------------------------------------------------------

/// Orientation and placement of one fragment. Landmarks are in oriented
/// fragment millimetres (moving) and canvas millimetres (fixed); an explicit
/// transform takes precedence over landmarks.
struct FragmentPlan {
  bool flip_horizontal = false;
  double gross_rotation_deg = 0.0;
  InkSide ink_side = InkSide::kNone;
  std::optional<RigidTransform2D> transform;
  std::vector<LandmarkPair> landmarks;
};

struct StitchPlan {
  Canvas canvas;
  bool allow_scale = false;
  std::vector<FragmentPlan> fragments;
};

std::string_view ink_side_name(InkSide side);
StitchPlan stitch_plan_from_json(const std::string& text);
StitchPlan load_stitch_plan(const std::filesystem::path& path);

/// Orients every fragment, fits its placement and composes the canvas.
/// images[i] pairs with plan.fragments[i].
Image2D stitch(std::span<const Image2D> images, const StitchPlan& plan);

}  // namespace musreg
