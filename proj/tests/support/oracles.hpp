#pragma once

// Independent reference implementations used to check the library. They
// favour obviousness over speed and share no code with musreg internals.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "musreg/frame_stack.hpp"
#include "musreg/image.hpp"
#include "musreg/stitch.hpp"

namespace oracle {

using musreg::Image2D;
using musreg::Mask2D;
using musreg::Vec2;

double dice(const Mask2D& a, const Mask2D& b);

/// Boundary pixel centres in mm (8-neighbourhood, grid edge counts as background).
std::vector<Vec2> boundary_points(const Mask2D& m);

/// Max over a of min over b, by exhaustive double loop.
double directed_hausdorff(const Mask2D& a, const Mask2D& b);
double hausdorff(const Mask2D& a, const Mask2D& b);

/// Least-squares rotation + translation via SVD (Kabsch), returned as
/// {rotation_deg, tx, ty}.
std::array<double, 3> procrustes(std::span<const musreg::LandmarkPair> pairs);

/// Voxel value predicted by nearest-angle, bilinear lookup with the
/// radius-offset convention; a plain scalar loop over every frame.
double reconstruct_voxel(const musreg::FrameStack& stack, double x_mm, double y_mm, double z_mm,
                         double gap_factor = 1.5);

/// Central difference of f along coordinate k.
double central_difference(const std::function<double(const std::vector<double>&)>& f,
                          std::vector<double> x, std::size_t k, double h);

/// |a - n| / max(|a|, |n|), 0 when both vanish.
double relative_error(double analytic, double numeric);

/// Random union of discs and rectangles on a w x h grid.
Mask2D random_mask(std::mt19937_64& rng, int w, int h, Vec2 spacing = {1.0, 1.0});

/// Smooth random blob mask rendered as an image in [0, 1] with soft edges.
Image2D soft_blob(std::mt19937_64& rng, int w, int h, Vec2 spacing);

/// Smooth random texture in [0, 1].
Image2D smooth_texture(std::mt19937_64& rng, int w, int h, Vec2 spacing);

/// Per-case rows of the published clinical evaluation table:
/// {dice, hausdorff_mm, urethra_deviation_mm, landmark_error_mm}.
const std::vector<std::array<double, 4>>& clinical_table_rows();
/// Printed averages of that table and the decimals each is printed with.
std::array<double, 4> clinical_table_averages();
std::array<int, 4> clinical_table_decimals();

/// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);

}  // namespace oracle
