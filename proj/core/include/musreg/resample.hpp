#pragma once

#include <functional>

#include "musreg/image.hpp"
#include "musreg/transform.hpp"

namespace musreg {

enum class Interpolation { kBilinear, kNearest };

/// Target sampling grid for resampling.
struct GridSpec {
  int width = 0;
  int height = 0;
  Vec2 spacing_mm{1.0, 1.0};

  template <typename R>
  static GridSpec of(const R& raster) {
    return {raster.width(), raster.height(), raster.spacing()};
  }
};

using PointFunction = std::function<Vec2(Vec2)>;

/// output(p) = src(map(p)) for every target pixel centre p; points mapping
/// outside the source pixel-centre hull take `fill`.
Image2D resample(const Image2D& src, const PointFunction& map, const GridSpec& target,
                 Interpolation interpolation = Interpolation::kBilinear, double fill = 0.0);

/// Nearest-neighbour label transfer; outside the source grid is background.
LabelMap2D warp_labels(const LabelMap2D& labels, const PointFunction& map,
                       const GridSpec& target);

/// Nearest-neighbour mask transfer.
Mask2D warp_mask(const Mask2D& mask, const PointFunction& map, const GridSpec& target);

/// Separable Gaussian with sigma in millimetres (clamped edges). sigma <= 0
/// returns a copy.
Image2D gaussian_smooth(const Image2D& image, double sigma_mm);

/// Keeps every factor-th pixel; spacing grows by factor.
Image2D shrink(const Image2D& image, int factor);
Mask2D shrink(const Mask2D& mask, int factor);

}  // namespace musreg
