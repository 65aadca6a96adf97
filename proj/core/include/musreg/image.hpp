#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "musreg/errors.hpp"
#include "musreg/geometry.hpp"

namespace musreg {

// Physical convention for every 2D raster: the centre of pixel (col, row)
// sits at (col * spacing.x, row * spacing.y) millimetres. Row 0 is the top
// row of the stored PNG.

/// Row-major scalar (channels == 1) or interleaved RGB (channels == 3) image
/// with intensities in [0, 1].
class Image2D {
 public:
  Image2D() = default;
  Image2D(int width, int height, int channels = 1, Vec2 spacing_mm = {1.0, 1.0},
          double fill = 0.0);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  Vec2 spacing() const { return spacing_; }
  void set_spacing(Vec2 spacing_mm);
  bool empty() const { return pixels_.empty(); }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }

  double& at(int col, int row, int channel = 0) {
    return pixels_[(static_cast<std::size_t>(row) * width_ + col) * channels_ + channel];
  }
  double at(int col, int row, int channel = 0) const {
    return pixels_[(static_cast<std::size_t>(row) * width_ + col) * channels_ + channel];
  }
  std::span<double> values() { return pixels_; }
  std::span<const double> values() const { return pixels_; }

  Vec2 physical(double col, double row) const { return {col * spacing_.x, row * spacing_.y}; }
  /// Extent covered by pixel centres: ((width-1)*sx, (height-1)*sy).
  Vec2 extent_mm() const { return {(width_ - 1) * spacing_.x, (height_ - 1) * spacing_.y}; }

  friend bool operator==(const Image2D&, const Image2D&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 1;
  Vec2 spacing_{1.0, 1.0};
  std::vector<double> pixels_;
};

/// Generic single-channel raster used for label maps and binary masks.
template <typename T>
class Raster {
 public:
  Raster() = default;
  Raster(int width, int height, Vec2 spacing_mm = {1.0, 1.0}, T fill = T{})
      : width_(width), height_(height), spacing_(spacing_mm),
        values_(static_cast<std::size_t>(width) * height, fill) {
    if (width < 0 || height < 0) throw ValidationError("raster dimensions must be non-negative");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  Vec2 spacing() const { return spacing_; }
  void set_spacing(Vec2 spacing_mm) { spacing_ = spacing_mm; }
  bool empty() const { return values_.empty(); }
  std::size_t size() const { return values_.size(); }

  T& at(int col, int row) { return values_[static_cast<std::size_t>(row) * width_ + col]; }
  T at(int col, int row) const { return values_[static_cast<std::size_t>(row) * width_ + col]; }
  bool contains(int col, int row) const {
    return col >= 0 && row >= 0 && col < width_ && row < height_;
  }
  std::span<T> values() { return values_; }
  std::span<const T> values() const { return values_; }

  Vec2 physical(double col, double row) const { return {col * spacing_.x, row * spacing_.y}; }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  Vec2 spacing_{1.0, 1.0};
  std::vector<T> values_;
};

enum class Label : std::uint8_t {
  kBackground = 0,
  kProstate = 1,
  kCancer = 2,
  kUrethra = 3,
  kLandmark = 4,
};

inline constexpr int kLabelCount = 5;

/// Every label other than background lies inside the prostate, so the
/// prostate mask of a label map is its nonzero support.
using LabelMap2D = Raster<Label>;
using Mask2D = Raster<std::uint8_t>;

/// 8-bit PNG value for each label code (bit-exact file contract).
std::uint8_t label_palette_value(Label label);
/// Inverse of label_palette_value; nullopt for values outside the palette.
std::optional<Label> label_from_palette(std::uint8_t value);
std::string_view label_name(Label label);

template <typename A, typename B>
bool same_grid(const A& a, const B& b) {
  return a.width() == b.width() && a.height() == b.height() && a.spacing() == b.spacing();
}

/// Rec.601 luma for RGB; copy for grayscale.
Image2D to_gray(const Image2D& image);

/// Min-max normalise to [0, 1]. A constant image maps to 0.5 everywhere.
Image2D window_normalize(const Image2D& image);

Mask2D prostate_mask(const LabelMap2D& labels);
Mask2D label_mask(const LabelMap2D& labels, Label label);
Image2D mask_to_image(const Mask2D& mask);
/// Binarise at 0.5.
Mask2D image_to_mask(const Image2D& image);
/// Pixels outside the mask set to zero. Grids must match.
Image2D apply_mask(const Image2D& image, const Mask2D& mask);

std::size_t foreground_count(const Mask2D& mask);
/// Unweighted mean of foreground pixel centres in mm; nullopt when empty.
std::optional<Vec2> center_of_mass(const Mask2D& mask);

}  // namespace musreg
