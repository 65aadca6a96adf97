#include "musreg/image.hpp"

#include <algorithm>
#include <cmath>

namespace musreg {

Image2D::Image2D(int width, int height, int channels, Vec2 spacing_mm, double fill)
    : width_(width), height_(height), channels_(channels), spacing_(spacing_mm) {
  if (width < 0 || height < 0) throw ValidationError("image dimensions must be non-negative");
  if (channels != 1 && channels != 3) throw ValidationError("image must have 1 or 3 channels");
  set_spacing(spacing_mm);
  pixels_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

void Image2D::set_spacing(Vec2 spacing_mm) {
  if (!(spacing_mm.x > 0.0) || !(spacing_mm.y > 0.0) || !std::isfinite(spacing_mm.x) ||
      !std::isfinite(spacing_mm.y)) {
    throw ValidationError("pixel spacing must be finite and strictly positive");
  }
  spacing_ = spacing_mm;
}

std::uint8_t label_palette_value(Label label) {
  switch (label) {
    case Label::kBackground: return 0;
    case Label::kProstate: return 85;
    case Label::kCancer: return 170;
    case Label::kUrethra: return 255;
    case Label::kLandmark: return 51;
  }
  return 0;
}

std::optional<Label> label_from_palette(std::uint8_t value) {
  switch (value) {
    case 0: return Label::kBackground;
    case 85: return Label::kProstate;
    case 170: return Label::kCancer;
    case 255: return Label::kUrethra;
    case 51: return Label::kLandmark;
    default: return std::nullopt;
  }
}

std::string_view label_name(Label label) {
  switch (label) {
    case Label::kBackground: return "background";
    case Label::kProstate: return "prostate";
    case Label::kCancer: return "cancer";
    case Label::kUrethra: return "urethra";
    case Label::kLandmark: return "landmark";
  }
  return "unknown";
}

Image2D to_gray(const Image2D& image) {
  if (image.channels() == 1) return image;
  Image2D out(image.width(), image.height(), 1, image.spacing());
  for (int r = 0; r < image.height(); ++r) {
    for (int c = 0; c < image.width(); ++c) {
      out.at(c, r) = 0.299 * image.at(c, r, 0) + 0.587 * image.at(c, r, 1) +
                     0.114 * image.at(c, r, 2);
    }
  }
  return out;
}

Image2D window_normalize(const Image2D& image) {
  Image2D out = image;
  auto values = out.values();
  if (values.empty()) return out;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double low = *lo;
  const double range = *hi - *lo;
  if (range <= 0.0) {
    std::fill(values.begin(), values.end(), 0.5);
    return out;
  }
  for (double& v : values) v = (v - low) / range;
  return out;
}

Mask2D prostate_mask(const LabelMap2D& labels) {
  Mask2D mask(labels.width(), labels.height(), labels.spacing());
  auto src = labels.values();
  auto dst = mask.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] != Label::kBackground ? 1 : 0;
  return mask;
}

Mask2D label_mask(const LabelMap2D& labels, Label label) {
  Mask2D mask(labels.width(), labels.height(), labels.spacing());
  auto src = labels.values();
  auto dst = mask.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] == label ? 1 : 0;
  return mask;
}

Image2D mask_to_image(const Mask2D& mask) {
  Image2D out(mask.width(), mask.height(), 1, mask.spacing());
  auto src = mask.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] ? 1.0 : 0.0;
  return out;
}

Mask2D image_to_mask(const Image2D& image) {
  const Image2D gray = to_gray(image);
  Mask2D mask(gray.width(), gray.height(), gray.spacing());
  auto src = gray.values();
  auto dst = mask.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] >= 0.5 ? 1 : 0;
  return mask;
}

Image2D apply_mask(const Image2D& image, const Mask2D& mask) {
  if (image.width() != mask.width() || image.height() != mask.height()) {
    throw ValidationError("apply_mask: image and mask grids differ");
  }
  Image2D out = image;
  for (int r = 0; r < image.height(); ++r) {
    for (int c = 0; c < image.width(); ++c) {
      if (mask.at(c, r)) continue;
      for (int ch = 0; ch < image.channels(); ++ch) out.at(c, r, ch) = 0.0;
    }
  }
  return out;
}

std::size_t foreground_count(const Mask2D& mask) {
  return static_cast<std::size_t>(
      std::count_if(mask.values().begin(), mask.values().end(), [](auto v) { return v != 0; }));
}

std::optional<Vec2> center_of_mass(const Mask2D& mask) {
  double sx = 0.0;
  double sy = 0.0;
  std::size_t n = 0;
  for (int r = 0; r < mask.height(); ++r) {
    for (int c = 0; c < mask.width(); ++c) {
      if (!mask.at(c, r)) continue;
      sx += c;
      sy += r;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return Vec2{sx / n * mask.spacing().x, sy / n * mask.spacing().y};
}

}  // namespace musreg
