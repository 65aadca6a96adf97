#include "musreg/resample.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "sampling.hpp"

namespace musreg {

Image2D resample(const Image2D& src, const PointFunction& map, const GridSpec& target,
                 Interpolation interpolation, double fill) {
  Image2D out(target.width, target.height, src.channels(), target.spacing_mm, fill);
  for (int r = 0; r < target.height; ++r) {
    for (int c = 0; c < target.width; ++c) {
      const Vec2 q = map(out.physical(c, r));
      const auto s = detail::bilinear_stencil(q.x / src.spacing().x, q.y / src.spacing().y,
                                              src.width(), src.height());
      if (!s.inside) continue;
      if (interpolation == Interpolation::kNearest) {
        const int nc = s.tc < 0.5 ? s.c0 : s.c1;
        const int nr = s.tr < 0.5 ? s.r0 : s.r1;
        for (int ch = 0; ch < src.channels(); ++ch) out.at(c, r, ch) = src.at(nc, nr, ch);
      } else {
        for (int ch = 0; ch < src.channels(); ++ch) out.at(c, r, ch) = detail::bilinear(src, s, ch);
      }
    }
  }
  return out;
}

namespace {

template <typename T>
Raster<T> warp_nearest(const Raster<T>& src, const PointFunction& map, const GridSpec& target) {
  Raster<T> out(target.width, target.height, target.spacing_mm, T{});
  for (int r = 0; r < target.height; ++r) {
    for (int c = 0; c < target.width; ++c) {
      const Vec2 q = map(out.physical(c, r));
      const auto s = detail::bilinear_stencil(q.x / src.spacing().x, q.y / src.spacing().y,
                                              src.width(), src.height());
      if (!s.inside) continue;
      out.at(c, r) = src.at(s.tc < 0.5 ? s.c0 : s.c1, s.tr < 0.5 ? s.r0 : s.r1);
    }
  }
  return out;
}

std::vector<double> gaussian_kernel(double sigma_px) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma_px)));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * (i * i) / (sigma_px * sigma_px));
    sum += k[i + radius];
  }
  for (double& v : k) v /= sum;
  return k;
}

}  // namespace

LabelMap2D warp_labels(const LabelMap2D& labels, const PointFunction& map,
                       const GridSpec& target) {
  return warp_nearest(labels, map, target);
}

Mask2D warp_mask(const Mask2D& mask, const PointFunction& map, const GridSpec& target) {
  return warp_nearest(mask, map, target);
}

Image2D gaussian_smooth(const Image2D& image, double sigma_mm) {
  if (!(sigma_mm > 0.0) || image.empty()) return image;
  const int w = image.width();
  const int h = image.height();
  const int nch = image.channels();
  Image2D tmp(w, h, nch, image.spacing());
  Image2D out(w, h, nch, image.spacing());

  const auto kx = gaussian_kernel(sigma_mm / image.spacing().x);
  const int rx = static_cast<int>(kx.size() / 2);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      for (int ch = 0; ch < nch; ++ch) {
        double acc = 0.0;
        for (int i = -rx; i <= rx; ++i) {
          acc += kx[i + rx] * image.at(std::clamp(c + i, 0, w - 1), r, ch);
        }
        tmp.at(c, r, ch) = acc;
      }
    }
  }
  const auto ky = gaussian_kernel(sigma_mm / image.spacing().y);
  const int ry = static_cast<int>(ky.size() / 2);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      for (int ch = 0; ch < nch; ++ch) {
        double acc = 0.0;
        for (int i = -ry; i <= ry; ++i) {
          acc += ky[i + ry] * tmp.at(c, std::clamp(r + i, 0, h - 1), ch);
        }
        out.at(c, r, ch) = acc;
      }
    }
  }
  return out;
}

Image2D shrink(const Image2D& image, int factor) {
  if (factor < 1) throw ValidationError("shrink factor must be >= 1");
  if (factor == 1) return image;
  const int w = (image.width() + factor - 1) / factor;
  const int h = (image.height() + factor - 1) / factor;
  Image2D out(w, h, image.channels(), image.spacing() * static_cast<double>(factor));
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      for (int ch = 0; ch < image.channels(); ++ch) {
        out.at(c, r, ch) = image.at(c * factor, r * factor, ch);
      }
    }
  }
  return out;
}

Mask2D shrink(const Mask2D& mask, int factor) {
  if (factor < 1) throw ValidationError("shrink factor must be >= 1");
  if (factor == 1) return mask;
  const int w = (mask.width() + factor - 1) / factor;
  const int h = (mask.height() + factor - 1) / factor;
  Mask2D out(w, h, mask.spacing() * static_cast<double>(factor));
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) out.at(c, r) = mask.at(c * factor, r * factor);
  }
  return out;
}

}  // namespace musreg
