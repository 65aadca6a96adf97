#pragma once

#include <algorithm>
#include <cmath>

#include "musreg/image.hpp"

namespace musreg::detail {

inline constexpr double kGridEps = 1e-9;

/// Bilinear stencil for a continuous pixel index. Indices within kGridEps of
/// an integer snap onto it so grid-aligned lookups are exact.
struct Stencil {
  int c0 = 0, c1 = 0, r0 = 0, r1 = 0;
  double tc = 0.0, tr = 0.0;
  bool inside = false;
};

inline double snap(double v) {
  const double r = std::round(v);
  return std::abs(v - r) < kGridEps ? r : v;
}

inline Stencil bilinear_stencil(double col, double row, int width, int height) {
  Stencil s;
  col = snap(col);
  row = snap(row);
  if (!(col >= 0.0 && row >= 0.0 && col <= width - 1 && row <= height - 1)) return s;
  s.inside = true;
  // On the last row or column the stencil collapses so the lookup is exact.
  s.c0 = static_cast<int>(col);
  s.r0 = static_cast<int>(row);
  s.c1 = std::min(s.c0 + 1, width - 1);
  s.r1 = std::min(s.r0 + 1, height - 1);
  s.tc = col - s.c0;
  s.tr = row - s.r0;
  return s;
}

inline double bilinear(const Image2D& image, const Stencil& s, int channel = 0) {
  const double v00 = image.at(s.c0, s.r0, channel);
  const double v10 = image.at(s.c1, s.r0, channel);
  const double v01 = image.at(s.c0, s.r1, channel);
  const double v11 = image.at(s.c1, s.r1, channel);
  if (s.tc == 0.0 && s.tr == 0.0) return v00;
  const double top = v00 + (v10 - v00) * s.tc;
  const double bottom = v01 + (v11 - v01) * s.tc;
  return top + (bottom - top) * s.tr;
}

/// Value and derivatives with respect to the continuous column and row index.
struct SampleWithGradient {
  double value = 0.0;
  double d_col = 0.0;
  double d_row = 0.0;
};

inline SampleWithGradient bilinear_with_gradient(const Image2D& image, const Stencil& s) {
  const double v00 = image.at(s.c0, s.r0);
  const double v10 = image.at(s.c1, s.r0);
  const double v01 = image.at(s.c0, s.r1);
  const double v11 = image.at(s.c1, s.r1);
  SampleWithGradient out;
  const double top = v00 + (v10 - v00) * s.tc;
  const double bottom = v01 + (v11 - v01) * s.tc;
  out.value = top + (bottom - top) * s.tr;
  if (s.c1 != s.c0) out.d_col = (v10 - v00) * (1.0 - s.tr) + (v11 - v01) * s.tr;
  if (s.r1 != s.r0) out.d_row = bottom - top;
  return out;
}

}  // namespace musreg::detail
