#include "musreg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "musreg/errors.hpp"

namespace musreg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_same_grid(const Mask2D& a, const Mask2D& b) {
  if (!same_grid(a, b)) throw ValidationError("masks must share grid and spacing");
}

// Exact 1D squared distance transform over samples at positions i * step
// (lower envelope of parabolas). Infinite inputs are not sites.
void distance_1d(const double* f, double* out, int n, std::size_t stride, double step,
                 std::vector<int>& v, std::vector<double>& z) {
  v.resize(n);
  z.resize(static_cast<std::size_t>(n) + 1);
  int k = -1;
  for (int q = 0; q < n; ++q) {
    const double fq = f[q * stride];
    if (fq == kInf) continue;
    const double xq = q * step;
    while (k >= 0) {
      const double xv = v[k] * step;
      const double s = ((fq + xq * xq) - (f[v[k] * stride] + xv * xv)) / (2.0 * (xq - xv));
      if (s > z[k]) {
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kInf;
        break;
      }
      --k;
    }
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
    }
  }
  if (k < 0) {
    for (int q = 0; q < n; ++q) out[q * stride] = kInf;
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    const double xq = q * step;
    while (z[j + 1] < xq) ++j;
    const double dx = xq - v[j] * step;
    out[q * stride] = dx * dx + f[v[j] * stride];
  }
}

double directed(const Mask2D& from, const std::vector<double>& to_dt) {
  double worst = 0.0;
  for (int r = 0; r < from.height(); ++r) {
    for (int c = 0; c < from.width(); ++c) {
      if (from.at(c, r)) {
        worst = std::max(worst, to_dt[static_cast<std::size_t>(r) * from.width() + c]);
      }
    }
  }
  return std::sqrt(worst);
}

}  // namespace

double dice(const Mask2D& a, const Mask2D& b) {
  require_same_grid(a, b);
  std::size_t na = 0, nb = 0, both = 0;
  const auto va = a.values();
  const auto vb = b.values();
  for (std::size_t i = 0; i < va.size(); ++i) {
    const bool x = va[i] != 0;
    const bool y = vb[i] != 0;
    na += x;
    nb += y;
    both += x && y;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

Mask2D boundary(const Mask2D& mask) {
  Mask2D out(mask.width(), mask.height(), mask.spacing());
  for (int r = 0; r < mask.height(); ++r) {
    for (int c = 0; c < mask.width(); ++c) {
      if (!mask.at(c, r)) continue;
      bool edge = false;
      for (int dr = -1; dr <= 1 && !edge; ++dr) {
        for (int dc = -1; dc <= 1 && !edge; ++dc) {
          if (dr == 0 && dc == 0) continue;
          edge = !mask.contains(c + dc, r + dr) || !mask.at(c + dc, r + dr);
        }
      }
      out.at(c, r) = edge ? 1 : 0;
    }
  }
  return out;
}

std::vector<double> squared_distance_transform(const Mask2D& sites) {
  const int w = sites.width();
  const int h = sites.height();
  std::vector<double> grid(static_cast<std::size_t>(w) * h);
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = sites.values()[i] ? 0.0 : kInf;
  std::vector<double> tmp(grid.size());
  std::vector<int> v;
  std::vector<double> z;
  for (int r = 0; r < h; ++r) {
    const std::size_t row = static_cast<std::size_t>(r) * w;
    distance_1d(grid.data() + row, tmp.data() + row, w, 1, sites.spacing().x, v, z);
  }
  for (int c = 0; c < w; ++c) {
    distance_1d(tmp.data() + c, grid.data() + c, h, static_cast<std::size_t>(w),
                sites.spacing().y, v, z);
  }
  return grid;
}

DirectedHausdorff hausdorff_directed(const Mask2D& a, const Mask2D& b) {
  require_same_grid(a, b);
  if (foreground_count(a) == 0 || foreground_count(b) == 0) {
    throw ValidationError("Hausdorff distance needs nonempty masks");
  }
  const Mask2D ba = boundary(a);
  const Mask2D bb = boundary(b);
  return {directed(ba, squared_distance_transform(bb)),
          directed(bb, squared_distance_transform(ba))};
}

double hausdorff(const Mask2D& a, const Mask2D& b) { return hausdorff_directed(a, b).symmetric(); }

double urethra_deviation(Vec2 microus_centroid_mm, Vec2 histology_centroid_mm) {
  return std::hypot(microus_centroid_mm.x - histology_centroid_mm.x,
                    microus_centroid_mm.y - histology_centroid_mm.y);
}

double landmark_error(Vec2 microus_landmark_mm, Vec2 histology_landmark_mm) {
  return std::hypot(microus_landmark_mm.x - histology_landmark_mm.x,
                    microus_landmark_mm.y - histology_landmark_mm.y);
}

CaseReport aggregate_case(std::span<const SliceMetrics> slices) {
  if (slices.empty()) throw ValidationError("aggregate_case needs at least one slice");
  CaseReport report;
  report.slices.assign(slices.begin(), slices.end());
  report.k = slices.size();
  auto summarize = [&](auto get) {
    MetricSummary s;
    double sum = 0.0;
    for (const auto& m : slices) {
      const std::optional<double> v = get(m);
      if (!v) continue;
      sum += *v;
      ++s.count;
    }
    if (s.count > 0) s.mean = sum / static_cast<double>(s.count);
    return s;
  };
  report.dice = summarize([](const SliceMetrics& m) { return std::optional<double>(m.dice); });
  report.hausdorff_mm =
      summarize([](const SliceMetrics& m) { return std::optional<double>(m.hausdorff_mm); });
  report.urethra_deviation_mm = summarize([](const SliceMetrics& m) { return m.urethra_deviation_mm; });
  report.landmark_error_mm = summarize([](const SliceMetrics& m) { return m.landmark_error_mm; });
  return report;
}

}  // namespace musreg
