#pragma once

#include <array>
#include <cmath>
#include <concepts>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "musreg/geometry.hpp"

namespace musreg {

/// Anything that maps a fixed-space point (mm) to a moving-space point (mm).
template <typename T>
concept PointMap = requires(const T& t, Vec2 p) {
  { t(p) } -> std::convertible_to<Vec2>;
};

/// p -> linear * p + translation. Parameter order is row-major 2x3:
/// (a, b, tx, c, d, ty).
struct AffineTransform2D {
  Mat2 linear = Mat2::identity();
  Vec2 translation;

  static constexpr int kParameterCount = 6;

  Vec2 apply(Vec2 p) const { return linear * p + translation; }
  Vec2 operator()(Vec2 p) const { return apply(p); }
  AffineTransform2D inverse() const;
  /// this(other(p))
  AffineTransform2D compose(const AffineTransform2D& other) const;

  std::array<double, 6> parameters() const;
  static AffineTransform2D from_parameters(std::span<const double, 6> params);
  /// Throws ValidationError when |det| <= 1e-12.
  void validate() const;

  friend bool operator==(const AffineTransform2D&, const AffineTransform2D&) = default;
};

/// Cubic B-spline free-form displacement field on a regular control grid.
/// Control point (i, j) sits at origin + (i * spacing.x, j * spacing.y);
/// displacements are stored interleaved [dx0, dy0, dx1, dy1, ...] with the
/// control index i + dims[0] * j.
class FFDTransform2D {
 public:
  FFDTransform2D() = default;
  FFDTransform2D(Vec2 grid_origin_mm, Vec2 grid_spacing_mm, std::array<int, 2> grid_dims);

  /// Grid over [domain_min, domain_max] with the requested control spacing
  /// plus one extra ring of control points on each side.
  static FFDTransform2D covering(Vec2 domain_min, Vec2 domain_max, Vec2 spacing_mm);

  Vec2 grid_origin() const { return origin_; }
  Vec2 grid_spacing() const { return spacing_; }
  std::array<int, 2> grid_dims() const { return dims_; }
  int control_count() const { return dims_[0] * dims_[1]; }
  int parameter_count() const { return 2 * control_count(); }

  std::span<double> displacements() { return displacements_; }
  std::span<const double> displacements() const { return displacements_; }
  Vec2 control_displacement(int i, int j) const;
  void set_control_displacement(int i, int j, Vec2 d);
  bool is_zero() const;

  Vec2 displacement(Vec2 p) const;
  /// d(displacement)/dp.
  Mat2 displacement_jacobian(Vec2 p) const;
  /// p + displacement(p)
  Vec2 operator()(Vec2 p) const { return p + displacement(p); }

  /// Calls f(control_index, weight) for every control point with nonzero
  /// basis weight at p.
  template <typename F>
  void for_each_weight(Vec2 p, F&& f) const;

  friend bool operator==(const FFDTransform2D&, const FFDTransform2D&) = default;

 private:
  Vec2 origin_;
  Vec2 spacing_{1.0, 1.0};
  std::array<int, 2> dims_{0, 0};
  std::vector<double> displacements_;
};

/// Uniform cubic B-spline basis pieces for fractional offset u in [0, 1).
inline void cubic_bspline_weights(double u, double w[4]) {
  const double u2 = u * u;
  const double u3 = u2 * u;
  const double v = 1.0 - u;
  w[0] = v * v * v / 6.0;
  w[1] = (3.0 * u3 - 6.0 * u2 + 4.0) / 6.0;
  w[2] = (-3.0 * u3 + 3.0 * u2 + 3.0 * u + 1.0) / 6.0;
  w[3] = u3 / 6.0;
}

inline void cubic_bspline_derivatives(double u, double d[4]) {
  const double v = 1.0 - u;
  d[0] = -0.5 * v * v;
  d[1] = 1.5 * u * u - 2.0 * u;
  d[2] = -1.5 * u * u + u + 0.5;
  d[3] = 0.5 * u * u;
}

template <typename F>
void FFDTransform2D::for_each_weight(Vec2 p, F&& f) const {
  const double gx = (p.x - origin_.x) / spacing_.x;
  const double gy = (p.y - origin_.y) / spacing_.y;
  if (!(gx > -2.0 && gy > -2.0 && gx < dims_[0] + 1.0 && gy < dims_[1] + 1.0)) return;
  const double fx = std::floor(gx);
  const double fy = std::floor(gy);
  double wx[4];
  double wy[4];
  cubic_bspline_weights(gx - fx, wx);
  cubic_bspline_weights(gy - fy, wy);
  const int ix = static_cast<int>(fx) - 1;
  const int iy = static_cast<int>(fy) - 1;
  for (int b = 0; b < 4; ++b) {
    const int j = iy + b;
    if (j < 0 || j >= dims_[1]) continue;
    for (int a = 0; a < 4; ++a) {
      const int i = ix + a;
      if (i < 0 || i >= dims_[0]) continue;
      const double w = wx[a] * wy[b];
      if (w != 0.0) f(i + dims_[0] * j, w);
    }
  }
}

/// Fixed-space point -> FFD displacement -> affine -> moving space.
struct CompositeTransform {
  AffineTransform2D affine;
  std::optional<FFDTransform2D> ffd;

  Vec2 apply(Vec2 p) const {
    return affine.apply(ffd ? p + ffd->displacement(p) : p);
  }
  Vec2 operator()(Vec2 p) const { return apply(p); }
  Mat2 jacobian(Vec2 p) const;
};

/// Newton inversion of a composite transform: finds p with t(p) = q.
Vec2 invert_point(const CompositeTransform& t, Vec2 q, int max_iterations = 100,
                  double tolerance_mm = 1e-10);

/// Point map for the numerical inverse of a composite transform.
struct InverseTransform {
  const CompositeTransform* forward = nullptr;
  Vec2 operator()(Vec2 q) const { return invert_point(*forward, q); }
};

// ---- JSON ------------------------------------------------------------------

std::string affine_to_json(const AffineTransform2D& t);
AffineTransform2D affine_from_json(const std::string& text);
std::string ffd_to_json(const FFDTransform2D& t);
FFDTransform2D ffd_from_json(const std::string& text);

void save_affine(const AffineTransform2D& t, const std::filesystem::path& path);
AffineTransform2D load_affine(const std::filesystem::path& path);
void save_ffd(const FFDTransform2D& t, const std::filesystem::path& path);
FFDTransform2D load_ffd(const std::filesystem::path& path);

}  // namespace musreg
