#include "musreg/transform.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "musreg/errors.hpp"
#include "musreg/io.hpp"

namespace musreg {

using nlohmann::json;

AffineTransform2D AffineTransform2D::inverse() const {
  validate();
  const Mat2 inv = linear.inverse();
  return {inv, -(inv * translation)};
}

AffineTransform2D AffineTransform2D::compose(const AffineTransform2D& other) const {
  return {linear * other.linear, linear * other.translation + translation};
}

std::array<double, 6> AffineTransform2D::parameters() const {
  return {linear.a, linear.b, translation.x, linear.c, linear.d, translation.y};
}

AffineTransform2D AffineTransform2D::from_parameters(std::span<const double, 6> p) {
  return {{p[0], p[1], p[3], p[4]}, {p[2], p[5]}};
}

void AffineTransform2D::validate() const {
  const double det = linear.det();
  if (!std::isfinite(det) || std::abs(det) <= 1e-12) {
    throw ValidationError("affine transform is singular");
  }
  if (!std::isfinite(translation.x) || !std::isfinite(translation.y)) {
    throw ValidationError("affine translation is not finite");
  }
}

FFDTransform2D::FFDTransform2D(Vec2 grid_origin_mm, Vec2 grid_spacing_mm,
                               std::array<int, 2> grid_dims)
    : origin_(grid_origin_mm), spacing_(grid_spacing_mm), dims_(grid_dims) {
  if (grid_dims[0] < 1 || grid_dims[1] < 1) throw ValidationError("FFD grid dims must be >= 1");
  if (!(grid_spacing_mm.x > 0.0) || !(grid_spacing_mm.y > 0.0)) {
    throw ValidationError("FFD grid spacing must be > 0");
  }
  displacements_.assign(static_cast<std::size_t>(2) * grid_dims[0] * grid_dims[1], 0.0);
}

FFDTransform2D FFDTransform2D::covering(Vec2 domain_min, Vec2 domain_max, Vec2 spacing_mm) {
  auto cells = [](double extent, double spacing) {
    return std::max(1, static_cast<int>(std::ceil(extent / spacing - 1e-9)));
  };
  const int mx = cells(domain_max.x - domain_min.x, spacing_mm.x);
  const int my = cells(domain_max.y - domain_min.y, spacing_mm.y);
  return FFDTransform2D(domain_min - spacing_mm, spacing_mm, {mx + 3, my + 3});
}

Vec2 FFDTransform2D::control_displacement(int i, int j) const {
  const std::size_t k = 2 * static_cast<std::size_t>(i + dims_[0] * j);
  return {displacements_[k], displacements_[k + 1]};
}

void FFDTransform2D::set_control_displacement(int i, int j, Vec2 d) {
  const std::size_t k = 2 * static_cast<std::size_t>(i + dims_[0] * j);
  displacements_[k] = d.x;
  displacements_[k + 1] = d.y;
}

bool FFDTransform2D::is_zero() const {
  return std::all_of(displacements_.begin(), displacements_.end(),
                     [](double v) { return v == 0.0; });
}

Vec2 FFDTransform2D::displacement(Vec2 p) const {
  Vec2 d;
  for_each_weight(p, [&](int k, double w) {
    d.x += w * displacements_[2 * static_cast<std::size_t>(k)];
    d.y += w * displacements_[2 * static_cast<std::size_t>(k) + 1];
  });
  return d;
}

Mat2 FFDTransform2D::displacement_jacobian(Vec2 p) const {
  Mat2 jac{0.0, 0.0, 0.0, 0.0};
  const double gx = (p.x - origin_.x) / spacing_.x;
  const double gy = (p.y - origin_.y) / spacing_.y;
  if (!(gx > -2.0 && gy > -2.0 && gx < dims_[0] + 1.0 && gy < dims_[1] + 1.0)) return jac;
  const double fx = std::floor(gx);
  const double fy = std::floor(gy);
  double wx[4], wy[4], dx[4], dy[4];
  cubic_bspline_weights(gx - fx, wx);
  cubic_bspline_weights(gy - fy, wy);
  cubic_bspline_derivatives(gx - fx, dx);
  cubic_bspline_derivatives(gy - fy, dy);
  const int ix = static_cast<int>(fx) - 1;
  const int iy = static_cast<int>(fy) - 1;
  for (int b = 0; b < 4; ++b) {
    const int j = iy + b;
    if (j < 0 || j >= dims_[1]) continue;
    for (int a = 0; a < 4; ++a) {
      const int i = ix + a;
      if (i < 0 || i >= dims_[0]) continue;
      const Vec2 d = control_displacement(i, j);
      const double wdx = dx[a] * wy[b] / spacing_.x;
      const double wdy = wx[a] * dy[b] / spacing_.y;
      jac.a += d.x * wdx;
      jac.b += d.x * wdy;
      jac.c += d.y * wdx;
      jac.d += d.y * wdy;
    }
  }
  return jac;
}

Mat2 CompositeTransform::jacobian(Vec2 p) const {
  if (!ffd) return affine.linear;
  Mat2 local = ffd->displacement_jacobian(p);
  local.a += 1.0;
  local.d += 1.0;
  return affine.linear * local;
}

Vec2 invert_point(const CompositeTransform& t, Vec2 q, int max_iterations, double tolerance_mm) {
  const AffineTransform2D affine_inv = t.affine.inverse();
  Vec2 p = affine_inv.apply(q);
  if (!t.ffd || t.ffd->is_zero()) return p;
  // Fixed-point start: undo the displacement at the affine pre-image.
  p = p - t.ffd->displacement(p);
  Vec2 best = p;
  double best_err = norm(t.apply(p) - q);
  for (int it = 0; it < max_iterations && best_err > tolerance_mm; ++it) {
    const Vec2 r = t.apply(p) - q;
    const Mat2 jac = t.jacobian(p);
    Vec2 step;
    if (std::abs(jac.det()) > 1e-12) {
      step = jac.inverse() * r;
    } else {
      step = affine_inv.linear * r;
    }
    // Damped update keeps Newton inside the basin when the field folds.
    double alpha = 1.0;
    Vec2 candidate = p - step;
    double err = norm(t.apply(candidate) - q);
    while (err > norm(r) && alpha > 1e-4) {
      alpha *= 0.5;
      candidate = p - alpha * step;
      err = norm(t.apply(candidate) - q);
    }
    p = candidate;
    if (err < best_err) {
      best_err = err;
      best = p;
    }
  }
  return best;
}

// ---- JSON ------------------------------------------------------------------

std::string affine_to_json(const AffineTransform2D& t) {
  const json j = {{"matrix",
                   {{t.linear.a, t.linear.b, t.translation.x},
                    {t.linear.c, t.linear.d, t.translation.y}}}};
  return j.dump(2) + "\n";
}

AffineTransform2D affine_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    const auto m = j.at("matrix").get<std::vector<std::vector<double>>>();
    if (m.size() != 2 || m[0].size() != 3 || m[1].size() != 3) {
      throw FormatError("affine matrix must be 2x3");
    }
    AffineTransform2D t{{m[0][0], m[0][1], m[1][0], m[1][1]}, {m[0][2], m[1][2]}};
    t.validate();
    return t;
  } catch (const json::exception& e) {
    throw FormatError(std::string("invalid affine JSON: ") + e.what());
  }
}

std::string ffd_to_json(const FFDTransform2D& t) {
  const auto d = t.grid_dims();
  const json j = {
      {"grid_origin_mm", {t.grid_origin().x, t.grid_origin().y}},
      {"grid_spacing_mm", {t.grid_spacing().x, t.grid_spacing().y}},
      {"grid_dims", {d[0], d[1]}},
      {"displacements_mm", std::vector<double>(t.displacements().begin(), t.displacements().end())},
  };
  return j.dump(2) + "\n";
}

FFDTransform2D ffd_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    const auto origin = j.at("grid_origin_mm").get<std::vector<double>>();
    const auto spacing = j.at("grid_spacing_mm").get<std::vector<double>>();
    const auto dims = j.at("grid_dims").get<std::vector<int>>();
    const auto disp = j.at("displacements_mm").get<std::vector<double>>();
    if (origin.size() != 2 || spacing.size() != 2 || dims.size() != 2) {
      throw FormatError("FFD grid fields must have two entries");
    }
    FFDTransform2D t({origin[0], origin[1]}, {spacing[0], spacing[1]}, {dims[0], dims[1]});
    if (disp.size() != static_cast<std::size_t>(t.parameter_count())) {
      throw FormatError("FFD displacement count does not match grid dims");
    }
    for (double v : disp) {
      if (!std::isfinite(v)) throw ValidationError("FFD displacement is not finite");
    }
    std::copy(disp.begin(), disp.end(), t.displacements().begin());
    return t;
  } catch (const json::exception& e) {
    throw FormatError(std::string("invalid FFD JSON: ") + e.what());
  }
}

void save_affine(const AffineTransform2D& t, const std::filesystem::path& path) {
  write_file_atomic(path, affine_to_json(t));
}

AffineTransform2D load_affine(const std::filesystem::path& path) {
  return affine_from_json(read_text_file(path));
}

void save_ffd(const FFDTransform2D& t, const std::filesystem::path& path) {
  write_file_atomic(path, ffd_to_json(t));
}

FFDTransform2D load_ffd(const std::filesystem::path& path) {
  return ffd_from_json(read_text_file(path));
}

}  // namespace musreg
