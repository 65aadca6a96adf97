#include "musreg/volume.hpp"

#include <cmath>

#include "musreg/errors.hpp"

namespace musreg {

Volume3D::Volume3D(Dims dims, Vec3 spacing_mm, Vec3 origin_mm, float fill)
    : dims_(dims), spacing_(spacing_mm), origin_(origin_mm) {
  for (int d : dims) {
    if (d < 1) throw ValidationError("volume dims must be >= 1");
  }
  if (!(spacing_mm.x > 0) || !(spacing_mm.y > 0) || !(spacing_mm.z > 0)) {
    throw ValidationError("volume spacing must be strictly positive");
  }
  voxels_.assign(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2], fill);
}

double Volume3D::sample(Vec3 p) const {
  const double fx = (p.x - origin_.x) / spacing_.x;
  const double fy = (p.y - origin_.y) / spacing_.y;
  const double fz = (p.z - origin_.z) / spacing_.z;
  constexpr double kEps = 1e-9;
  if (!(fx >= -kEps && fy >= -kEps && fz >= -kEps && fx <= dims_[0] - 1 + kEps &&
        fy <= dims_[1] - 1 + kEps && fz <= dims_[2] - 1 + kEps)) {
    return 0.0;
  }
  auto split = [](double f, int n, int& i0, double& t) {
    i0 = static_cast<int>(std::floor(f));
    if (i0 < 0) i0 = 0;
    if (i0 > n - 2) i0 = n > 1 ? n - 2 : 0;
    t = n > 1 ? f - i0 : 0.0;
    if (t < 0.0) t = 0.0;
    if (t > 1.0) t = 1.0;
  };
  int i0, j0, k0;
  double tx, ty, tz;
  split(fx, dims_[0], i0, tx);
  split(fy, dims_[1], j0, ty);
  split(fz, dims_[2], k0, tz);
  const int i1 = dims_[0] > 1 ? i0 + 1 : i0;
  const int j1 = dims_[1] > 1 ? j0 + 1 : j0;
  const int k1 = dims_[2] > 1 ? k0 + 1 : k0;

  const double c00 = at(i0, j0, k0) * (1 - tx) + at(i1, j0, k0) * tx;
  const double c10 = at(i0, j1, k0) * (1 - tx) + at(i1, j1, k0) * tx;
  const double c01 = at(i0, j0, k1) * (1 - tx) + at(i1, j0, k1) * tx;
  const double c11 = at(i0, j1, k1) * (1 - tx) + at(i1, j1, k1) * tx;
  const double c0 = c00 * (1 - ty) + c10 * ty;
  const double c1 = c01 * (1 - ty) + c11 * ty;
  return c0 * (1 - tz) + c1 * tz;
}

}  // namespace musreg
