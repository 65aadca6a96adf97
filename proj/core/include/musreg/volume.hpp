#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "musreg/geometry.hpp"

namespace musreg {

/// Axial voxel grid. Index (i, j, k) maps to physical
/// origin + (i*sx, j*sy, k*sz); storage is x-fastest.
class Volume3D {
 public:
  using Dims = std::array<int, 3>;

  Volume3D() = default;
  Volume3D(Dims dims, Vec3 spacing_mm, Vec3 origin_mm, float fill = 0.0f);

  const Dims& dims() const { return dims_; }
  Vec3 spacing() const { return spacing_; }
  Vec3 origin() const { return origin_; }
  std::size_t voxel_count() const { return voxels_.size(); }

  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(dims_[0]) *
               (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims_[1]) * k);
  }
  float& at(int i, int j, int k) { return voxels_[index(i, j, k)]; }
  float at(int i, int j, int k) const { return voxels_[index(i, j, k)]; }

  Vec3 physical(int i, int j, int k) const {
    return {origin_.x + i * spacing_.x, origin_.y + j * spacing_.y, origin_.z + k * spacing_.z};
  }

  std::span<float> voxels() { return voxels_; }
  std::span<const float> voxels() const { return voxels_; }

  /// Trilinear sample at a physical point; 0 outside the voxel-centre hull.
  double sample(Vec3 p) const;

  friend bool operator==(const Volume3D&, const Volume3D&) = default;

 private:
  Dims dims_{0, 0, 0};
  Vec3 spacing_{1.0, 1.0, 1.0};
  Vec3 origin_{};
  std::vector<float> voxels_;
};

}  // namespace musreg
