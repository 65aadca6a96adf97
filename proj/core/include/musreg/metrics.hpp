#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "musreg/image.hpp"

namespace musreg {

/// 2|I n J| / (|I| + |J|). Both empty gives 1, one empty gives 0.
double dice(const Mask2D& a, const Mask2D& b);

/// Foreground pixels with at least one 8-neighbour that is background or
/// off the grid.
Mask2D boundary(const Mask2D& mask);

struct DirectedHausdorff {
  double a_to_b = 0.0;  // max over boundary(a) of distance to boundary(b)
  double b_to_a = 0.0;
  double symmetric() const { return a_to_b > b_to_a ? a_to_b : b_to_a; }
};

/// Boundary-to-boundary distances in mm. Both masks must be nonempty and
/// share a grid.
DirectedHausdorff hausdorff_directed(const Mask2D& a, const Mask2D& b);
double hausdorff(const Mask2D& a, const Mask2D& b);

/// Squared Euclidean distance (mm^2) from every pixel centre to the nearest
/// foreground pixel centre; +inf everywhere for an empty mask.
std::vector<double> squared_distance_transform(const Mask2D& sites);

double urethra_deviation(Vec2 microus_centroid_mm, Vec2 histology_centroid_mm);
double landmark_error(Vec2 microus_landmark_mm, Vec2 histology_landmark_mm);

struct SliceMetrics {
  int slice = 0;
  double dice = 0.0;
  double hausdorff_mm = 0.0;
  std::optional<double> urethra_deviation_mm;
  std::optional<double> landmark_error_mm;
  friend bool operator==(const SliceMetrics&, const SliceMetrics&) = default;
};

struct MetricSummary {
  std::optional<double> mean;
  std::size_t count = 0;
  friend bool operator==(const MetricSummary&, const MetricSummary&) = default;
};

struct CaseReport {
  std::vector<SliceMetrics> slices;
  std::size_t k = 0;
  MetricSummary dice;
  MetricSummary hausdorff_mm;
  MetricSummary urethra_deviation_mm;
  MetricSummary landmark_error_mm;
};

/// Arithmetic means over the slices where each metric is present.
CaseReport aggregate_case(std::span<const SliceMetrics> slices);

}  // namespace musreg
