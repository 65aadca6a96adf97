#pragma once

#include <cstddef>
#include <vector>

#include "musreg/image.hpp"
#include "musreg/transform.hpp"

namespace musreg {

struct LossResult {
  double loss = 0.0;
  std::vector<double> gradient;
  /// Mask SSD: no fixed pixel maps inside the moving image.
  bool empty_overlap = false;
  /// Mattes MI: constant fixed or moving intensities inside the mask.
  bool degenerate = false;
  std::size_t samples = 0;
  /// Mask SSD only: Gauss-Newton approximation of the Hessian, row-major
  /// 6x6 in the same parameter order as the gradient.
  std::vector<double> gauss_newton;
};

/// Mean over every fixed pixel of (fixed - moving(t(p)))^2 on mask images.
/// Gradient is with respect to the affine parameters in
/// AffineTransform2D::parameters() order.
LossResult ssd_loss(const Image2D& fixed_mask, const Image2D& moving_mask,
                    const AffineTransform2D& t);

/// Precomputed mask-SSD evaluator (fixed samples cached).
class MaskSsd {
 public:
  MaskSsd(const Image2D& fixed_mask, const Image2D& moving_mask);
  LossResult evaluate(const AffineTransform2D& t) const;

 private:
  const Image2D* fixed_;
  const Image2D* moving_;
};

/// Negative Mattes mutual information between fixed pixels inside `mask` and
/// moving(t(p)). Fixed intensities use a zero-order window, moving
/// intensities a cubic B-spline Parzen window. The gradient is with respect
/// to t.ffd's displacements when present, otherwise the affine parameters.
LossResult mattes_mi(const Image2D& fixed, const Image2D& moving, const CompositeTransform& t,
                     int bins, const Mask2D& mask);
LossResult mattes_mi(const Image2D& fixed, const Image2D& moving, const CompositeTransform& t,
                     int bins, const LabelMap2D& mask);

/// Mattes MI evaluator with fixed-side binning and moving range cached.
class MattesMutualInformation {
 public:
  static constexpr int kPadding = 2;

  MattesMutualInformation(const Image2D& fixed, const Image2D& moving, const Mask2D& mask,
                          int bins);

  LossResult evaluate(const CompositeTransform& t) const;
  int bins() const { return bins_; }
  std::size_t sample_count() const { return samples_.size(); }

 private:
  struct FixedSample {
    Vec2 point;
    int bin;
  };

  const Image2D* moving_;
  int bins_;
  std::vector<FixedSample> samples_;
  std::vector<double> fixed_marginal_;
  double moving_min_ = 0.0;
  double moving_bin_size_ = 0.0;
  bool fixed_constant_ = false;
};

}  // namespace musreg
