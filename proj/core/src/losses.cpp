#include "musreg/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sampling.hpp"

namespace musreg {

namespace {

struct MovingSample {
  double value = 0.0;
  Vec2 gradient_mm;  // d moving / d q
  bool inside = false;
};

MovingSample sample_moving(const Image2D& moving, Vec2 q) {
  const Vec2 sp = moving.spacing();
  const auto s = detail::bilinear_stencil(q.x / sp.x, q.y / sp.y, moving.width(), moving.height());
  MovingSample out;
  if (!s.inside) return out;
  const auto g = detail::bilinear_with_gradient(moving, s);
  out.value = g.value;
  out.gradient_mm = {g.d_col / sp.x, g.d_row / sp.y};
  out.inside = true;
  return out;
}

// Adds d loss / d q (per sample) into parameter gradient space.
void accumulate_affine(std::vector<double>& grad, Vec2 p, Vec2 dq) {
  grad[0] += dq.x * p.x;
  grad[1] += dq.x * p.y;
  grad[2] += dq.x;
  grad[3] += dq.y * p.x;
  grad[4] += dq.y * p.y;
  grad[5] += dq.y;
}

void accumulate_ffd(std::vector<double>& grad, const CompositeTransform& t, Vec2 p, Vec2 dq) {
  // q = A (p + u(p)):  d q / d u_k = w_k * A, so d loss / d u_k = w_k * A^T dq.
  const Vec2 back = t.affine.linear.transposed() * dq;
  t.ffd->for_each_weight(p, [&](int k, double w) {
    grad[2 * static_cast<std::size_t>(k)] += w * back.x;
    grad[2 * static_cast<std::size_t>(k) + 1] += w * back.y;
  });
}

}  // namespace

// ---- Mask SSD ---------------------------------------------------------------

MaskSsd::MaskSsd(const Image2D& fixed_mask, const Image2D& moving_mask)
    : fixed_(&fixed_mask), moving_(&moving_mask) {
  if (fixed_mask.channels() != 1 || moving_mask.channels() != 1) {
    throw ValidationError("mask SSD expects single-channel mask images");
  }
  if (fixed_mask.empty() || moving_mask.empty()) throw ValidationError("mask image is empty");
}

LossResult MaskSsd::evaluate(const AffineTransform2D& t) const {
  LossResult out;
  out.gradient.assign(AffineTransform2D::kParameterCount, 0.0);
  out.gauss_newton.assign(36, 0.0);
  const Image2D& fixed = *fixed_;
  std::size_t inside = 0;
  double sum = 0.0;
  for (int r = 0; r < fixed.height(); ++r) {
    for (int c = 0; c < fixed.width(); ++c) {
      const Vec2 p = fixed.physical(c, r);
      const MovingSample m = sample_moving(*moving_, t.apply(p));
      if (m.inside) ++inside;
      const double diff = fixed.at(c, r) - m.value;
      sum += diff * diff;
      if (!m.inside) continue;
      if (diff != 0.0) accumulate_affine(out.gradient, p, -2.0 * diff * m.gradient_mm);
      const Vec2 g = m.gradient_mm;
      const double j[6] = {g.x * p.x, g.x * p.y, g.x, g.y * p.x, g.y * p.y, g.y};
      for (int a = 0; a < 6; ++a) {
        for (int b = a; b < 6; ++b) out.gauss_newton[a * 6 + b] += 2.0 * j[a] * j[b];
      }
    }
  }
  for (int a = 0; a < 6; ++a) {
    for (int b = 0; b < a; ++b) out.gauss_newton[a * 6 + b] = out.gauss_newton[b * 6 + a];
  }
  for (double& h : out.gauss_newton) h /= static_cast<double>(fixed.pixel_count());
  const double n = static_cast<double>(fixed.pixel_count());
  out.samples = fixed.pixel_count();
  out.loss = sum / n;
  for (double& g : out.gradient) g /= n;
  out.empty_overlap = inside == 0;
  return out;
}

LossResult ssd_loss(const Image2D& fixed_mask, const Image2D& moving_mask,
                    const AffineTransform2D& t) {
  return MaskSsd(fixed_mask, moving_mask).evaluate(t);
}

// ---- Mattes mutual information ----------------------------------------------

MattesMutualInformation::MattesMutualInformation(const Image2D& fixed, const Image2D& moving,
                                                 const Mask2D& mask, int bins)
    : moving_(&moving), bins_(bins) {
  if (bins < 8) throw ValidationError("Mattes MI needs at least 8 bins");
  if (fixed.channels() != 1 || moving.channels() != 1) {
    throw ValidationError("Mattes MI expects single-channel images");
  }
  if (fixed.width() != mask.width() || fixed.height() != mask.height()) {
    throw ValidationError("Mattes MI mask grid differs from the fixed image");
  }
  double fmin = std::numeric_limits<double>::infinity();
  double fmax = -fmin;
  for (int r = 0; r < fixed.height(); ++r) {
    for (int c = 0; c < fixed.width(); ++c) {
      if (!mask.at(c, r)) continue;
      fmin = std::min(fmin, fixed.at(c, r));
      fmax = std::max(fmax, fixed.at(c, r));
    }
  }
  if (!(fmax >= fmin)) throw ValidationError("Mattes MI mask is empty");

  const int usable = bins - 2 * kPadding;
  const double fixed_bin = (fmax - fmin) / usable;
  fixed_constant_ = !(fmax - fmin > 1e-12);
  fixed_marginal_.assign(bins, 0.0);
  for (int r = 0; r < fixed.height(); ++r) {
    for (int c = 0; c < fixed.width(); ++c) {
      if (!mask.at(c, r)) continue;
      int bin = kPadding;
      if (!fixed_constant_) {
        bin = static_cast<int>(std::floor((fixed.at(c, r) - fmin) / fixed_bin)) + kPadding;
        bin = std::clamp(bin, kPadding, bins - kPadding - 1);
      }
      samples_.push_back({fixed.physical(c, r), bin});
      fixed_marginal_[bin] += 1.0;
    }
  }
  for (double& v : fixed_marginal_) v /= static_cast<double>(samples_.size());

  // Moving range covers the whole image and the zero fill value.
  double mmin = 0.0;
  double mmax = 0.0;
  for (double v : moving.values()) {
    mmin = std::min(mmin, v);
    mmax = std::max(mmax, v);
  }
  moving_min_ = mmin;
  moving_bin_size_ = (mmax - mmin) / usable;
}

LossResult MattesMutualInformation::evaluate(const CompositeTransform& t) const {
  const bool wrt_ffd = t.ffd.has_value();
  LossResult out;
  out.gradient.assign(wrt_ffd ? t.ffd->parameter_count() : AffineTransform2D::kParameterCount,
                      0.0);
  out.samples = samples_.size();
  if (fixed_constant_ || !(moving_bin_size_ > 0.0)) {
    out.degenerate = true;
    return out;
  }

  struct Evaluated {
    int fixed_bin;
    int base;      // first Parzen bin (floor(mc) - 1)
    double frac;   // mc - floor(mc)
    Vec2 gradient_mm;
    bool inside;
  };
  std::vector<Evaluated> evaluated(samples_.size());
  const int n_bins = bins_;
  std::vector<double> joint(static_cast<std::size_t>(n_bins) * n_bins, 0.0);
  double sampled_min = std::numeric_limits<double>::infinity();
  double sampled_max = -sampled_min;

  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const Vec2 p = samples_[i].point;
    const MovingSample m = sample_moving(*moving_, t.apply(p));
    sampled_min = std::min(sampled_min, m.value);
    sampled_max = std::max(sampled_max, m.value);
    const double mc = (m.value - moving_min_) / moving_bin_size_ + kPadding;
    const double floor_mc = std::floor(mc);
    Evaluated& e = evaluated[i];
    e.fixed_bin = samples_[i].bin;
    e.base = static_cast<int>(floor_mc) - 1;
    e.frac = mc - floor_mc;
    e.gradient_mm = m.gradient_mm;
    e.inside = m.inside;
    double w[4];
    cubic_bspline_weights(e.frac, w);
    double* row = joint.data() + static_cast<std::size_t>(e.fixed_bin) * n_bins;
    for (int a = 0; a < 4; ++a) {
      const int bin = e.base + a;
      if (bin >= 0 && bin < n_bins) row[bin] += w[a];
    }
  }
  if (!(sampled_max - sampled_min > 1e-12)) {
    out.degenerate = true;
    return out;
  }

  const double n = static_cast<double>(samples_.size());
  for (double& v : joint) v /= n;
  std::vector<double> moving_marginal(n_bins, 0.0);
  for (int f = 0; f < n_bins; ++f) {
    for (int m = 0; m < n_bins; ++m) moving_marginal[m] += joint[static_cast<std::size_t>(f) * n_bins + m];
  }

  double mi = 0.0;
  for (int f = 0; f < n_bins; ++f) {
    if (fixed_marginal_[f] <= 0.0) continue;
    for (int m = 0; m < n_bins; ++m) {
      const double pj = joint[static_cast<std::size_t>(f) * n_bins + m];
      if (pj <= 0.0) continue;
      mi += pj * std::log(pj / (fixed_marginal_[f] * moving_marginal[m]));
    }
  }
  out.loss = -mi;

  // dMI/dtheta = sum_{f,m} dp(f,m)/dtheta * log(p(f,m) / p_m(m)).
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const Evaluated& e = evaluated[i];
    if (!e.inside) continue;
    double dw[4];
    cubic_bspline_derivatives(e.frac, dw);
    const double* row = joint.data() + static_cast<std::size_t>(e.fixed_bin) * n_bins;
    double d_mi_d_mc = 0.0;
    for (int a = 0; a < 4; ++a) {
      const int bin = e.base + a;
      if (bin < 0 || bin >= n_bins || row[bin] <= 0.0) continue;
      d_mi_d_mc += dw[a] * std::log(row[bin] / moving_marginal[bin]);
    }
    if (d_mi_d_mc == 0.0) continue;
    // loss = -MI; mc = (value - min) / bin_size + pad.
    const double coeff = -d_mi_d_mc / (n * moving_bin_size_);
    const Vec2 dq = coeff * e.gradient_mm;
    if (wrt_ffd) {
      accumulate_ffd(out.gradient, t, samples_[i].point, dq);
    } else {
      accumulate_affine(out.gradient, samples_[i].point, dq);
    }
  }
  return out;
}

LossResult mattes_mi(const Image2D& fixed, const Image2D& moving, const CompositeTransform& t,
                     int bins, const Mask2D& mask) {
  return MattesMutualInformation(fixed, moving, mask, bins).evaluate(t);
}

LossResult mattes_mi(const Image2D& fixed, const Image2D& moving, const CompositeTransform& t,
                     int bins, const LabelMap2D& mask) {
  return mattes_mi(fixed, moving, t, bins, prostate_mask(mask));
}

}  // namespace musreg
