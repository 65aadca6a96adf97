#include "musreg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <json.hpp>

#include "musreg/errors.hpp"
#include "musreg/io.hpp"
#include "musreg/resample.hpp"
#include "parallel.hpp"

namespace musreg {

void PhantomSpec::validate() const {
  if (!(prostate_semi_axes_mm.x > 0.0 && prostate_semi_axes_mm.y > 0.0 &&
        prostate_semi_axes_mm.z > 0.0)) {
    throw ValidationError("prostate semi-axes must be positive");
  }
  if (warp_amplitude_mm < 0.0 || noise_sigma < 0.0 || texture_amplitude < 0.0 ||
      shape_irregularity < 0.0) {
    throw ValidationError("phantom amplitudes must be >= 0");
  }
  if (!(gamma > 0.0)) throw ValidationError("gamma must be > 0");
  if (!(scale > 0.0)) throw ValidationError("scale must be > 0");
  if (!(warp_control_spacing_mm > 0.0)) throw ValidationError("warp control spacing must be > 0");
  if (angle_count < 2) throw ValidationError("phantom needs at least two angles");
  if (!(histology_pixel_mm > 0.0) || !(histology_slice_spacing_mm > 0.0)) {
    throw ValidationError("histology spacings must be > 0");
  }
  probe.validate();
  volume.validate();
}

// ---- Anatomy --------------------------------------------------------------------

bool PhantomAnatomy::prostate_contains(Vec3 p) const {
  const double dx = p.x - center.x;
  const double dy = p.y - center.y;
  const double dz = p.z - center.z;
  const double phi = std::atan2(dy, dx);
  // Posterior (probe-facing) flattening gives the chestnut outline.
  const double posterior = std::max(0.0, -std::sin(phi));
  double radius = 1.0 - posterior_flattening * posterior * posterior * posterior;
  for (std::size_t n = 0; n < harmonic_amplitude.size(); ++n) {
    radius += harmonic_amplitude[n] * std::cos((n + 2.0) * phi + harmonic_phase[n]);
  }
  const double q = (dx / semi_axes.x) * (dx / semi_axes.x) + (dy / semi_axes.y) * (dy / semi_axes.y) +
                   (dz / semi_axes.z) * (dz / semi_axes.z);
  return q < radius * radius;
}

std::optional<Vec2> PhantomAnatomy::nodule_center_at(double z_mm) const {
  const double t = (z_mm - nodule_center.z) / nodule_half_length_mm;
  if (nodule_radius_mm * std::sqrt(std::max(0.0, 1.0 - t * t)) < 1.0) return std::nullopt;
  return Vec2{nodule_center.x + nodule_tilt * (z_mm - nodule_center.z), nodule_center.y};
}

Label PhantomAnatomy::label(Vec3 p) const {
  if (!prostate_contains(p)) return Label::kBackground;
  const double t = (p.z - nodule_center.z) / nodule_half_length_mm;
  if (t * t < 1.0) {
    const double cx = nodule_center.x + nodule_tilt * (p.z - nodule_center.z);
    const double r2 = nodule_radius_mm * nodule_radius_mm * (1.0 - t * t);
    const double dx = p.x - cx;
    const double dy = p.y - nodule_center.y;
    if (dx * dx + dy * dy < r2) return Label::kLandmark;
  }
  const double ux = p.x - urethra_xy.x;
  const double uy = p.y - urethra_xy.y;
  if (ux * ux + uy * uy < urethra_radius_mm * urethra_radius_mm) return Label::kUrethra;
  for (const auto& lesion : lesions) {
    const double dx = p.x - lesion.center.x;
    const double dy = p.y - lesion.center.y;
    const double dz = p.z - lesion.center.z;
    if (dx * dx + dy * dy + dz * dz < lesion.radius_mm * lesion.radius_mm) return Label::kCancer;
  }
  return Label::kProstate;
}

double PhantomAnatomy::intensity(Vec3 p) const {
  double tex = 0.0;
  for (const auto& w : texture) {
    tex += w.amplitude *
           std::cos(w.frequency.x * p.x + w.frequency.y * p.y + w.frequency.z * p.z + w.phase);
  }
  double v = 0.0;
  switch (label(p)) {
    case Label::kBackground: v = 0.25 + 0.6 * tex; break;
    case Label::kProstate: v = 0.55 + tex; break;
    case Label::kCancer: v = 0.38 + tex; break;
    case Label::kUrethra: v = 0.12; break;
    case Label::kLandmark: v = 0.85 + 0.5 * tex; break;
  }
  return std::clamp(v, 0.0, 1.0);
}

PhantomAnatomy make_anatomy(const PhantomSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  auto uniform = [&rng](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  PhantomAnatomy a;
  a.semi_axes = spec.prostate_semi_axes_mm;
  a.posterior_flattening = spec.posterior_flattening;
  a.center = {0.0, spec.prostate_center_y_mm, 0.5 * spec.probe.width_mm};
  for (int n = 0; n < 3; ++n) {
    a.harmonic_amplitude.push_back(uniform(-spec.shape_irregularity, spec.shape_irregularity));
    a.harmonic_phase.push_back(uniform(0.0, 2.0 * kPi));
  }
  a.urethra_radius_mm = spec.urethra_radius_mm;
  a.urethra_xy = {uniform(-2.0, 2.0), a.center.y - 3.0 + uniform(-1.0, 1.0)};

  const double side = uniform(0.0, 1.0) < 0.5 ? -1.0 : 1.0;
  a.nodule_radius_mm = spec.nodule_radius_mm;
  a.nodule_center = {side * uniform(0.25, 0.4) * a.semi_axes.x,
                     a.center.y + uniform(0.15, 0.3) * a.semi_axes.y, a.center.z};
  a.nodule_half_length_mm = 0.95 * a.semi_axes.z;
  a.nodule_tilt = uniform(-0.05, 0.05);

  for (int i = 0; i < spec.lesion_count; ++i) {
    Lesion lesion;
    lesion.radius_mm = spec.lesion_radius_mm * uniform(0.7, 1.2);
    lesion.center = {a.center.x - side * uniform(0.1, 0.5) * a.semi_axes.x,
                     a.center.y + uniform(-0.5, 0.5) * a.semi_axes.y,
                     a.center.z + uniform(-0.6, 0.6) * a.semi_axes.z};
    a.lesions.push_back(lesion);
  }

  const int waves = 16;
  for (int i = 0; i < waves; ++i) {
    const double wavelength = uniform(3.0, 10.0);
    const double theta = uniform(0.0, 2.0 * kPi);
    const double tilt = uniform(-0.5, 0.5);
    const double k = 2.0 * kPi / wavelength;
    TextureWave w;
    w.frequency = {k * std::cos(theta) * std::cos(tilt), k * std::sin(theta) * std::cos(tilt),
                   k * std::sin(tilt)};
    w.phase = uniform(0.0, 2.0 * kPi);
    w.amplitude = spec.texture_amplitude * std::sqrt(2.0 / waves) * uniform(0.5, 1.5);
    a.texture.push_back(w);
  }
  return a;
}

// ---- Slices ---------------------------------------------------------------------

namespace {

double offset_mm(const PhantomSpec& spec) { return spec.probe.height_mm + spec.probe.radius_mm; }

Vec3 to_volume(const PhantomSpec& spec, Vec2 p, double z) {
  return {p.x - offset_mm(spec), p.y, z};
}

Vec2 to_image(const PhantomSpec& spec, Vec2 xy) { return {xy.x + offset_mm(spec), xy.y}; }

struct AxialGrid {
  int width = 0;
  int height = 0;
  Vec2 spacing;
};

AxialGrid axial_grid(const PhantomSpec& spec) {
  const auto dims = volume_dims(spec.probe, spec.volume);
  return {dims[0], dims[1], {spec.volume.in_plane_mm, spec.volume.in_plane_mm}};
}

AngleRange sweep(const PhantomSpec& spec) { return {-spec.max_angle_deg, spec.max_angle_deg}; }

double remap(const PhantomSpec& spec, double f) {
  const double base = spec.invert ? 1.0 - f : f;
  return std::pow(std::clamp(base, 0.0, 1.0), spec.gamma);
}

}  // namespace

PhantomSlice make_phantom_slice(const PhantomSpec& spec, const PhantomAnatomy& anatomy,
                                double z_mm, std::uint64_t warp_seed) {
  spec.validate();
  PhantomSlice s;
  s.z_mm = z_mm;
  const AxialGrid grid = axial_grid(spec);
  s.fixed = Image2D(grid.width, grid.height, 1, grid.spacing);
  s.fixed_labels = LabelMap2D(grid.width, grid.height, grid.spacing);
  for (int r = 0; r < grid.height; ++r) {
    for (int c = 0; c < grid.width; ++c) {
      const Vec3 p = to_volume(spec, s.fixed.physical(c, r), z_mm);
      if (!voxel_to_fan(p, spec.probe, sweep(spec)).in_fan) continue;
      s.fixed.at(c, r) = anatomy.intensity(p);
      s.fixed_labels.at(c, r) = anatomy.label(p);
    }
  }
  const Mask2D fixed_mask = prostate_mask(s.fixed_labels);
  if (foreground_count(fixed_mask) == 0) throw ValidationError("phantom slice misses the prostate");
  if (auto n = anatomy.nodule_center_at(z_mm)) s.fixed_landmark = to_image(spec, *n);
  s.fixed_urethra = to_image(spec, anatomy.urethra_xy);

  // Prostate bounding box on the fixed grid.
  Vec2 lo{1e300, 1e300}, hi{-1e300, -1e300};
  for (int r = 0; r < grid.height; ++r) {
    for (int c = 0; c < grid.width; ++c) {
      if (!fixed_mask.at(c, r)) continue;
      const Vec2 p = fixed_mask.physical(c, r);
      lo = {std::min(lo.x, p.x), std::min(lo.y, p.y)};
      hi = {std::max(hi.x, p.x), std::max(hi.y, p.y)};
    }
  }
  const Vec2 center = 0.5 * (lo + hi);

  std::seed_seq seq{static_cast<std::uint32_t>(warp_seed), static_cast<std::uint32_t>(warp_seed >> 32),
                    0x5eedu};
  std::mt19937_64 rng(seq);
  auto uniform = [&rng](double lo_v, double hi_v) {
    return std::uniform_real_distribution<double>(lo_v, hi_v)(rng);
  };

  // Histology grid and similarity (fixed -> histology).
  const double margin = 8.0;
  const Vec2 hist_extent{spec.scale * (hi.x - lo.x) + 2.0 * margin,
                         spec.scale * (hi.y - lo.y) + 2.0 * margin};
  const double hp = spec.histology_pixel_mm;
  const int hw = static_cast<int>(std::ceil(hist_extent.x / hp)) + 1;
  const int hh = static_cast<int>(std::ceil(hist_extent.y / hp)) + 1;
  const double angle = deg_to_rad(spec.rotation_deg * (uniform(0.0, 1.0) < 0.5 ? -1.0 : 1.0) *
                                  uniform(0.75, 1.0));
  const double scale = 1.0 + (spec.scale - 1.0) * uniform(0.75, 1.0);
  const Mat2 sr{scale * std::cos(angle), -scale * std::sin(angle), scale * std::sin(angle),
                scale * std::cos(angle)};
  const Vec2 hist_center = Vec2{0.5 * (hw - 1) * hp, 0.5 * (hh - 1) * hp} +
                           Vec2{uniform(-1.0, 1.0), uniform(-1.0, 1.0)} * spec.offset_jitter_mm;
  s.truth.affine = {sr, hist_center - sr * center};

  // Random displacement field on the fixed domain, scaled to the amplitude.
  FFDTransform2D ffd = FFDTransform2D::covering(
      {0.0, 0.0}, {(grid.width - 1) * grid.spacing.x, (grid.height - 1) * grid.spacing.y},
      {spec.warp_control_spacing_mm, spec.warp_control_spacing_mm});
  if (spec.warp_amplitude_mm > 0.0) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int attempt = 0; attempt < 200; ++attempt) {
      for (double& d : ffd.displacements()) d = normal(rng);
      double peak = 0.0;
      for (int r = 0; r < grid.height; ++r) {
        for (int c = 0; c < grid.width; ++c) {
          if (fixed_mask.at(c, r)) peak = std::max(peak, norm(ffd.displacement(fixed_mask.physical(c, r))));
        }
      }
      for (double& d : ffd.displacements()) d *= spec.warp_amplitude_mm / peak;
      if (!s.fixed_landmark ||
          norm(ffd.displacement(*s.fixed_landmark)) >= spec.min_landmark_displacement_mm) {
        break;
      }
    }
  }
  s.truth.ffd = ffd;
  if (s.fixed_landmark) {
    s.histology_landmark = s.truth.apply(*s.fixed_landmark);
    s.initial_landmark_error_mm = norm(ffd.displacement(*s.fixed_landmark));
  }
  s.histology_urethra = s.truth.apply(*s.fixed_urethra);

  // Histology: pull the anatomy back through the inverse truth.
  s.histology = Image2D(hw, hh, 3, {hp, hp}, 1.0);
  s.histology_labels = LabelMap2D(hw, hh, {hp, hp});
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int r = 0; r < hh; ++r) {
    for (int c = 0; c < hw; ++c) {
      const double n = noise(rng);
      const Vec2 p = invert_point(s.truth, s.histology.physical(c, r));
      const Vec3 q = to_volume(spec, p, z_mm);
      const Label label = anatomy.label(q);
      s.histology_labels.at(c, r) = label;
      if (label == Label::kBackground) continue;
      const double h = std::clamp(remap(spec, anatomy.intensity(q)) + spec.noise_sigma * n, 0.0, 1.0);
      const double ink = 1.0 - h;
      s.histology.at(c, r, 0) = 1.0 - 0.35 * ink;
      s.histology.at(c, r, 1) = 1.0 - 0.85 * ink;
      s.histology.at(c, r, 2) = 1.0 - 0.55 * ink;
    }
  }
  return s;
}

PhantomSlice make_phantom_slice(const PhantomSpec& spec) {
  const PhantomAnatomy anatomy = make_anatomy(spec);
  return make_phantom_slice(spec, anatomy, anatomy.center.z, spec.seed);
}

Volume3D phantom_volume(const PhantomSpec& spec, const PhantomAnatomy& anatomy) {
  const auto dims = volume_dims(spec.probe, spec.volume);
  const Vec3 origin = volume_origin(spec.probe);
  Volume3D v(dims, {spec.volume.in_plane_mm, spec.volume.in_plane_mm, spec.volume.through_plane_mm},
             origin);
  detail::parallel_for(dims[2], [&](int k) {
    for (int j = 0; j < dims[1]; ++j) {
      for (int i = 0; i < dims[0]; ++i) {
        const Vec3 p = v.physical(i, j, k);
        if (voxel_to_fan(p, spec.probe, sweep(spec)).in_fan) {
          v.at(i, j, k) = static_cast<float>(anatomy.intensity(p));
        }
      }
    }
  });
  return v;
}

// ---- Case generation ------------------------------------------------------------

CaseLayout generate_phantom(const PhantomSpec& spec, const fs::path& out_dir) {
  spec.validate();
  const PhantomAnatomy anatomy = make_anatomy(spec);
  const CaseLayout layout(out_dir);
  fs::create_directories(out_dir);

  // Micro-US sweep.
  const Volume3D truth_volume = phantom_volume(spec, anatomy);
  std::vector<double> angles(static_cast<std::size_t>(spec.angle_count));
  for (int i = 0; i < spec.angle_count; ++i) {
    angles[static_cast<std::size_t>(i)] =
        -spec.max_angle_deg + 2.0 * spec.max_angle_deg * i / (spec.angle_count - 1);
  }
  write_frame_stack(sample_fan_frames(truth_volume, angles, spec.probe), out_dir / "microus");

  // Micro-US label maps for every axial slice.
  const auto dims = truth_volume.dims();
  const int n_micro = dims[2];
  fs::create_directories(out_dir / "masks" / "microus");
  LandmarkFile micro_landmarks;
  for (int k = 0; k < n_micro; ++k) {
    const double z = k * spec.volume.through_plane_mm;
    LabelMap2D labels(dims[0], dims[1], {spec.volume.in_plane_mm, spec.volume.in_plane_mm});
    bool any = false;
    for (int j = 0; j < dims[1]; ++j) {
      for (int i = 0; i < dims[0]; ++i) {
        const Vec3 p = truth_volume.physical(i, j, k);
        if (!voxel_to_fan(p, spec.probe, sweep(spec)).in_fan) continue;
        labels.at(i, j) = anatomy.label(p);
        any = any || labels.at(i, j) != Label::kBackground;
      }
    }
    save_labels(labels, layout.microus_mask(k, n_micro));
    if (!any) continue;
    micro_landmarks.points.push_back({"urethra", LandmarkRole::kUrethraCentroid, k,
                                      to_image(spec, anatomy.urethra_xy)});
    if (auto n = anatomy.nodule_center_at(z)) {
      micro_landmarks.points.push_back(
          {"nodule", LandmarkRole::kAnatomicalLandmark, k, to_image(spec, *n)});
    }
  }

  // Histology slices every histology_slice_spacing_mm through the gland.
  Correspondence c;
  c.histology_spacing_mm = spec.histology_slice_spacing_mm;
  c.microus_spacing_mm = spec.volume.through_plane_mm;
  const int first = static_cast<int>(std::ceil(
      (anatomy.center.z - 0.85 * anatomy.semi_axes.z) / spec.volume.through_plane_mm));
  const double last_z = anatomy.center.z + 0.85 * anatomy.semi_axes.z;
  c.anchor_microus = first;
  std::vector<int> micro_index;
  for (int n = 0;; ++n) {
    const int m = corresponding_microus_slice(c, n);
    if (m * spec.volume.through_plane_mm > last_z || m >= n_micro) break;
    micro_index.push_back(m);
  }
  const int n_hist = static_cast<int>(micro_index.size());
  if (n_hist == 0) throw ValidationError("phantom gland yields no histology slices");

  fs::create_directories(layout.histology_dir());
  fs::create_directories(out_dir / "masks" / "histology");
  fs::create_directories(out_dir / "truth");
  std::vector<PhantomSlice> slices(static_cast<std::size_t>(n_hist));
  detail::parallel_for(n_hist, [&](int n) {
    const int m = micro_index[static_cast<std::size_t>(n)];
    slices[static_cast<std::size_t>(n)] =
        make_phantom_slice(spec, anatomy, m * spec.volume.through_plane_mm,
                           spec.seed * 1000003ULL + static_cast<std::uint64_t>(n));
  });
  LandmarkFile hist_landmarks;
  for (int n = 0; n < n_hist; ++n) {
    const PhantomSlice& s = slices[static_cast<std::size_t>(n)];
    save_image(s.histology, layout.histology_slice(n, n_hist));
    save_labels(s.histology_labels, layout.histology_mask(n, n_hist));
    const fs::path base = out_dir / "truth" / histology_slice_filename(n, n_hist);
    save_affine(s.truth.affine, fs::path(base).replace_extension().concat("_affine.json"));
    save_ffd(*s.truth.ffd, fs::path(base).replace_extension().concat("_ffd.json"));
    hist_landmarks.points.push_back({"urethra", LandmarkRole::kUrethraCentroid, n, *s.histology_urethra});
    if (s.histology_landmark) {
      hist_landmarks.points.push_back(
          {"nodule", LandmarkRole::kAnatomicalLandmark, n, *s.histology_landmark});
    }
  }
  fs::create_directories(out_dir / "landmarks");
  save_landmarks(micro_landmarks, layout.microus_landmarks());
  save_landmarks(hist_landmarks, layout.histology_landmarks());

  save_correspondence(c, layout.correspondence());
  return layout;
}

}  // namespace musreg
