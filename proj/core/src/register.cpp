#include "musreg/register.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include <json.hpp>

#include "musreg/errors.hpp"
#include "musreg/io.hpp"
#include "musreg/losses.hpp"
#include "musreg/metrics.hpp"
#include "musreg/resample.hpp"

namespace musreg {

using nlohmann::json;

// ---- Schedule and config ----------------------------------------------------

PyramidSchedule PyramidSchedule::coarse_to_fine() { return {{{8, 4.0}, {4, 2.0}, {2, 1.0}}}; }

PyramidSchedule PyramidSchedule::literal() { return {{{4, 4.0}, {8, 2.0}, {2, 1.0}}}; }

void PyramidSchedule::validate() const {
  if (levels.empty()) throw ValidationError("pyramid schedule needs at least one level");
  for (const auto& level : levels) {
    if (level.shrink < 1) throw ValidationError("pyramid shrink factors must be >= 1");
    if (!(level.sigma_px >= 0.0)) throw ValidationError("pyramid sigma must be >= 0");
  }
}

void RegistrationConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be > 0");
  if (iterations_per_level < 1) throw ValidationError("iterations_per_level must be >= 1");
  if (mi_bins < 8) throw ValidationError("mi_bins must be >= 8");
  if (ffd_grid_cells < 1) throw ValidationError("ffd_grid_cells must be >= 1");
  if (ffd_grid_spacing_mm && !(*ffd_grid_spacing_mm > 0.0)) {
    throw ValidationError("ffd_grid_spacing_mm must be > 0");
  }
  if (!(bending_weight >= 0.0)) throw ValidationError("bending_weight must be >= 0");
  if (!(mi_band_cells >= 0.0)) throw ValidationError("mi_band_cells must be >= 0");
  if (!(step_growth >= 1.0)) throw ValidationError("step_growth must be >= 1");
  schedule.validate();
}

std::string config_to_json(const RegistrationConfig& c) {
  json schedule = json::array();
  for (const auto& level : c.schedule.levels) schedule.push_back({level.shrink, level.sigma_px});
  json j = {{"learning_rate", c.learning_rate},
            {"iterations_per_level", c.iterations_per_level},
            {"mi_bins", c.mi_bins},
            {"ffd_grid_cells", c.ffd_grid_cells},
            {"ffd_grid_spacing_mm", nullptr},
            {"bending_weight", c.bending_weight},
            {"mi_band_cells", c.mi_band_cells},
            {"step_growth", c.step_growth},
            {"schedule", schedule}};
  if (c.ffd_grid_spacing_mm) j["ffd_grid_spacing_mm"] = *c.ffd_grid_spacing_mm;
  return j.dump(2);
}

RegistrationConfig config_from_json(const std::string& text) {
  RegistrationConfig c;
  try {
    const json j = json::parse(text);
    if (!j.is_object()) throw ValidationError("registration config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
      if (key == "learning_rate") {
        c.learning_rate = value.get<double>();
      } else if (key == "iterations_per_level") {
        c.iterations_per_level = value.get<int>();
      } else if (key == "mi_bins") {
        c.mi_bins = value.get<int>();
      } else if (key == "ffd_grid_cells") {
        c.ffd_grid_cells = value.get<int>();
      } else if (key == "ffd_grid_spacing_mm") {
        if (!value.is_null()) c.ffd_grid_spacing_mm = value.get<double>();
      } else if (key == "bending_weight") {
        c.bending_weight = value.get<double>();
      } else if (key == "mi_band_cells") {
        c.mi_band_cells = value.get<double>();
      } else if (key == "step_growth") {
        c.step_growth = value.get<double>();
      } else if (key == "schedule") {
        c.schedule.levels.clear();
        for (const auto& level : value) {
          if (!level.is_array() || level.size() != 2) {
            throw ValidationError("schedule entries must be [shrink, sigma_px]");
          }
          c.schedule.levels.push_back({level[0].get<int>(), level[1].get<double>()});
        }
      } else {
        throw ValidationError("unknown registration config key: " + key);
      }
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("invalid registration config: ") + e.what());
  }
  c.validate();
  return c;
}

RegistrationConfig load_config(const std::filesystem::path& path) {
  return config_from_json(read_text_file(path));
}

// ---- Optimiser --------------------------------------------------------------

namespace {

using Objective = std::function<LossResult(const std::vector<double>&)>;

struct DescentSettings {
  double learning_rate = 0.2;
  int iterations = 12;
  double growth = 1.2;
  /// Physical length (mm) of a unit step at this level.
  double step_unit_mm = 1.0;
  /// Physical shift per unit change of each parameter.
  std::vector<double> scales;
};

// Solves (a + damping * I) x = b for a small dense symmetric system by
// Gaussian elimination with partial pivoting. Returns false when singular.
bool solve_dense(std::vector<double> a, std::vector<double> b, double damping,
                 std::vector<double>& x) {
  const std::size_t n = b.size();
  for (std::size_t i = 0; i < n; ++i) a[i * n + i] += damping;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(a[r * n + col]) > std::abs(a[pivot * n + col])) pivot = r;
    }
    if (!(std::abs(a[pivot * n + col]) > 0.0)) return false;
    if (pivot != col) {
      for (std::size_t k = 0; k < n; ++k) std::swap(a[col * n + k], a[pivot * n + k]);
      std::swap(b[col], b[pivot]);
    }
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a[r * n + col] / a[col * n + col];
      for (std::size_t k = col; k < n; ++k) a[r * n + k] -= f * a[col * n + k];
      b[r] -= f * b[col];
    }
  }
  x.assign(n, 0.0);
  for (std::size_t i = n; i-- > 0;) {
    double v = b[i];
    for (std::size_t k = i + 1; k < n; ++k) v -= a[i * n + k] * x[k];
    x[i] = v / a[i * n + i];
  }
  return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

// Descent direction in scaled coordinates (parameter times its physical
// scale). With a Gauss-Newton matrix the scaled gradient is preconditioned.
std::vector<double> scaled_direction(const LossResult& r, const std::vector<double>& scales) {
  const std::size_t n = scales.size();
  std::vector<double> g(n);
  for (std::size_t k = 0; k < n; ++k) g[k] = r.gradient[k] / scales[k];
  if (r.gauss_newton.size() != n * n) return g;
  std::vector<double> h(n * n);
  double trace = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) h[i * n + j] = r.gauss_newton[i * n + j] / (scales[i] * scales[j]);
    trace += h[i * n + i];
  }
  std::vector<double> d;
  if (!(trace > 0.0) || !solve_dense(h, g, 1e-6 * trace / static_cast<double>(n), d)) return g;
  return d;
}

// Scaled gradient descent with accept/reject step control. A trial step is
// accepted only if it lowers the loss, so the current iterate is always the
// best one seen at this level.
std::vector<double> descend(std::vector<double> params, const Objective& objective,
                            const DescentSettings& s, LevelTrace& trace) {
  LossResult current = objective(params);
  trace.start_loss = current.loss;
  trace.best_loss = current.loss;
  double factor = 1.0;
  const double max_factor = 1.0 / s.learning_rate;
  std::vector<double> trial(params.size());
  for (int it = 0; it < s.iterations; ++it) {
    const std::vector<double> d = scaled_direction(current, s.scales);
    // Root-mean-square physical shift of the raw direction.
    double norm = 0.0;
    for (double v : d) norm += v * v;
    norm = std::sqrt(norm / static_cast<double>(d.size()));
    if (!(norm > 0.0) || !std::isfinite(norm)) break;
    const double eta = factor * s.learning_rate * s.step_unit_mm / norm;
    for (std::size_t k = 0; k < params.size(); ++k) {
      // Physical shift of each parameter is capped at one level pixel.
      const double shift = std::clamp(eta * d[k], -s.step_unit_mm, s.step_unit_mm);
      trial[k] = params[k] - shift / s.scales[k];
    }
    LossResult next = objective(trial);
    trace.trial_losses.push_back(next.loss);
    const bool accept = std::isfinite(next.loss) && next.loss < current.loss;
    trace.accepted.push_back(accept);
    if (accept) {
      params = trial;
      current = std::move(next);
      factor = std::min(factor * s.growth, max_factor);
    } else {
      factor *= 0.5;
    }
  }
  trace.best_loss = current.loss;
  return params;
}

double mean_spacing(Vec2 spacing) { return std::sqrt(spacing.x * spacing.y); }

// Foreground grown by an elliptical structuring element of the given radius.
Mask2D dilate(const Mask2D& mask, double radius_mm) {
  const std::vector<double> dt = squared_distance_transform(mask);
  Mask2D out(mask.width(), mask.height(), mask.spacing());
  const double r2 = radius_mm * radius_mm;
  for (std::size_t i = 0; i < dt.size(); ++i) out.values()[i] = dt[i] <= r2 ? 1 : 0;
  return out;
}

struct LevelImages {
  Image2D fixed;
  Image2D moving;
  Mask2D mask;
};

LevelImages build_level(const Image2D& fixed, const Image2D& moving, const Mask2D& fixed_mask,
                        const PyramidLevel& level) {
  const double sigma_mm = level.sigma_px * mean_spacing(fixed.spacing());
  return {shrink(gaussian_smooth(fixed, sigma_mm), level.shrink),
          gaussian_smooth(moving, sigma_mm), shrink(fixed_mask, level.shrink)};
}

// Affine parameters centred on the fixed centre of mass:
// T(p) = A (p - c) + b, theta = (a, b, bx, c, d, by).
AffineTransform2D centered_to_affine(const std::vector<double>& t, Vec2 c) {
  const Mat2 a{t[0], t[1], t[3], t[4]};
  return {a, Vec2{t[2], t[5]} - a * c};
}

std::vector<double> affine_to_centered(const AffineTransform2D& t, Vec2 c) {
  const Vec2 b = t.apply(c);
  return {t.linear.a, t.linear.b, b.x, t.linear.c, t.linear.d, b.y};
}

// Chain rule from plain to centred parameters: g_c = C^T g, H_c = C^T H C
// with C = d(plain)/d(centred).
void to_centered(LossResult& r, Vec2 c) {
  double cm[36] = {};
  for (int i = 0; i < 6; ++i) cm[i * 6 + i] = 1.0;
  cm[2 * 6 + 0] = -c.x;
  cm[2 * 6 + 1] = -c.y;
  cm[5 * 6 + 3] = -c.x;
  cm[5 * 6 + 4] = -c.y;
  std::vector<double> g(6, 0.0);
  for (int k = 0; k < 6; ++k) {
    for (int u = 0; u < 6; ++u) g[k] += cm[u * 6 + k] * r.gradient[u];
  }
  r.gradient = g;
  if (r.gauss_newton.size() != 36) return;
  std::vector<double> hc(36, 0.0);
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 6; ++j) {
      double v = 0.0;
      for (int u = 0; u < 6; ++u) {
        for (int w = 0; w < 6; ++w) v += cm[u * 6 + i] * r.gauss_newton[u * 6 + w] * cm[w * 6 + j];
      }
      hc[i * 6 + j] = v;
    }
  }
  r.gauss_newton = hc;
}

}  // namespace

// ---- Affine stage -----------------------------------------------------------

AffineTransform2D initialize_affine(const Mask2D& fixed_mask, const Mask2D& moving_mask) {
  const auto cf = center_of_mass(fixed_mask);
  const auto cm = center_of_mass(moving_mask);
  if (!cf || !cm) throw ValidationError("affine initialisation needs nonempty masks");
  const double area_f = static_cast<double>(foreground_count(fixed_mask)) *
                        fixed_mask.spacing().x * fixed_mask.spacing().y;
  const double area_m = static_cast<double>(foreground_count(moving_mask)) *
                        moving_mask.spacing().x * moving_mask.spacing().y;
  const double s = std::sqrt(area_m / area_f);
  return {{s, 0.0, 0.0, s}, *cm - s * *cf};
}

AffineResult register_affine(const Mask2D& fixed_mask, const Mask2D& moving_mask,
                             const RegistrationConfig& config) {
  config.validate();
  AffineResult result;
  result.initial = initialize_affine(fixed_mask, moving_mask);
  const Vec2 center = *center_of_mass(fixed_mask);

  DescentSettings settings;
  settings.learning_rate = config.learning_rate;
  settings.iterations = config.iterations_per_level;
  settings.growth = config.step_growth;
  const double spacing = mean_spacing(fixed_mask.spacing());
  double lever_x = spacing;
  double lever_y = spacing;
  for (int r = 0; r < fixed_mask.height(); ++r) {
    for (int c = 0; c < fixed_mask.width(); ++c) {
      if (!fixed_mask.at(c, r)) continue;
      const Vec2 d = fixed_mask.physical(c, r) - center;
      lever_x = std::max(lever_x, std::abs(d.x));
      lever_y = std::max(lever_y, std::abs(d.y));
    }
  }
  settings.scales = {lever_x, lever_y, 1.0, lever_x, lever_y, 1.0};

  const Image2D fixed_image = mask_to_image(fixed_mask);
  const Image2D moving_image = mask_to_image(moving_mask);
  std::vector<double> params = affine_to_centered(result.initial, center);
  LevelImages finest;
  for (const auto& level : config.schedule.levels) {
    LevelImages images = build_level(fixed_image, moving_image, fixed_mask, level);
    const MaskSsd ssd(images.fixed, images.moving);
    const Objective objective = [&](const std::vector<double>& t) {
      LossResult r = ssd.evaluate(centered_to_affine(t, center));
      to_centered(r, center);
      return r;
    };
    settings.step_unit_mm = level.shrink * spacing;
    LevelTrace trace;
    trace.level = level;
    params = descend(params, objective, settings, trace);
    result.trace.push_back(std::move(trace));
    finest = std::move(images);
  }

  const MaskSsd ssd(finest.fixed, finest.moving);
  result.transform = centered_to_affine(params, center);
  result.initial_loss = ssd.evaluate(result.initial).loss;
  result.final_loss = ssd.evaluate(result.transform).loss;
  if (!(result.final_loss <= result.initial_loss)) {
    result.transform = result.initial;
    result.final_loss = result.initial_loss;
    result.kept_initial = true;
  }
  return result;
}

// ---- FFD stage ---------------------------------------------------------------

Vec2 ffd_grid_spacing(const Mask2D& fixed_mask, const RegistrationConfig& config) {
  if (config.ffd_grid_spacing_mm) return {*config.ffd_grid_spacing_mm, *config.ffd_grid_spacing_mm};
  int c0 = fixed_mask.width(), c1 = -1, r0 = fixed_mask.height(), r1 = -1;
  for (int r = 0; r < fixed_mask.height(); ++r) {
    for (int c = 0; c < fixed_mask.width(); ++c) {
      if (!fixed_mask.at(c, r)) continue;
      c0 = std::min(c0, c);
      c1 = std::max(c1, c);
      r0 = std::min(r0, r);
      r1 = std::max(r1, r);
    }
  }
  if (c1 < 0) throw ValidationError("fixed prostate mask is empty");
  const Vec2 sp = fixed_mask.spacing();
  const double ex = std::max((c1 - c0) * sp.x, sp.x);
  const double ey = std::max((r1 - r0) * sp.y, sp.y);
  return {ex / config.ffd_grid_cells, ey / config.ffd_grid_cells};
}

FFDTransform2D make_ffd_grid(const Mask2D& fixed_mask, Vec2 spacing_mm) {
  const Vec2 extent{(fixed_mask.width() - 1) * fixed_mask.spacing().x,
                    (fixed_mask.height() - 1) * fixed_mask.spacing().y};
  return FFDTransform2D::covering({0.0, 0.0}, extent, spacing_mm);
}

double bending_energy(const FFDTransform2D& ffd, std::vector<double>* gradient) {
  const auto dims = ffd.grid_dims();
  const auto d = ffd.displacements();
  if (gradient) gradient->assign(d.size(), 0.0);
  double energy = 0.0;
  // Accumulates weight * (sum coef_i * D_i)^2 for both components.
  auto term = [&](std::initializer_list<std::pair<int, double>> stencil, double weight) {
    for (int comp = 0; comp < 2; ++comp) {
      double v = 0.0;
      for (const auto& [k, coef] : stencil) v += coef * d[2 * static_cast<std::size_t>(k) + comp];
      energy += weight * v * v;
      if (gradient) {
        for (const auto& [k, coef] : stencil) {
          (*gradient)[2 * static_cast<std::size_t>(k) + comp] += 2.0 * weight * v * coef;
        }
      }
    }
  };
  const int nx = dims[0];
  const int ny = dims[1];
  auto idx = [nx](int i, int j) { return i + nx * j; };
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      if (i > 0 && i + 1 < nx) term({{idx(i - 1, j), 1.0}, {idx(i, j), -2.0}, {idx(i + 1, j), 1.0}}, 1.0);
      if (j > 0 && j + 1 < ny) term({{idx(i, j - 1), 1.0}, {idx(i, j), -2.0}, {idx(i, j + 1), 1.0}}, 1.0);
      if (i + 1 < nx && j + 1 < ny) {
        term({{idx(i, j), 1.0}, {idx(i + 1, j), -1.0}, {idx(i, j + 1), -1.0}, {idx(i + 1, j + 1), 1.0}},
             2.0);
      }
    }
  }
  const double n = static_cast<double>(ffd.control_count());
  if (gradient) {
    for (double& g : *gradient) g /= n;
  }
  return energy / n;
}

FfdResult register_ffd(const Image2D& fixed_image, const Image2D& moving_image,
                       const Mask2D& fixed_mask, const Mask2D& moving_mask,
                       const AffineTransform2D& affine_init, const RegistrationConfig& config) {
  config.validate();
  affine_init.validate();
  if (foreground_count(fixed_mask) == 0 || foreground_count(moving_mask) == 0) {
    throw ValidationError("FFD registration needs nonempty masks");
  }
  if (fixed_image.channels() != 1 || moving_image.channels() != 1) {
    throw ValidationError("FFD registration expects single-channel images");
  }
  if (!same_grid(fixed_image, fixed_mask)) {
    throw ValidationError("fixed mask grid differs from the fixed image");
  }

  FfdResult result;
  result.ffd = make_ffd_grid(fixed_mask, ffd_grid_spacing(fixed_mask, config));
  const FFDTransform2D zero = result.ffd;

  DescentSettings settings;
  settings.learning_rate = config.learning_rate;
  settings.iterations = config.iterations_per_level;
  settings.growth = config.step_growth;
  settings.scales.assign(static_cast<std::size_t>(zero.parameter_count()), 1.0);
  const double spacing = mean_spacing(fixed_image.spacing());

  auto make_objective = [&](const MattesMutualInformation& mi) -> Objective {
    return [&mi, &config, &zero, &affine_init](const std::vector<double>& params) {
      CompositeTransform t{affine_init, zero};
      std::copy(params.begin(), params.end(), t.ffd->displacements().begin());
      LossResult r = mi.evaluate(t);
      if (config.bending_weight > 0.0) {
        std::vector<double> g;
        r.loss += config.bending_weight * bending_energy(*t.ffd, &g);
        for (std::size_t k = 0; k < g.size(); ++k) r.gradient[k] += config.bending_weight * g[k];
      }
      return r;
    };
  };

  // The images are masked, so sampling a band around the fixed mask makes
  // background-to-background agreement count and pins the boundary.
  const Vec2 cell = result.ffd.grid_spacing();
  const Mask2D sampling = dilate(fixed_mask, config.mi_band_cells * std::max(cell.x, cell.y));
  std::vector<double> params(settings.scales.size(), 0.0);
  std::optional<MattesMutualInformation> finest_mi;
  LevelImages finest;
  for (const auto& level : config.schedule.levels) {
    LevelImages images = build_level(fixed_image, moving_image, sampling, level);
    if (foreground_count(images.mask) == 0) continue;
    MattesMutualInformation mi(images.fixed, images.moving, images.mask, config.mi_bins);
    const Objective objective = make_objective(mi);
    if (objective(params).degenerate) continue;
    settings.step_unit_mm = level.shrink * spacing;
    LevelTrace trace;
    trace.level = level;
    params = descend(params, objective, settings, trace);
    result.trace.push_back(std::move(trace));
    finest = std::move(images);
    finest_mi.emplace(finest.fixed, finest.moving, finest.mask, config.mi_bins);
  }

  if (!finest_mi) {
    result.degenerate = true;
    result.warning = "mutual information is degenerate on every level; FFD left at zero";
    return result;
  }
  const Objective objective = make_objective(*finest_mi);
  result.initial_loss = objective(std::vector<double>(params.size(), 0.0)).loss;
  result.final_loss = objective(params).loss;
  if (!(result.final_loss <= result.initial_loss)) {
    result.final_loss = result.initial_loss;
    result.kept_initial = true;
  } else {
    std::copy(params.begin(), params.end(), result.ffd.displacements().begin());
  }
  return result;
}

RegistrationResult register_pair(const Image2D& fixed_image, const Image2D& moving_image,
                                 const Mask2D& fixed_mask, const Mask2D& moving_mask,
                                 const RegistrationConfig& config) {
  RegistrationResult result;
  result.affine = register_affine(fixed_mask, moving_mask, config);
  const Image2D fixed_masked = apply_mask(to_gray(fixed_image), fixed_mask);
  const Image2D moving_masked = apply_mask(to_gray(moving_image), moving_mask);
  result.ffd = register_ffd(fixed_masked, moving_masked, fixed_mask, moving_mask,
                            result.affine.transform, config);
  return result;
}

}  // namespace musreg
