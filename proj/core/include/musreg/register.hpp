#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "musreg/image.hpp"
#include "musreg/transform.hpp"

namespace musreg {

struct PyramidLevel {
  int shrink = 1;
  /// Gaussian sigma in fixed-image pixels (full resolution).
  double sigma_px = 0.0;
  friend bool operator==(const PyramidLevel&, const PyramidLevel&) = default;
};

struct PyramidSchedule {
  std::vector<PyramidLevel> levels;

  /// Coarse to fine: (8,4), (4,2), (2,1).
  static PyramidSchedule coarse_to_fine();
  /// The published listing order: (4,4), (8,2), (2,1).
  static PyramidSchedule literal();
  void validate() const;
  friend bool operator==(const PyramidSchedule&, const PyramidSchedule&) = default;
};

struct RegistrationConfig {
  double learning_rate = 0.2;
  int iterations_per_level = 12;
  int mi_bins = 32;
  /// FFD control spacing is the fixed prostate bounding box over this many cells.
  int ffd_grid_cells = 7;
  /// Overrides ffd_grid_cells when set.
  std::optional<double> ffd_grid_spacing_mm;
  /// Weight of the squared second-difference penalty on control displacements.
  double bending_weight = 0.0;
  /// The FFD stage samples MI over the fixed mask dilated by this many
  /// control cells (0 samples the mask only).
  double mi_band_cells = 1.0;
  /// Step multiplier after an accepted step (1 disables growth).
  double step_growth = 1.2;
  PyramidSchedule schedule = PyramidSchedule::coarse_to_fine();

  void validate() const;
  friend bool operator==(const RegistrationConfig&, const RegistrationConfig&) = default;
};

std::string config_to_json(const RegistrationConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
RegistrationConfig config_from_json(const std::string& text);
RegistrationConfig load_config(const std::filesystem::path& path);

struct LevelTrace {
  PyramidLevel level;
  double start_loss = 0.0;
  std::vector<double> trial_losses;
  std::vector<bool> accepted;
  double best_loss = 0.0;
};

struct AffineResult {
  AffineTransform2D transform;
  AffineTransform2D initial;
  std::vector<LevelTrace> trace;
  /// Finest-level loss of the returned and the initial transform.
  double initial_loss = 0.0;
  double final_loss = 0.0;
  /// True when no iterate beat the initialisation.
  bool kept_initial = false;
};

struct FfdResult {
  FFDTransform2D ffd;
  std::vector<LevelTrace> trace;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  bool kept_initial = false;
  bool degenerate = false;
  std::string warning;
};

struct RegistrationResult {
  AffineResult affine;
  FfdResult ffd;
  CompositeTransform transform() const { return {affine.transform, ffd.ffd}; }
};

/// Centre-of-mass alignment with isotropic scale sqrt(moving area / fixed area).
AffineTransform2D initialize_affine(const Mask2D& fixed_mask, const Mask2D& moving_mask);

/// Mask-driven affine stage (SSD on the pyramid of mask images).
AffineResult register_affine(const Mask2D& fixed_mask, const Mask2D& moving_mask,
                             const RegistrationConfig& config);

/// FFD stage on masked single-channel images, composed after affine_init.
FfdResult register_ffd(const Image2D& fixed_image, const Image2D& moving_image,
                       const Mask2D& fixed_mask, const Mask2D& moving_mask,
                       const AffineTransform2D& affine_init, const RegistrationConfig& config);

/// Affine then FFD. moving_image may be RGB; it is converted to gray, and
/// both images are masked before the FFD stage.
RegistrationResult register_pair(const Image2D& fixed_image, const Image2D& moving_image,
                                 const Mask2D& fixed_mask, const Mask2D& moving_mask,
                                 const RegistrationConfig& config);

/// Control spacing used for the FFD stage: fixed prostate bounding box over
/// the configured cell count, or the explicit override.
Vec2 ffd_grid_spacing(const Mask2D& fixed_mask, const RegistrationConfig& config);

/// Grid of the given spacing covering the whole fixed image plus one ring.
FFDTransform2D make_ffd_grid(const Mask2D& fixed_mask, Vec2 spacing_mm);

/// Mean squared second difference of control displacements and its gradient.
double bending_energy(const FFDTransform2D& ffd, std::vector<double>* gradient = nullptr);

}  // namespace musreg
