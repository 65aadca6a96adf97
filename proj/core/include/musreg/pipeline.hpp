#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "musreg/image.hpp"
#include "musreg/io.hpp"
#include "musreg/metrics.hpp"
#include "musreg/reconstruct.hpp"
#include "musreg/register.hpp"
#include "musreg/transform.hpp"

namespace musreg {

// ---- Correspondence ------------------------------------------------------------

struct Correspondence {
  int anchor_histology = 0;
  int anchor_microus = 0;
  double histology_spacing_mm = 3.0;
  double microus_spacing_mm = 1.0;

  /// Spacings must be positive and anchors non-negative.
  void validate() const;
  friend bool operator==(const Correspondence&, const Correspondence&) = default;
};

std::string correspondence_to_json(const Correspondence& c);
/// Throws ValidationError with a human-readable reason on any malformed body.
Correspondence correspondence_from_json(const std::string& text);
Correspondence load_correspondence(const fs::path& path);
void save_correspondence(const Correspondence& c, const fs::path& path);

struct SlicePairing {
  int histology = 0;
  int microus = 0;
  friend bool operator==(const SlicePairing&, const SlicePairing&) = default;
};

struct DroppedPair {
  int histology = 0;
  int microus = 0;
  std::string reason;
  friend bool operator==(const DroppedPair&, const DroppedPair&) = default;
};

struct CorrespondenceMap {
  std::vector<SlicePairing> pairs;
  std::vector<DroppedPair> dropped;
};

/// Micro-US index for histology slice n: the anchor plus the spacing ratio
/// times the offset, rounded to nearest with exact ties toward the anchor.
int corresponding_microus_slice(const Correspondence& c, int histology_index);

/// Full mapping for n in [0, n_histology). Throws when an anchor is out of range.
CorrespondenceMap propagate_correspondence(const Correspondence& c, int n_histology,
                                           int n_microus);

// ---- Case layout ---------------------------------------------------------------

/// "slice_##.png" with at least two digits.
std::string histology_slice_filename(int n, int slice_count);

class CaseLayout {
 public:
  explicit CaseLayout(fs::path root);

  const fs::path& root() const { return root_; }
  fs::path manifest() const { return root_ / "microus" / "manifest.json"; }
  fs::path frames_dir() const { return root_ / "microus" / "frames"; }
  fs::path volume_base() const { return root_ / "microus" / "volume"; }
  fs::path axial_dir() const { return root_ / "microus" / "axial"; }
  fs::path axial_slice(int k, int count) const;
  fs::path histology_dir() const { return root_ / "histology"; }
  fs::path histology_slice(int n, int count) const;
  fs::path microus_mask(int k, int count) const;
  fs::path histology_mask(int n, int count) const;
  fs::path microus_landmarks() const { return root_ / "landmarks" / "microus.json"; }
  fs::path histology_landmarks() const { return root_ / "landmarks" / "histology.json"; }
  fs::path correspondence() const { return root_ / "correspondence.json"; }
  fs::path output_dir() const { return root_ / "output"; }
  fs::path affine_transform(int n, int count) const;
  fs::path ffd_transform(int n, int count) const;
  fs::path warped_labels(int n, int count) const;
  fs::path overlay(int n, int count) const;
  fs::path report_csv() const { return output_dir() / "report.csv"; }
  fs::path report_json() const { return output_dir() / "report.json"; }

  /// max(histology index) + 1 over histology/slice_*.png, 0 when none.
  int histology_count() const;
  /// Axial slice count from the volume header, else from microus/axial.
  int microus_count() const;

 private:
  fs::path root_;
};

// ---- Running a case ------------------------------------------------------------

struct PipelineConfig {
  fs::path root;
  RegistrationConfig registration;
  VolumeSpec volume;
  ReconstructOptions reconstruct;
  double overlay_opacity = 0.5;
  /// Reconstruct even when microus/volume.json already exists.
  bool rebuild_volume = false;
};

struct SkipRecord {
  int histology = 0;
  int microus = 0;
  std::string reason;
  friend bool operator==(const SkipRecord&, const SkipRecord&) = default;
};

struct CaseRunResult {
  CaseReport report;
  /// Micro-US index paired with each entry of report.slices.
  std::vector<int> microus_slices;
  std::vector<SkipRecord> skipped;
  std::vector<DroppedPair> dropped;
};

/// Reconstructs (or loads) the volume, exports axial slices, registers every
/// corresponded pair, and writes transforms, warped labels, overlays and the
/// report under output/.
CaseRunResult run_case(const PipelineConfig& config);

/// Recomputes metrics from stored transforms and warped labels.
CaseRunResult evaluate_case(const fs::path& root);

/// Dice and Hausdorff on prostate masks; urethra deviation and landmark
/// error when both sides are available.
SliceMetrics compute_slice_metrics(int histology_index, int microus_index,
                                   const LabelMap2D& microus_labels,
                                   const LabelMap2D& warped_labels,
                                   const CompositeTransform& transform,
                                   const std::optional<LandmarkFile>& microus_landmarks,
                                   const std::optional<LandmarkFile>& histology_landmarks);

/// Grayscale base with warped cancer in orange and the micro-US prostate
/// contour in blue, alpha-blended at the given opacity.
Image2D render_overlay(const Image2D& base, const LabelMap2D& warped_labels,
                       const LabelMap2D& microus_labels, double opacity);

/// CSV columns slice,dice,hd_mm,ud_mm,le_mm; missing values are empty.
std::string report_to_csv(const CaseRunResult& result);
std::string report_to_json(const CaseRunResult& result);
void write_report(const CaseRunResult& result, const fs::path& csv_path,
                  const fs::path& json_path);

}  // namespace musreg
