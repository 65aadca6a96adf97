#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "musreg/frame_stack.hpp"
#include "musreg/image.hpp"
#include "musreg/volume.hpp"

namespace musreg {

namespace fs = std::filesystem;

// ---- PNG ------------------------------------------------------------------
//
// Pixel spacing travels in the pHYs chunk (pixels per metre). Files without
// pHYs load with 1 mm spacing.

/// 8/16-bit grayscale or 8-bit RGB, normalised to [0, 1].
Image2D load_image(const fs::path& path);
/// 8-bit grayscale with exact palette codes.
LabelMap2D load_labels(const fs::path& path);
/// 8-bit grayscale; any nonzero value is foreground.
Mask2D load_mask(const fs::path& path);

/// bit_depth is 8 or 16 for grayscale; RGB is always written with 8 bits.
void save_image(const Image2D& image, const fs::path& path, int bit_depth = 8);
void save_labels(const LabelMap2D& labels, const fs::path& path);
/// Foreground written as 255.
void save_mask(const Mask2D& mask, const fs::path& path);

// ---- Frame manifest --------------------------------------------------------

/// Reads a manifest and every frame it references. Frame paths are relative
/// to the manifest directory. Frames come back sorted by angle (stable).
FrameStack load_frame_stack(const fs::path& manifest_path);
/// Writes frames/frame_####.png (16-bit) and manifest.json under dir.
void write_frame_stack(const FrameStack& stack, const fs::path& dir);

// ---- Volume ----------------------------------------------------------------

/// <base>.json header plus <base>.raw payload of little-endian float32.
void write_volume(const Volume3D& volume, const fs::path& base_path);
Volume3D read_volume(const fs::path& base_path);
/// Header only; dims of the volume at base_path.
Volume3D::Dims read_volume_dims(const fs::path& base_path);

/// Raw (unnormalised) axial slice k as an image with in-plane spacing.
Image2D axial_slice(const Volume3D& volume, int k);
/// One 16-bit PNG per z index, normalised with a single window over the whole
/// volume. Returns the written paths in z order.
std::vector<fs::path> export_axial_slices(const Volume3D& volume, const fs::path& out_dir);
/// "slice_###.png" with at least three digits.
std::string axial_slice_filename(int k, int slice_count);

// ---- Landmarks -------------------------------------------------------------

enum class LandmarkRole { kUrethraCentroid, kAnatomicalLandmark, kStitchLandmark };

std::string_view landmark_role_name(LandmarkRole role);

struct LandmarkPoint {
  std::string name;
  LandmarkRole role = LandmarkRole::kAnatomicalLandmark;
  int slice = 0;
  Vec2 position_mm;
  friend bool operator==(const LandmarkPoint&, const LandmarkPoint&) = default;
};

struct LandmarkFile {
  std::vector<LandmarkPoint> points;

  /// First point with the given role on the given slice.
  std::optional<Vec2> find(LandmarkRole role, int slice) const;
  friend bool operator==(const LandmarkFile&, const LandmarkFile&) = default;
};

/// When slice_count is set, every slice index must lie in [0, slice_count).
LandmarkFile load_landmarks(const fs::path& path, std::optional<int> slice_count = std::nullopt);
void save_landmarks(const LandmarkFile& landmarks, const fs::path& path);

// ---- Helpers ---------------------------------------------------------------

/// Write to a sibling temporary file, then rename over the target.
void write_file_atomic(const fs::path& path, const std::string& contents);
std::string read_text_file(const fs::path& path);

}  // namespace musreg
