#include "musreg/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace musreg {

using nlohmann::json;

namespace {

json parse_json_file(const fs::path& path) {
  const std::string text = read_text_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError("'" + path.string() + "': invalid JSON: " + e.what());
  }
}

template <typename T>
T require(const json& j, const char* key, const fs::path& path) {
  if (!j.is_object() || !j.contains(key)) {
    throw FormatError("'" + path.string() + "': missing field '" + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw FormatError("'" + path.string() + "': field '" + key + "' has the wrong type");
  }
}

std::string frame_filename(std::size_t i) {
  std::ostringstream name;
  name << "frame_";
  name.width(4);
  name.fill('0');
  name << i << ".png";
  return name.str();
}

}  // namespace

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError("write to '" + tmp.string() + "' failed");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename '" + tmp.string() + "' to '" + path.string() + "'");
}

// ---- Frame manifest ---------------------------------------------------------

void FrameStack::validate() const {
  if (frames.size() != angles_deg.size()) {
    throw ValidationError("frame count (" + std::to_string(frames.size()) +
                          ") does not match angle count (" + std::to_string(angles_deg.size()) +
                          ")");
  }
  if (!(pixel_spacing_mm > 0.0) || !std::isfinite(pixel_spacing_mm)) {
    throw ValidationError("pixel spacing must be positive");
  }
  if (!(probe_radius_mm >= 0.0) || !std::isfinite(probe_radius_mm)) {
    throw ValidationError("probe radius must be non-negative");
  }
  if (width_px <= 0 || height_px <= 0) throw ValidationError("frame dimensions must be positive");
  for (std::size_t i = 0; i < angles_deg.size(); ++i) {
    const double a = angles_deg[i];
    if (!std::isfinite(a) || a < -90.0 || a > 90.0) {
      throw ValidationError("frame angle " + std::to_string(a) + " outside [-90, 90]");
    }
    if (i > 0 && a < angles_deg[i - 1]) throw ValidationError("frame angles must be sorted");
  }
  for (const Image2D& f : frames) {
    if (f.width() != width_px || f.height() != height_px) {
      throw ValidationError("frame dimensions differ from the declared frame size");
    }
    if (f.channels() != 1) throw ValidationError("frames must be grayscale");
  }
}

FrameStack load_frame_stack(const fs::path& manifest_path) {
  if (!fs::exists(manifest_path)) {
    throw IoError("manifest '" + manifest_path.string() + "' does not exist");
  }
  const json j = parse_json_file(manifest_path);
  const fs::path base = manifest_path.parent_path();

  FrameStack stack;
  stack.probe_radius_mm = require<double>(j, "probe_radius_mm", manifest_path);
  stack.pixel_spacing_mm = require<double>(j, "pixel_spacing_mm", manifest_path);
  stack.width_px = require<int>(j, "frame_width_px", manifest_path);
  stack.height_px = require<int>(j, "frame_height_px", manifest_path);
  const json frames = require<json>(j, "frames", manifest_path);
  if (!frames.is_array()) throw FormatError("'" + manifest_path.string() + "': frames must be an array");

  std::vector<std::string> files;
  std::vector<double> angles;
  for (const json& f : frames) {
    if (f.is_string()) {
      files.push_back(f.get<std::string>());
    } else {
      files.push_back(require<std::string>(f, "file", manifest_path));
      if (f.contains("angle_deg")) angles.push_back(require<double>(f, "angle_deg", manifest_path));
    }
  }
  if (j.contains("angles_deg")) {
    angles = require<std::vector<double>>(j, "angles_deg", manifest_path);
  }
  if (angles.size() != files.size()) {
    throw ValidationError("'" + manifest_path.string() + "': " + std::to_string(files.size()) +
                          " frames but " + std::to_string(angles.size()) + " angles");
  }
  for (double a : angles) {
    if (!std::isfinite(a) || a < -90.0 || a > 90.0) {
      throw ValidationError("'" + manifest_path.string() + "': angle " + std::to_string(a) +
                            " outside [-90, 90]");
    }
  }
  if (!(stack.pixel_spacing_mm > 0.0)) throw ValidationError("pixel_spacing_mm must be positive");

  std::vector<std::size_t> order(files.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return angles[a] < angles[b]; });

  for (std::size_t idx : order) {
    const fs::path frame_path = base / files[idx];
    if (!fs::exists(frame_path)) {
      throw IoError("frame file '" + frame_path.string() + "' does not exist");
    }
    Image2D frame = to_gray(load_image(frame_path));
    if (frame.width() != stack.width_px || frame.height() != stack.height_px) {
      throw ValidationError("frame '" + frame_path.string() + "' is " +
                            std::to_string(frame.width()) + "x" + std::to_string(frame.height()) +
                            ", manifest declares " + std::to_string(stack.width_px) + "x" +
                            std::to_string(stack.height_px));
    }
    frame.set_spacing({stack.pixel_spacing_mm, stack.pixel_spacing_mm});
    stack.frames.push_back(std::move(frame));
    stack.angles_deg.push_back(angles[idx]);
  }
  stack.validate();
  return stack;
}

void write_frame_stack(const FrameStack& stack, const fs::path& dir) {
  stack.validate();
  fs::create_directories(dir / "frames");
  json frames = json::array();
  for (std::size_t i = 0; i < stack.frames.size(); ++i) {
    const std::string rel = "frames/" + frame_filename(i);
    save_image(stack.frames[i], dir / rel, 16);
    frames.push_back({{"file", rel}, {"angle_deg", stack.angles_deg[i]}});
  }
  json manifest = {
      {"probe_radius_mm", stack.probe_radius_mm},
      {"pixel_spacing_mm", stack.pixel_spacing_mm},
      {"frame_width_px", stack.width_px},
      {"frame_height_px", stack.height_px},
      {"frames", frames},
  };
  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

// ---- Volume ----------------------------------------------------------------

namespace {

fs::path with_suffix(const fs::path& base, const char* suffix) {
  fs::path p = base;
  p += suffix;
  return p;
}

json read_volume_header(const fs::path& base_path) {
  const fs::path header_path = with_suffix(base_path, ".json");
  const json h = parse_json_file(header_path);
  if (require<std::string>(h, "dtype", header_path) != "f32le") {
    throw FormatError("'" + header_path.string() + "': dtype must be f32le");
  }
  if (require<std::string>(h, "order", header_path) != "x-fastest") {
    throw FormatError("'" + header_path.string() + "': order must be x-fastest");
  }
  return h;
}

}  // namespace

void write_volume(const Volume3D& volume, const fs::path& base_path) {
  const auto& d = volume.dims();
  const Vec3 s = volume.spacing();
  const Vec3 o = volume.origin();
  json header = {
      {"dims", {d[0], d[1], d[2]}},
      {"spacing_mm", {s.x, s.y, s.z}},
      {"origin_mm", {o.x, o.y, o.z}},
      {"dtype", "f32le"},
      {"order", "x-fastest"},
  };

  std::string payload(volume.voxel_count() * sizeof(float), '\0');
  auto voxels = volume.voxels();
  for (std::size_t i = 0; i < voxels.size(); ++i) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(voxels[i]);
    if constexpr (std::endian::native == std::endian::big) {
      bits = ((bits & 0xffu) << 24) | ((bits & 0xff00u) << 8) | ((bits >> 8) & 0xff00u) |
             (bits >> 24);
    }
    std::memcpy(payload.data() + i * 4, &bits, 4);
  }
  write_file_atomic(with_suffix(base_path, ".raw"), payload);
  write_file_atomic(with_suffix(base_path, ".json"), header.dump(2) + "\n");
}

Volume3D::Dims read_volume_dims(const fs::path& base_path) {
  const json h = read_volume_header(base_path);
  const auto dims = require<std::vector<int>>(h, "dims", with_suffix(base_path, ".json"));
  if (dims.size() != 3) throw FormatError("volume dims must have three entries");
  return {dims[0], dims[1], dims[2]};
}

Volume3D read_volume(const fs::path& base_path) {
  const fs::path header_path = with_suffix(base_path, ".json");
  const json h = read_volume_header(base_path);
  const auto dims = require<std::vector<int>>(h, "dims", header_path);
  const auto spacing = require<std::vector<double>>(h, "spacing_mm", header_path);
  const auto origin = require<std::vector<double>>(h, "origin_mm", header_path);
  if (dims.size() != 3 || spacing.size() != 3 || origin.size() != 3) {
    throw FormatError("'" + header_path.string() + "': dims, spacing_mm and origin_mm need 3 entries");
  }
  Volume3D volume({dims[0], dims[1], dims[2]}, {spacing[0], spacing[1], spacing[2]},
                  {origin[0], origin[1], origin[2]});

  const std::string payload = read_text_file(with_suffix(base_path, ".raw"));
  const std::size_t expected = volume.voxel_count() * sizeof(float);
  if (payload.size() != expected) {
    throw FormatError("'" + with_suffix(base_path, ".raw").string() + "': payload has " +
                      std::to_string(payload.size()) + " bytes, header implies " +
                      std::to_string(expected));
  }
  auto voxels = volume.voxels();
  for (std::size_t i = 0; i < voxels.size(); ++i) {
    std::uint32_t bits = 0;
    std::memcpy(&bits, payload.data() + i * 4, 4);
    if constexpr (std::endian::native == std::endian::big) {
      bits = ((bits & 0xffu) << 24) | ((bits & 0xff00u) << 8) | ((bits >> 8) & 0xff00u) |
             (bits >> 24);
    }
    voxels[i] = std::bit_cast<float>(bits);
  }
  return volume;
}

Image2D axial_slice(const Volume3D& volume, int k) {
  const auto& d = volume.dims();
  if (k < 0 || k >= d[2]) throw ValidationError("axial slice index out of range");
  Image2D slice(d[0], d[1], 1, {volume.spacing().x, volume.spacing().y});
  for (int j = 0; j < d[1]; ++j) {
    for (int i = 0; i < d[0]; ++i) slice.at(i, j) = volume.at(i, j, k);
  }
  return slice;
}

std::string axial_slice_filename(int k, int slice_count) {
  int digits = 3;
  for (int n = std::max(slice_count - 1, 0); n >= 1000; n /= 10) ++digits;
  std::ostringstream name;
  name << "slice_";
  name.width(digits);
  name.fill('0');
  name << k << ".png";
  return name.str();
}

std::vector<fs::path> export_axial_slices(const Volume3D& volume, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  auto voxels = volume.voxels();
  const auto [lo, hi] = std::minmax_element(voxels.begin(), voxels.end());
  const double low = *lo;
  const double range = static_cast<double>(*hi) - *lo;

  const int nz = volume.dims()[2];
  std::vector<fs::path> written;
  written.reserve(nz);
  for (int k = 0; k < nz; ++k) {
    Image2D slice = axial_slice(volume, k);
    for (double& v : slice.values()) v = range > 0.0 ? (v - low) / range : 0.5;
    const fs::path path = out_dir / axial_slice_filename(k, nz);
    save_image(slice, path, 16);
    written.push_back(path);
  }
  return written;
}

// ---- Landmarks -------------------------------------------------------------

std::string_view landmark_role_name(LandmarkRole role) {
  switch (role) {
    case LandmarkRole::kUrethraCentroid: return "urethra-centroid";
    case LandmarkRole::kAnatomicalLandmark: return "anatomical-landmark";
    case LandmarkRole::kStitchLandmark: return "stitch-landmark";
  }
  return "unknown";
}

std::optional<Vec2> LandmarkFile::find(LandmarkRole role, int slice) const {
  for (const LandmarkPoint& p : points) {
    if (p.role == role && p.slice == slice) return p.position_mm;
  }
  return std::nullopt;
}

LandmarkFile load_landmarks(const fs::path& path, std::optional<int> slice_count) {
  const json j = parse_json_file(path);
  const json points = require<json>(j, "points", path);
  if (!points.is_array()) throw FormatError("'" + path.string() + "': points must be an array");
  LandmarkFile file;
  for (const json& p : points) {
    LandmarkPoint point;
    point.name = require<std::string>(p, "name", path);
    const auto role = require<std::string>(p, "role", path);
    if (role == "urethra-centroid") {
      point.role = LandmarkRole::kUrethraCentroid;
    } else if (role == "anatomical-landmark") {
      point.role = LandmarkRole::kAnatomicalLandmark;
    } else if (role == "stitch-landmark") {
      point.role = LandmarkRole::kStitchLandmark;
    } else {
      throw ValidationError("'" + path.string() + "': unknown landmark role '" + role + "'");
    }
    point.slice = require<int>(p, "slice", path);
    point.position_mm = {require<double>(p, "x_mm", path), require<double>(p, "y_mm", path)};
    if (!std::isfinite(point.position_mm.x) || !std::isfinite(point.position_mm.y)) {
      throw ValidationError("'" + path.string() + "': landmark '" + point.name + "' is not finite");
    }
    if (point.slice < 0 || (slice_count && point.slice >= *slice_count)) {
      throw ValidationError("'" + path.string() + "': landmark '" + point.name + "' slice " +
                            std::to_string(point.slice) + " out of range");
    }
    file.points.push_back(std::move(point));
  }
  return file;
}

void save_landmarks(const LandmarkFile& landmarks, const fs::path& path) {
  json points = json::array();
  for (const LandmarkPoint& p : landmarks.points) {
    points.push_back({{"name", p.name},
                      {"role", std::string(landmark_role_name(p.role))},
                      {"slice", p.slice},
                      {"x_mm", p.position_mm.x},
                      {"y_mm", p.position_mm.y}});
  }
  write_file_atomic(path, json{{"points", points}}.dump(2) + "\n");
}

}  // namespace musreg
