#include "musreg/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <regex>
#include <sstream>

#include <json.hpp>

#include "musreg/errors.hpp"
#include "musreg/resample.hpp"
#include "parallel.hpp"

namespace musreg {

using nlohmann::json;

// ---- Correspondence ------------------------------------------------------------

void Correspondence::validate() const {
  if (anchor_histology < 0 || anchor_microus < 0) {
    throw ValidationError("anchor indices must be non-negative");
  }
  if (!(histology_spacing_mm > 0.0) || !std::isfinite(histology_spacing_mm)) {
    throw ValidationError("histology_spacing_mm must be a positive number");
  }
  if (!(microus_spacing_mm > 0.0) || !std::isfinite(microus_spacing_mm)) {
    throw ValidationError("microus_spacing_mm must be a positive number");
  }
}

std::string correspondence_to_json(const Correspondence& c) {
  const json j = {{"anchor", {c.anchor_histology, c.anchor_microus}},
                  {"histology_spacing_mm", c.histology_spacing_mm},
                  {"microus_spacing_mm", c.microus_spacing_mm}};
  return j.dump(2);
}

Correspondence correspondence_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception&) {
    throw ValidationError("correspondence body is not valid JSON");
  }
  if (!j.is_object()) throw ValidationError("correspondence must be a JSON object");
  Correspondence c;
  bool has_anchor = false;
  for (const auto& [key, value] : j.items()) {
    if (key == "anchor") {
      if (!value.is_array() || value.size() != 2 || !value[0].is_number_integer() ||
          !value[1].is_number_integer()) {
        throw ValidationError("anchor must be [histology_index, microus_index] integers");
      }
      c.anchor_histology = value[0].get<int>();
      c.anchor_microus = value[1].get<int>();
      has_anchor = true;
    } else if (key == "histology_spacing_mm" || key == "microus_spacing_mm") {
      if (!value.is_number()) throw ValidationError(key + " must be a number");
      (key == "histology_spacing_mm" ? c.histology_spacing_mm : c.microus_spacing_mm) =
          value.get<double>();
    } else {
      throw ValidationError("unknown correspondence field: " + key);
    }
  }
  if (!has_anchor) throw ValidationError("correspondence is missing anchor");
  c.validate();
  return c;
}

Correspondence load_correspondence(const fs::path& path) {
  return correspondence_from_json(read_text_file(path));
}

void save_correspondence(const Correspondence& c, const fs::path& path) {
  write_file_atomic(path, correspondence_to_json(c) + "\n");
}

int corresponding_microus_slice(const Correspondence& c, int histology_index) {
  const double offset = c.histology_spacing_mm / c.microus_spacing_mm *
                        static_cast<double>(histology_index - c.anchor_histology);
  const double magnitude = std::ceil(std::abs(offset) - 0.5 - 1e-9);
  const int steps = static_cast<int>(std::max(magnitude, 0.0));
  return c.anchor_microus + (offset < 0.0 ? -steps : steps);
}

CorrespondenceMap propagate_correspondence(const Correspondence& c, int n_histology,
                                           int n_microus) {
  c.validate();
  if (c.anchor_histology >= n_histology) {
    throw ValidationError("anchor histology index " + std::to_string(c.anchor_histology) +
                          " is outside [0, " + std::to_string(n_histology) + ")");
  }
  if (c.anchor_microus >= n_microus) {
    throw ValidationError("anchor micro-US index " + std::to_string(c.anchor_microus) +
                          " is outside [0, " + std::to_string(n_microus) + ")");
  }
  CorrespondenceMap map;
  for (int n = 0; n < n_histology; ++n) {
    const int m = corresponding_microus_slice(c, n);
    if (m < 0 || m >= n_microus) {
      map.dropped.push_back({n, m, "micro-US slice out of range"});
    } else {
      map.pairs.push_back({n, m});
    }
  }
  return map;
}

// ---- Case layout ---------------------------------------------------------------

std::string histology_slice_filename(int n, int slice_count) {
  int digits = 2;
  for (int v = std::max(slice_count - 1, 0); v >= 100; v /= 10) ++digits;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "slice_%0*d.png", digits, n);
  return buf;
}

namespace {

std::string with_suffix(std::string name, const std::string& suffix) {
  return name.substr(0, name.size() - 4) + suffix;
}

}  // namespace

CaseLayout::CaseLayout(fs::path root) : root_(std::move(root)) {}

fs::path CaseLayout::axial_slice(int k, int count) const {
  return axial_dir() / axial_slice_filename(k, count);
}
fs::path CaseLayout::histology_slice(int n, int count) const {
  return histology_dir() / histology_slice_filename(n, count);
}
fs::path CaseLayout::microus_mask(int k, int count) const {
  return root_ / "masks" / "microus" / axial_slice_filename(k, count);
}
fs::path CaseLayout::histology_mask(int n, int count) const {
  return root_ / "masks" / "histology" / histology_slice_filename(n, count);
}
fs::path CaseLayout::affine_transform(int n, int count) const {
  return output_dir() / "transforms" / with_suffix(histology_slice_filename(n, count), "_affine.json");
}
fs::path CaseLayout::ffd_transform(int n, int count) const {
  return output_dir() / "transforms" / with_suffix(histology_slice_filename(n, count), "_ffd.json");
}
fs::path CaseLayout::warped_labels(int n, int count) const {
  return output_dir() / "warped_labels" / histology_slice_filename(n, count);
}
fs::path CaseLayout::overlay(int n, int count) const {
  return output_dir() / "overlays" / histology_slice_filename(n, count);
}

int CaseLayout::histology_count() const {
  int count = 0;
  if (!fs::is_directory(histology_dir())) return 0;
  static const std::regex pattern(R"(slice_(\d+)\.png)");
  for (const auto& entry : fs::directory_iterator(histology_dir())) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, pattern)) count = std::max(count, std::stoi(m[1]) + 1);
  }
  return count;
}

int CaseLayout::microus_count() const {
  const fs::path header = fs::path(volume_base()).concat(".json");
  if (fs::exists(header)) return read_volume_dims(volume_base())[2];
  int count = 0;
  if (!fs::is_directory(axial_dir())) return 0;
  static const std::regex pattern(R"(slice_(\d+)\.png)");
  for (const auto& entry : fs::directory_iterator(axial_dir())) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, pattern)) count = std::max(count, std::stoi(m[1]) + 1);
  }
  return count;
}

// ---- Metrics and overlays ------------------------------------------------------

SliceMetrics compute_slice_metrics(int histology_index, int microus_index,
                                   const LabelMap2D& microus_labels,
                                   const LabelMap2D& warped_labels,
                                   const CompositeTransform& transform,
                                   const std::optional<LandmarkFile>& microus_landmarks,
                                   const std::optional<LandmarkFile>& histology_landmarks) {
  SliceMetrics m;
  m.slice = histology_index;
  const Mask2D fixed = prostate_mask(microus_labels);
  const Mask2D warped = prostate_mask(warped_labels);
  m.dice = dice(fixed, warped);
  m.hausdorff_mm = hausdorff(fixed, warped);

  std::optional<Vec2> micro_urethra;
  if (microus_landmarks) {
    micro_urethra = microus_landmarks->find(LandmarkRole::kUrethraCentroid, microus_index);
  }
  if (!micro_urethra) micro_urethra = center_of_mass(label_mask(microus_labels, Label::kUrethra));
  std::optional<Vec2> hist_urethra = center_of_mass(label_mask(warped_labels, Label::kUrethra));
  if (!hist_urethra && histology_landmarks) {
    if (auto q = histology_landmarks->find(LandmarkRole::kUrethraCentroid, histology_index)) {
      hist_urethra = invert_point(transform, *q);
    }
  }
  if (micro_urethra && hist_urethra) {
    m.urethra_deviation_mm = urethra_deviation(*micro_urethra, *hist_urethra);
  }

  if (microus_landmarks && histology_landmarks) {
    const auto p = microus_landmarks->find(LandmarkRole::kAnatomicalLandmark, microus_index);
    const auto q = histology_landmarks->find(LandmarkRole::kAnatomicalLandmark, histology_index);
    if (p && q) m.landmark_error_mm = landmark_error(*p, invert_point(transform, *q));
  }
  return m;
}

Image2D render_overlay(const Image2D& base, const LabelMap2D& warped_labels,
                       const LabelMap2D& microus_labels, double opacity) {
  if (base.width() != warped_labels.width() || base.height() != warped_labels.height() ||
      base.width() != microus_labels.width() || base.height() != microus_labels.height()) {
    throw ValidationError("overlay inputs must share a grid");
  }
  const double alpha = std::clamp(opacity, 0.0, 1.0);
  const Image2D gray = to_gray(base);
  const Mask2D contour = boundary(prostate_mask(microus_labels));
  Image2D out(base.width(), base.height(), 3, base.spacing());
  constexpr double kOrange[3] = {1.0, 0.55, 0.0};
  constexpr double kBlue[3] = {0.0, 0.0, 1.0};
  for (int r = 0; r < base.height(); ++r) {
    for (int c = 0; c < base.width(); ++c) {
      const double g = gray.at(c, r);
      double rgb[3] = {g, g, g};
      auto blend = [&](const double* color) {
        for (int ch = 0; ch < 3; ++ch) rgb[ch] = (1.0 - alpha) * rgb[ch] + alpha * color[ch];
      };
      if (warped_labels.at(c, r) == Label::kCancer) blend(kOrange);
      if (contour.at(c, r)) blend(kBlue);
      for (int ch = 0; ch < 3; ++ch) out.at(c, r, ch) = rgb[ch];
    }
  }
  return out;
}

// ---- Reports -------------------------------------------------------------------

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string format_optional(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string();
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

std::string report_to_csv(const CaseRunResult& result) {
  std::ostringstream out;
  out << "slice,dice,hd_mm,ud_mm,le_mm\n";
  for (const auto& s : result.report.slices) {
    out << s.slice << ',' << format_double(s.dice) << ',' << format_double(s.hausdorff_mm) << ','
        << format_optional(s.urethra_deviation_mm) << ',' << format_optional(s.landmark_error_mm)
        << '\n';
  }
  return out.str();
}

std::string report_to_json(const CaseRunResult& result) {
  const CaseReport& r = result.report;
  json slices = json::array();
  for (std::size_t i = 0; i < r.slices.size(); ++i) {
    const auto& s = r.slices[i];
    json entry = {{"slice", s.slice},
                  {"dice", s.dice},
                  {"hd_mm", s.hausdorff_mm},
                  {"ud_mm", optional_json(s.urethra_deviation_mm)},
                  {"le_mm", optional_json(s.landmark_error_mm)}};
    if (i < result.microus_slices.size()) entry["microus_slice"] = result.microus_slices[i];
    slices.push_back(entry);
  }
  json skipped = json::array();
  for (const auto& s : result.skipped) {
    skipped.push_back({{"slice", s.histology}, {"microus_slice", s.microus}, {"reason", s.reason}});
  }
  json dropped = json::array();
  for (const auto& d : result.dropped) {
    dropped.push_back({{"slice", d.histology}, {"microus_slice", d.microus}, {"reason", d.reason}});
  }
  const json j = {
      {"K", r.k},
      {"means",
       {{"dice", optional_json(r.dice.mean)},
        {"hd_mm", optional_json(r.hausdorff_mm.mean)},
        {"ud_mm", optional_json(r.urethra_deviation_mm.mean)},
        {"le_mm", optional_json(r.landmark_error_mm.mean)}}},
      {"counts",
       {{"dice", r.dice.count},
        {"hd_mm", r.hausdorff_mm.count},
        {"ud_mm", r.urethra_deviation_mm.count},
        {"le_mm", r.landmark_error_mm.count}}},
      {"slices", slices},
      {"skipped", skipped},
      {"dropped", dropped}};
  return j.dump(2) + "\n";
}

void write_report(const CaseRunResult& result, const fs::path& csv_path,
                  const fs::path& json_path) {
  if (csv_path.has_parent_path()) fs::create_directories(csv_path.parent_path());
  if (json_path.has_parent_path()) fs::create_directories(json_path.parent_path());
  write_file_atomic(csv_path, report_to_csv(result));
  write_file_atomic(json_path, report_to_json(result));
}

// ---- Running ---------------------------------------------------------------------

namespace {

std::optional<LandmarkFile> maybe_landmarks(const fs::path& path) {
  if (!fs::exists(path)) return std::nullopt;
  return load_landmarks(path);
}

LabelMap2D load_labels_on_grid(const fs::path& path, const GridSpec& grid) {
  LabelMap2D labels = load_labels(path);
  if (labels.width() != grid.width || labels.height() != grid.height) {
    throw ValidationError("label map " + path.filename().string() +
                          " does not match its image size");
  }
  labels.set_spacing(grid.spacing_mm);
  return labels;
}

struct SliceOutcome {
  std::optional<SliceMetrics> metrics;
  std::optional<std::string> skip_reason;
};

CaseRunResult collect(const std::vector<SlicePairing>& pairs,
                      const std::vector<SliceOutcome>& outcomes,
                      std::vector<DroppedPair> dropped) {
  CaseRunResult result;
  result.dropped = std::move(dropped);
  std::vector<SliceMetrics> metrics;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (outcomes[i].metrics) {
      metrics.push_back(*outcomes[i].metrics);
      result.microus_slices.push_back(pairs[i].microus);
    } else {
      result.skipped.push_back(
          {pairs[i].histology, pairs[i].microus, outcomes[i].skip_reason.value_or("skipped")});
    }
  }
  if (metrics.empty()) throw ValidationError("no corresponded slice could be processed");
  result.report = aggregate_case(metrics);
  return result;
}

}  // namespace

CaseRunResult run_case(const PipelineConfig& config) {
  config.registration.validate();
  const CaseLayout layout(config.root);

  Volume3D volume;
  const fs::path header = fs::path(layout.volume_base()).concat(".json");
  if (!config.rebuild_volume && fs::exists(header)) {
    volume = read_volume(layout.volume_base());
  } else {
    volume = reconstruct_volume(load_frame_stack(layout.manifest()), config.volume,
                                config.reconstruct);
    write_volume(volume, layout.volume_base());
  }
  export_axial_slices(volume, layout.axial_dir());
  const int n_micro = volume.dims()[2];
  const int n_hist = layout.histology_count();
  if (!fs::exists(layout.correspondence())) {
    throw ValidationError("case has no correspondence.json");
  }
  const CorrespondenceMap map =
      propagate_correspondence(load_correspondence(layout.correspondence()), n_hist, n_micro);
  if (map.pairs.empty()) throw ValidationError("no corresponded slices");

  const auto micro_landmarks = maybe_landmarks(layout.microus_landmarks());
  const auto hist_landmarks = maybe_landmarks(layout.histology_landmarks());
  for (const char* sub : {"transforms", "warped_labels", "overlays"}) {
    fs::create_directories(layout.output_dir() / sub);
  }

  std::vector<SliceOutcome> outcomes(map.pairs.size());
  detail::parallel_for(static_cast<int>(map.pairs.size()), [&](int i) {
    const auto [n, m] = map.pairs[static_cast<std::size_t>(i)];
    SliceOutcome& out = outcomes[static_cast<std::size_t>(i)];
    const fs::path micro_mask_path = layout.microus_mask(m, n_micro);
    const fs::path hist_path = layout.histology_slice(n, n_hist);
    const fs::path hist_mask_path = layout.histology_mask(n, n_hist);
    if (!fs::exists(hist_path)) {
      out.skip_reason = "missing histology image " + hist_path.filename().string();
    } else if (!fs::exists(hist_mask_path)) {
      out.skip_reason = "missing histology mask " + hist_mask_path.filename().string();
    } else if (!fs::exists(micro_mask_path)) {
      out.skip_reason = "missing micro-US mask " + micro_mask_path.filename().string();
    }
    if (out.skip_reason) return;
    try {
      const Image2D fixed = load_image(layout.axial_slice(m, n_micro));
      const Image2D moving = load_image(hist_path);
      const LabelMap2D micro_labels = load_labels_on_grid(micro_mask_path, GridSpec::of(fixed));
      const LabelMap2D hist_labels = load_labels_on_grid(hist_mask_path, GridSpec::of(moving));
      const RegistrationResult reg =
          register_pair(fixed, moving, prostate_mask(micro_labels), prostate_mask(hist_labels),
                        config.registration);
      const CompositeTransform t = reg.transform();
      save_affine(t.affine, layout.affine_transform(n, n_hist));
      save_ffd(*t.ffd, layout.ffd_transform(n, n_hist));
      const LabelMap2D warped =
          warp_labels(hist_labels, [&t](Vec2 p) { return t.apply(p); }, GridSpec::of(fixed));
      save_labels(warped, layout.warped_labels(n, n_hist));
      save_image(render_overlay(fixed, warped, micro_labels, config.overlay_opacity),
                 layout.overlay(n, n_hist));
      out.metrics = compute_slice_metrics(n, m, micro_labels, warped, t, micro_landmarks,
                                          hist_landmarks);
    } catch (const Error& e) {
      out.skip_reason = e.what();
    }
  });

  CaseRunResult result = collect(map.pairs, outcomes, map.dropped);
  write_report(result, layout.report_csv(), layout.report_json());
  return result;
}

CaseRunResult evaluate_case(const fs::path& root) {
  const CaseLayout layout(root);
  const int n_micro = layout.microus_count();
  const int n_hist = layout.histology_count();
  const CorrespondenceMap map =
      propagate_correspondence(load_correspondence(layout.correspondence()), n_hist, n_micro);
  const auto micro_landmarks = maybe_landmarks(layout.microus_landmarks());
  const auto hist_landmarks = maybe_landmarks(layout.histology_landmarks());

  std::vector<SliceOutcome> outcomes(map.pairs.size());
  detail::parallel_for(static_cast<int>(map.pairs.size()), [&](int i) {
    const auto [n, m] = map.pairs[static_cast<std::size_t>(i)];
    SliceOutcome& out = outcomes[static_cast<std::size_t>(i)];
    const fs::path warped_path = layout.warped_labels(n, n_hist);
    if (!fs::exists(warped_path)) {
      out.skip_reason = "no registration output " + warped_path.filename().string();
      return;
    }
    try {
      const LabelMap2D warped = load_labels(warped_path);
      const LabelMap2D micro_labels = load_labels_on_grid(
          layout.microus_mask(m, n_micro), GridSpec::of(warped));
      const CompositeTransform t{load_affine(layout.affine_transform(n, n_hist)),
                                 load_ffd(layout.ffd_transform(n, n_hist))};
      out.metrics = compute_slice_metrics(n, m, micro_labels, warped, t, micro_landmarks,
                                          hist_landmarks);
    } catch (const Error& e) {
      out.skip_reason = e.what();
    }
  });
  return collect(map.pairs, outcomes, map.dropped);
}

}  // namespace musreg
