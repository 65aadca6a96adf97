#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "musreg/errors.hpp"
#include "musreg/io.hpp"
#include "musreg/metrics.hpp"
#include "musreg/phantom.hpp"
#include "musreg/pipeline.hpp"
#include "musreg/reconstruct.hpp"
#include "musreg/register.hpp"
#include "musreg/resample.hpp"
#include "musreg/service.hpp"
#include "musreg/stitch.hpp"
#include "musreg/transform.hpp"

namespace {

using namespace musreg;
using nlohmann::json;

struct RegistrationFlags {
  std::string config_path;
  bool literal_schedule = false;

  void add_to(CLI::App* app) {
    app->add_option("--config", config_path, "Registration config JSON")->check(CLI::ExistingFile);
    app->add_flag("--literal-paper-schedule", literal_schedule,
                  "Run the pyramid in the listed order (4,4),(8,2),(2,1)");
  }

  RegistrationConfig resolve() const {
    RegistrationConfig config = config_path.empty() ? RegistrationConfig{} : load_config(config_path);
    if (literal_schedule) config.schedule = PyramidSchedule::literal();
    config.validate();
    return config;
  }
};

struct ReconstructFlags {
  double sigma_i = 0.4;
  double sigma_t = 1.0;
  bool nearest = false;
  bool literal_lookup = false;

  void add_to(CLI::App* app) {
    app->add_option("--sigma-i", sigma_i, "In-plane voxel size (mm)")->capture_default_str();
    app->add_option("--sigma-t", sigma_t, "Through-plane voxel size (mm)")->capture_default_str();
    app->add_flag("--nearest", nearest, "Nearest-neighbour sampling within frames");
    app->add_flag("--literal-paper-lookup", literal_lookup,
                  "Map radial distance to frame rows without the probe-radius offset");
  }

  VolumeSpec spec() const { return {sigma_i, sigma_t}; }
  ReconstructOptions options() const {
    ReconstructOptions o;
    o.interpolation = nearest ? FrameInterpolation::kNearest : FrameInterpolation::kBilinear;
    o.convention = literal_lookup ? RadialConvention::kLiteral : RadialConvention::kRadiusOffset;
    return o;
  }
};

void print_report(const CaseRunResult& r) {
  const CaseReport& c = r.report;
  std::printf("K=%zu", c.k);
  auto field = [](const char* name, const MetricSummary& m) {
    if (m.mean) std::printf(" %s=%.4f", name, *m.mean);
  };
  field("dice", c.dice);
  field("hd_mm", c.hausdorff_mm);
  field("ud_mm", c.urethra_deviation_mm);
  field("le_mm", c.landmark_error_mm);
  std::printf(" skipped=%zu dropped=%zu\n", r.skipped.size(), r.dropped.size());
}

int cmd_reconstruct(const std::string& manifest, const std::string& out, const ReconstructFlags& f) {
  const FrameStack stack = load_frame_stack(manifest);
  const Volume3D v = reconstruct_volume(stack, f.spec(), f.options());
  write_volume(v, out);
  const auto& d = v.dims();
  std::printf("volume %dx%dx%d written to %s.{json,raw}\n", d[0], d[1], d[2], out.c_str());
  return 0;
}

int cmd_stitch(const std::vector<std::string>& fragments, const std::string& plan_path,
               const std::string& out) {
  const StitchPlan plan = load_stitch_plan(plan_path);
  std::vector<Image2D> images;
  for (const auto& f : fragments) images.push_back(load_image(f));
  save_image(stitch(images, plan), out);
  std::printf("stitched %zu fragments into %s\n", images.size(), out.c_str());
  return 0;
}

json trace_json(const std::vector<LevelTrace>& trace) {
  json levels = json::array();
  for (const auto& t : trace) {
    levels.push_back({{"shrink", t.level.shrink},
                      {"sigma_px", t.level.sigma_px},
                      {"start_loss", t.start_loss},
                      {"trial_losses", t.trial_losses},
                      {"accepted", t.accepted},
                      {"best_loss", t.best_loss}});
  }
  return levels;
}

int cmd_register(const std::string& fixed_path, const std::string& moving_path,
                 const std::string& fixed_mask_path, const std::string& moving_mask_path,
                 const std::string& moving_labels_path, const fs::path& out_dir,
                 const RegistrationConfig& config) {
  const Image2D fixed = load_image(fixed_path);
  const Image2D moving = load_image(moving_path);
  Mask2D fixed_mask = load_mask(fixed_mask_path);
  Mask2D moving_mask = load_mask(moving_mask_path);
  if (fixed_mask.width() != fixed.width() || fixed_mask.height() != fixed.height() ||
      moving_mask.width() != moving.width() || moving_mask.height() != moving.height()) {
    throw ValidationError("each mask must match its image size");
  }
  fixed_mask.set_spacing(fixed.spacing());
  moving_mask.set_spacing(moving.spacing());

  const RegistrationResult reg = register_pair(fixed, moving, fixed_mask, moving_mask, config);
  const CompositeTransform t = reg.transform();
  fs::create_directories(out_dir);
  save_affine(t.affine, out_dir / "affine.json");
  save_ffd(*t.ffd, out_dir / "ffd.json");
  const PointFunction map = [&t](Vec2 p) { return t.apply(p); };
  save_image(resample(moving, map, GridSpec::of(fixed), Interpolation::kBilinear,
                      moving.channels() == 3 ? 1.0 : 0.0),
             out_dir / "warped.png");
  if (!moving_labels_path.empty()) {
    LabelMap2D labels = load_labels(moving_labels_path);
    labels.set_spacing(moving.spacing());
    save_labels(warp_labels(labels, map, GridSpec::of(fixed)), out_dir / "warped_labels.png");
  }
  const json summary = {
      {"affine", {{"initial_loss", reg.affine.initial_loss},
                  {"final_loss", reg.affine.final_loss},
                  {"kept_initial", reg.affine.kept_initial},
                  {"levels", trace_json(reg.affine.trace)}}},
      {"ffd", {{"initial_loss", reg.ffd.initial_loss},
               {"final_loss", reg.ffd.final_loss},
               {"kept_initial", reg.ffd.kept_initial},
               {"degenerate", reg.ffd.degenerate},
               {"warning", reg.ffd.warning},
               {"levels", trace_json(reg.ffd.trace)}}},
      {"warped_mask_dice", dice(fixed_mask, warp_mask(moving_mask, map, GridSpec::of(fixed)))}};
  write_file_atomic(out_dir / "registration.json", summary.dump(2) + "\n");
  if (!reg.ffd.warning.empty()) std::fprintf(stderr, "warning: %s\n", reg.ffd.warning.c_str());
  std::printf("affine loss %.6g -> %.6g, MI loss %.6g -> %.6g, mask Dice %.4f\n",
              reg.affine.initial_loss, reg.affine.final_loss, reg.ffd.initial_loss,
              reg.ffd.final_loss, summary["warped_mask_dice"].get<double>());
  return 0;
}

// Directed boundary distances for every reported slice, from stored outputs.
json directed_distances(const fs::path& root, const CaseRunResult& r) {
  const CaseLayout layout(root);
  const int n_micro = layout.microus_count();
  const int n_hist = layout.histology_count();
  json out = json::array();
  for (std::size_t i = 0; i < r.report.slices.size(); ++i) {
    const int n = r.report.slices[i].slice;
    const int m = r.microus_slices[i];
    const LabelMap2D warped = load_labels(layout.warped_labels(n, n_hist));
    LabelMap2D micro = load_labels(layout.microus_mask(m, n_micro));
    micro.set_spacing(warped.spacing());
    const DirectedHausdorff d = hausdorff_directed(prostate_mask(micro), prostate_mask(warped));
    out.push_back({{"slice", n}, {"microus_to_histology_mm", d.a_to_b},
                   {"histology_to_microus_mm", d.b_to_a}});
  }
  return out;
}

int cmd_metrics(const fs::path& case_dir, const fs::path& out, bool directed) {
  const CaseRunResult r = evaluate_case(case_dir);
  fs::path csv = out;
  fs::path js = out;
  csv += ".csv";
  js += ".json";
  write_report(r, csv, js);
  if (directed) {
    json j = json::parse(read_text_file(js));
    j["hausdorff_directed"] = directed_distances(case_dir, r);
    write_file_atomic(js, j.dump(2) + "\n");
  }
  print_report(r);
  return 0;
}

int cmd_pipeline_run(const fs::path& case_dir, const RegistrationConfig& config,
                     const ReconstructFlags& f, bool rebuild, double opacity) {
  PipelineConfig pc;
  pc.root = case_dir;
  pc.registration = config;
  pc.volume = f.spec();
  pc.reconstruct = f.options();
  pc.rebuild_volume = rebuild;
  pc.overlay_opacity = opacity;
  const CaseRunResult r = run_case(pc);
  for (const auto& s : r.skipped) {
    std::fprintf(stderr, "skipped histology %d (micro-US %d): %s\n", s.histology, s.microus,
                 s.reason.c_str());
  }
  for (const auto& d : r.dropped) {
    std::fprintf(stderr, "dropped histology %d (micro-US %d): %s\n", d.histology, d.microus,
                 d.reason.c_str());
  }
  print_report(r);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Histology to micro-ultrasound registration toolkit"};
  app.require_subcommand(1);

  auto* reconstruct = app.add_subcommand("reconstruct", "Reconstruct an axial volume from fan frames");
  std::string manifest;
  std::string volume_out;
  ReconstructFlags recon_flags;
  reconstruct->add_option("--manifest", manifest, "Frame manifest JSON")->required()->check(CLI::ExistingFile);
  reconstruct->add_option("--out", volume_out, "Output base path (writes .json and .raw)")->required();
  recon_flags.add_to(reconstruct);

  auto* stitch_cmd = app.add_subcommand("stitch", "Compose histology fragments into one image");
  std::vector<std::string> fragments;
  std::string plan;
  std::string stitch_out;
  stitch_cmd->add_option("--fragments", fragments, "Fragment PNGs in plan order")
      ->required()->delimiter(',');
  stitch_cmd->add_option("--plan", plan, "Stitch plan JSON")->required()->check(CLI::ExistingFile);
  stitch_cmd->add_option("--out", stitch_out, "Output PNG")->required();

  auto* reg = app.add_subcommand("register", "Register one histology slice to one micro-US slice");
  std::string fixed, moving, fixed_mask, moving_mask, moving_labels, reg_out;
  RegistrationFlags reg_flags;
  reg->add_option("--fixed", fixed, "Fixed (micro-US) PNG")->required()->check(CLI::ExistingFile);
  reg->add_option("--moving", moving, "Moving (histology) PNG")->required()->check(CLI::ExistingFile);
  reg->add_option("--fixed-mask", fixed_mask, "Fixed prostate mask PNG")->required()->check(CLI::ExistingFile);
  reg->add_option("--moving-mask", moving_mask, "Moving prostate mask PNG")->required()->check(CLI::ExistingFile);
  reg->add_option("--moving-labels", moving_labels, "Moving label PNG to warp")->check(CLI::ExistingFile);
  reg->add_option("--out-dir", reg_out, "Output directory")->required();
  reg_flags.add_to(reg);

  auto* metrics = app.add_subcommand("metrics", "Recompute metrics from a registered case");
  std::string metrics_case;
  std::string metrics_out;
  bool directed = false;
  metrics->add_option("--case", metrics_case, "Case directory")->required()->check(CLI::ExistingDirectory);
  metrics->add_option("--out", metrics_out, "Output base path (writes .csv and .json)")->required();
  metrics->add_flag("--directed", directed, "Also report both directed Hausdorff distances");

  auto* pipeline = app.add_subcommand("pipeline", "Case pipeline");
  pipeline->require_subcommand(1);
  auto* run = pipeline->add_subcommand("run", "Reconstruct, register and score a case");
  std::string run_case_dir;
  RegistrationFlags run_reg_flags;
  ReconstructFlags run_recon_flags;
  bool rebuild = false;
  double opacity = 0.5;
  run->add_option("--case", run_case_dir, "Case directory")->required()->check(CLI::ExistingDirectory);
  run->add_flag("--rebuild-volume", rebuild, "Reconstruct even if a volume exists");
  run->add_option("--overlay-opacity", opacity, "Overlay opacity in [0,1]")
      ->check(CLI::Range(0.0, 1.0))->capture_default_str();
  run_reg_flags.add_to(run);
  run_recon_flags.add_to(run);

  auto* phantom = app.add_subcommand("phantom", "Generate a synthetic case");
  std::string phantom_out;
  PhantomSpec spec;
  phantom->add_option("--out", phantom_out, "Case directory to create")->required();
  phantom->add_option("--seed", spec.seed, "Random seed")->capture_default_str();
  phantom->add_option("--warp-amplitude", spec.warp_amplitude_mm, "Max histology warp (mm)")
      ->capture_default_str();
  phantom->add_option("--noise-sigma", spec.noise_sigma, "Histology noise sigma")->capture_default_str();
  phantom->add_option("--angle-count", spec.angle_count, "Fan frames in the sweep")->capture_default_str();
  phantom->add_option("--lesions", spec.lesion_count, "Lesion count")->capture_default_str();

  auto* serve_cmd = app.add_subcommand("serve", "Serve the case HTTP API");
  std::string serve_root;
  ServeOptions serve_opts;
  std::string static_dir;
  serve_cmd->add_option("--root", serve_root, "Directory of cases")->required()->check(CLI::ExistingDirectory);
  serve_cmd->add_option("--port", serve_opts.port, "TCP port")->capture_default_str();
  serve_cmd->add_option("--host", serve_opts.host, "Bind address")->capture_default_str();
  serve_cmd->add_option("--static", static_dir, "Static files served at /")->check(CLI::ExistingDirectory);
  RegistrationFlags serve_reg_flags;
  serve_reg_flags.add_to(serve_cmd);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*reconstruct) return cmd_reconstruct(manifest, volume_out, recon_flags);
    if (*stitch_cmd) return cmd_stitch(fragments, plan, stitch_out);
    if (*reg) {
      return cmd_register(fixed, moving, fixed_mask, moving_mask, moving_labels, reg_out,
                          reg_flags.resolve());
    }
    if (*metrics) return cmd_metrics(metrics_case, metrics_out, directed);
    if (*run) {
      return cmd_pipeline_run(run_case_dir, run_reg_flags.resolve(), run_recon_flags, rebuild, opacity);
    }
    if (*phantom) {
      const CaseLayout layout = generate_phantom(spec, phantom_out);
      std::printf("phantom case written to %s (%d histology slices)\n",
                  layout.root().string().c_str(), layout.histology_count());
      return 0;
    }
    if (*serve_cmd) {
      if (!static_dir.empty()) serve_opts.static_dir = static_dir;
      serve_opts.pipeline.registration = serve_reg_flags.resolve();
      std::printf("serving %s on http://%s:%d\n", serve_root.c_str(), serve_opts.host.c_str(),
                  serve_opts.port);
      std::fflush(stdout);
      serve(serve_root, serve_opts.port, serve_opts);
      return 0;
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
