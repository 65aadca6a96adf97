#include "musreg/stitch.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "musreg/io.hpp"

#include "sampling.hpp"

namespace musreg {

Vec2 RigidTransform2D::apply(Vec2 p) const {
  const double t = deg_to_rad(rotation_deg);
  const double c = std::cos(t);
  const double s = std::sin(t);
  const double k = scale_or_one();
  return {k * (c * p.x - s * p.y) + translation_mm.x, k * (s * p.x + c * p.y) + translation_mm.y};
}

Vec2 RigidTransform2D::apply_inverse(Vec2 p) const {
  const double t = deg_to_rad(rotation_deg);
  const double c = std::cos(t);
  const double s = std::sin(t);
  const double k = scale_or_one();
  const Vec2 q = p - translation_mm;
  return {(c * q.x + s * q.y) / k, (-s * q.x + c * q.y) / k};
}

namespace {

Image2D flip_horizontal(const Image2D& in) {
  Image2D out(in.width(), in.height(), in.channels(), in.spacing());
  for (int r = 0; r < in.height(); ++r) {
    for (int c = 0; c < in.width(); ++c) {
      for (int ch = 0; ch < in.channels(); ++ch) {
        out.at(c, r, ch) = in.at(in.width() - 1 - c, r, ch);
      }
    }
  }
  return out;
}

// Exact counter-clockwise rotation by quarter_turns * 90 degrees.
Image2D rotate_quarter_turns(const Image2D& in, int quarter_turns) {
  const int w = in.width();
  const int h = in.height();
  const bool swap = quarter_turns % 2 == 1;
  const Vec2 sp = in.spacing();
  Image2D out(swap ? h : w, swap ? w : h, in.channels(), swap ? Vec2{sp.y, sp.x} : sp);
  for (int r = 0; r < out.height(); ++r) {
    for (int c = 0; c < out.width(); ++c) {
      int sc = c;
      int sr = r;
      switch (quarter_turns) {
        case 1: sc = w - 1 - r; sr = c; break;
        case 2: sc = w - 1 - c; sr = h - 1 - r; break;
        case 3: sc = r; sr = h - 1 - c; break;
        default: break;
      }
      for (int ch = 0; ch < in.channels(); ++ch) out.at(c, r, ch) = in.at(sc, sr, ch);
    }
  }
  return out;
}

Image2D rotate_bilinear(const Image2D& in, double angle_deg, double background) {
  const double t = deg_to_rad(angle_deg);
  const double cs = std::cos(t);
  const double sn = std::sin(t);
  const double step = std::min(in.spacing().x, in.spacing().y);
  const double half_w = 0.5 * (in.width() - 1) * in.spacing().x;
  const double half_h = 0.5 * (in.height() - 1) * in.spacing().y;
  const double out_half_w = std::abs(half_w * cs) + std::abs(half_h * sn);
  const double out_half_h = std::abs(half_w * sn) + std::abs(half_h * cs);
  const int out_w = static_cast<int>(std::ceil(2.0 * out_half_w / step - 1e-9)) + 1;
  const int out_h = static_cast<int>(std::ceil(2.0 * out_half_h / step - 1e-9)) + 1;

  Image2D out(out_w, out_h, in.channels(), {step, step}, background);
  const double ocx = 0.5 * (out_w - 1) * step;
  const double ocy = 0.5 * (out_h - 1) * step;
  for (int r = 0; r < out_h; ++r) {
    for (int c = 0; c < out_w; ++c) {
      // Screen-CCW rotation with y pointing down, inverted.
      const double qx = c * step - ocx;
      const double qy = r * step - ocy;
      const double px = qx * cs - qy * sn;
      const double py = qx * sn + qy * cs;
      const auto s = detail::bilinear_stencil((px + half_w) / in.spacing().x,
                                              (py + half_h) / in.spacing().y, in.width(),
                                              in.height());
      if (!s.inside) continue;
      for (int ch = 0; ch < in.channels(); ++ch) out.at(c, r, ch) = detail::bilinear(in, s, ch);
    }
  }
  return out;
}

}  // namespace

Image2D orient_fragment(const Fragment& fragment) {
  if (fragment.image.empty()) throw ValidationError("fragment image is empty");
  if (!std::isfinite(fragment.gross_rotation_deg)) {
    throw ValidationError("fragment rotation must be finite");
  }
  Image2D img = fragment.flip_horizontal ? flip_horizontal(fragment.image) : fragment.image;
  const double angle = fragment.gross_rotation_deg;
  const double turns = angle / 90.0;
  const double nearest = std::round(turns);
  if (std::abs(turns - nearest) < 1e-9) {
    const int quarter = static_cast<int>(((static_cast<long long>(nearest) % 4) + 4) % 4);
    return quarter == 0 ? img : rotate_quarter_turns(img, quarter);
  }
  return rotate_bilinear(img, angle, 1.0);
}

RigidTransform2D fit_rigid_landmarks(std::span<const LandmarkPair> pairs, bool allow_scale) {
  if (pairs.size() < 2) throw ValidationError("rigid landmark fit needs at least 2 pairs");
  Vec2 mean_m;
  Vec2 mean_f;
  for (const auto& p : pairs) {
    if (!std::isfinite(p.moving.x) || !std::isfinite(p.moving.y) || !std::isfinite(p.fixed.x) ||
        !std::isfinite(p.fixed.y)) {
      throw ValidationError("landmark coordinates must be finite");
    }
    mean_m += p.moving;
    mean_f += p.fixed;
  }
  const double n = static_cast<double>(pairs.size());
  mean_m *= 1.0 / n;
  mean_f *= 1.0 / n;

  double spread = 0.0;
  double a = 0.0;  // sum m.f
  double b = 0.0;  // sum m x f
  for (const auto& p : pairs) {
    const Vec2 m = p.moving - mean_m;
    const Vec2 f = p.fixed - mean_f;
    spread += dot(m, m);
    a += m.x * f.x + m.y * f.y;
    b += m.x * f.y - m.y * f.x;
  }
  double extent = 0.0;
  for (const auto& p : pairs) extent = std::max(extent, norm(p.moving));
  if (spread <= 1e-24 * std::max(1.0, extent * extent)) {
    throw DegenerateError("all moving landmarks coincide");
  }

  const double theta = std::atan2(b, a);
  RigidTransform2D t;
  t.rotation_deg = rad_to_deg(theta);
  double k = 1.0;
  if (allow_scale) {
    k = std::hypot(a, b) / spread;
    if (!(k > 0.0)) k = 1.0;
    t.scale = k;
  }
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  t.translation_mm = mean_f - Vec2{k * (c * mean_m.x - s * mean_m.y), k * (s * mean_m.x + c * mean_m.y)};
  return t;
}

double landmark_rms(const RigidTransform2D& t, std::span<const LandmarkPair> pairs) {
  if (pairs.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& p : pairs) {
    const Vec2 d = t.apply(p.moving) - p.fixed;
    sum += dot(d, d);
  }
  return std::sqrt(sum / static_cast<double>(pairs.size()));
}

Image2D compose_fragments(std::span<const Image2D> fragments,
                          std::span<const RigidTransform2D> transforms, const Canvas& canvas) {
  if (fragments.size() != transforms.size()) {
    throw ValidationError("one transform per fragment is required");
  }
  if (canvas.width_px <= 0 || canvas.height_px <= 0) {
    throw ValidationError("canvas dimensions must be positive");
  }
  int channels = 1;
  for (const Image2D& f : fragments) {
    if (f.empty()) throw ValidationError("fragment image is empty");
    channels = std::max(channels, f.channels());
  }
  for (const auto& t : transforms) {
    if (t.scale && !(*t.scale > 0.0)) throw ValidationError("transform scale must be > 0");
  }

  const double max_x = (canvas.width_px - 1) * canvas.spacing_mm.x;
  const double max_y = (canvas.height_px - 1) * canvas.spacing_mm.y;
  constexpr double kTol = 1e-6;
  for (std::size_t i = 0; i < fragments.size(); ++i) {
    const Vec2 e = fragments[i].extent_mm();
    for (Vec2 corner : {Vec2{0, 0}, Vec2{e.x, 0}, Vec2{0, e.y}, e}) {
      const Vec2 q = transforms[i].apply(corner);
      if (q.x < -kTol || q.y < -kTol || q.x > max_x + kTol || q.y > max_y + kTol) {
        throw ValidationError("fragment " + std::to_string(i) + " footprint exceeds the canvas");
      }
    }
  }

  Image2D out(canvas.width_px, canvas.height_px, channels, canvas.spacing_mm, canvas.background);
  for (int r = 0; r < canvas.height_px; ++r) {
    for (int c = 0; c < canvas.width_px; ++c) {
      const Vec2 p = out.physical(c, r);
      for (std::size_t i = 0; i < fragments.size(); ++i) {
        const Image2D& f = fragments[i];
        const Vec2 q = transforms[i].apply_inverse(p);
        const auto s = detail::bilinear_stencil(q.x / f.spacing().x, q.y / f.spacing().y,
                                                f.width(), f.height());
        if (!s.inside) continue;
        for (int ch = 0; ch < channels; ++ch) {
          out.at(c, r, ch) = detail::bilinear(f, s, f.channels() == 1 ? 0 : ch);
        }
        break;
      }
    }
  }
  return out;
}

std::string_view ink_side_name(InkSide side) {
  switch (side) {
    case InkSide::kLeftBlack: return "left-black";
    case InkSide::kRightBlue: return "right-blue";
    case InkSide::kNone: return "none";
  }
  return "none";
}

namespace {

using nlohmann::json;

Vec2 read_point(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw ValidationError(std::string(what) + " must be a [x, y] pair of numbers");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

InkSide parse_ink_side(const std::string& name) {
  for (InkSide s : {InkSide::kLeftBlack, InkSide::kRightBlue, InkSide::kNone}) {
    if (ink_side_name(s) == name) return s;
  }
  throw ValidationError("unknown ink_side '" + name + "'");
}

}  // namespace

StitchPlan stitch_plan_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("stitch plan is not valid JSON: ") + e.what());
  }
  StitchPlan plan;
  try {
    const json& c = j.at("canvas");
    plan.canvas.width_px = c.at("width_px").get<int>();
    plan.canvas.height_px = c.at("height_px").get<int>();
    if (c.contains("spacing_mm")) plan.canvas.spacing_mm = read_point(c["spacing_mm"], "canvas.spacing_mm");
    plan.canvas.background = c.value("background", 1.0);
    plan.allow_scale = j.value("allow_scale", false);
    for (const json& f : j.at("fragments")) {
      FragmentPlan fp;
      fp.flip_horizontal = f.value("flip_horizontal", false);
      fp.gross_rotation_deg = f.value("rotation_deg", 0.0);
      fp.ink_side = parse_ink_side(f.value("ink_side", std::string("none")));
      if (f.contains("transform")) {
        const json& t = f["transform"];
        RigidTransform2D rt;
        rt.rotation_deg = t.value("rotation_deg", 0.0);
        if (t.contains("translation_mm")) rt.translation_mm = read_point(t["translation_mm"], "translation_mm");
        if (t.contains("scale")) rt.scale = t["scale"].get<double>();
        fp.transform = rt;
      }
      if (f.contains("landmarks")) {
        for (const json& l : f["landmarks"]) {
          fp.landmarks.push_back({read_point(l.at("fragment_mm"), "fragment_mm"),
                                  read_point(l.at("canvas_mm"), "canvas_mm")});
        }
      }
      if (!fp.transform && fp.landmarks.size() < 2) {
        throw ValidationError("fragment " + std::to_string(plan.fragments.size()) +
                              " needs a transform or at least 2 landmarks");
      }
      plan.fragments.push_back(std::move(fp));
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed stitch plan: ") + e.what());
  }
  if (plan.canvas.width_px <= 0 || plan.canvas.height_px <= 0 ||
      !(plan.canvas.spacing_mm.x > 0.0) || !(plan.canvas.spacing_mm.y > 0.0)) {
    throw ValidationError("canvas size and spacing must be positive");
  }
  return plan;
}

StitchPlan load_stitch_plan(const std::filesystem::path& path) {
  return stitch_plan_from_json(read_text_file(path));
}

Image2D stitch(std::span<const Image2D> images, const StitchPlan& plan) {
  if (images.size() != plan.fragments.size()) {
    throw ValidationError("stitch plan lists " + std::to_string(plan.fragments.size()) +
                          " fragments but " + std::to_string(images.size()) + " images were given");
  }
  std::vector<Image2D> oriented;
  std::vector<RigidTransform2D> transforms;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const FragmentPlan& fp = plan.fragments[i];
    oriented.push_back(orient_fragment({images[i], fp.flip_horizontal, fp.gross_rotation_deg, fp.ink_side}));
    transforms.push_back(fp.transform ? *fp.transform : fit_rigid_landmarks(fp.landmarks, plan.allow_scale));
  }
  return compose_fragments(oriented, transforms, plan.canvas);
}

}  // namespace musreg
