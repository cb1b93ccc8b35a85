#include "rsfuse/synth.hpp"

#include <cmath>
#include <random>

#include <json.hpp>

#include "rsfuse/error.hpp"

namespace rsfuse {

void SynthSpec::validate() const {
  intrinsics.validate();
  rolling_shutter.validate();
  if (trajectory.empty()) throw_validation("synth: trajectory must not be empty");
  for (const auto& s : trajectory) {
    if (!(s.duration_s > 0)) throw_validation("synth: segment duration must be > 0");
    if (!s.omega.allFinite()) throw_validation("synth: non-finite omega");
  }
  if (!(frame_rate_hz > 0)) throw_validation("synth: frame_rate_hz must be > 0");
  if (frame_count < 1) throw_validation("synth: frame_count must be >= 1");
  if (!(gyro_rate_hz > 2.0 * frame_rate_hz))
    throw_validation("synth: gyro rate must exceed 2x the frame rate");
  if (gyro_noise_sigma < 0 || image_noise_sigma < 0)
    throw_validation("synth: noise sigmas must be >= 0");
  if (!(plane_depth > 0)) throw_validation("synth: plane_depth must be > 0");
  if (foreground && (fg_size.x() < 1 || fg_size.y() < 1))
    throw_validation("synth: foreground size must be >= 1 px");
}

Mat3 view_rotation(const SynthSpec& spec, double t_s) {
  // Composed in time order, matching the convention of integrate_gyro.
  Mat3 r = Mat3::Identity();
  double t0 = 0;
  for (const auto& seg : spec.trajectory) {
    if (t_s <= t0) break;
    const double dt = std::min(t_s - t0, seg.duration_s);
    r = r * rodrigues(seg.omega * dt);
    t0 += seg.duration_s;
  }
  if (t_s > t0) {
    // trajectory holds its last rate beyond the listed segments
    r = r * rodrigues(spec.trajectory.back().omega * (t_s - t0));
  }
  return r;
}

Vec3 omega_at(const SynthSpec& spec, double t_s) {
  double t0 = 0;
  for (const auto& seg : spec.trajectory) {
    if (t_s < t0 + seg.duration_s) return seg.omega;
    t0 += seg.duration_s;
  }
  return spec.trajectory.back().omega;
}

Homography background_homography(const SynthSpec& spec, double t_s) {
  const Mat3 r = view_rotation(spec, t_s);
  const Vec3 c = spec.translation_per_s * t_s;
  const Vec3 n(0, 0, 1);
  const Mat3 m = r * (Mat3::Identity() - c * n.transpose() / spec.plane_depth);
  return normalize_homography(spec.intrinsics.matrix() * m *
                              spec.intrinsics.inverse_matrix());
}

std::int64_t synth_frame_timestamp(const SynthSpec& spec, int frame) {
  const double period_ns = 1e9 / spec.frame_rate_hz;
  return static_cast<std::int64_t>(std::llround((frame + 1) * period_ns));
}

namespace {

std::uint64_t hash_mix(std::uint64_t x) {
  x ^= x >> 33;
  x *= 0xff51afd7ed558ccdULL;
  x ^= x >> 33;
  x *= 0xc4ceb9fe1a85ec53ULL;
  x ^= x >> 33;
  return x;
}

double lattice_value(std::int64_t ix, std::int64_t iy, std::uint64_t seed) {
  const std::uint64_t h = hash_mix(seed ^ hash_mix(static_cast<std::uint64_t>(ix) *
                                                   0x9e3779b97f4a7c15ULL +
                                               static_cast<std::uint64_t>(iy)));
  return static_cast<double>(h >> 11) * (1.0 / 9007199254740992.0);
}

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

double value_noise(double x, double y, std::uint64_t seed) {
  const double fx = std::floor(x), fy = std::floor(y);
  const std::int64_t ix = static_cast<std::int64_t>(fx);
  const std::int64_t iy = static_cast<std::int64_t>(fy);
  const double tx = smoothstep(x - fx);
  const double ty = smoothstep(y - fy);
  const double v00 = lattice_value(ix, iy, seed);
  const double v01 = lattice_value(ix + 1, iy, seed);
  const double v10 = lattice_value(ix, iy + 1, seed);
  const double v11 = lattice_value(ix + 1, iy + 1, seed);
  return (1 - ty) * ((1 - tx) * v00 + tx * v01) +
         ty * ((1 - tx) * v10 + tx * v11);
}

Vec2 project(const Homography& h, const Vec2& p) {
  const Vec3 r = h * Vec3(p.x(), p.y(), 1.0);
  if (std::abs(r.z()) < 1e-9)
    throw_numerical("synth: degenerate projection");
  return Vec2(r.x() / r.z(), r.y() / r.z());
}

double row_time_s(const SynthSpec& spec, std::int64_t t_frame, double row) {
  const double period_ns = 1e9 / spec.frame_rate_hz;
  return (static_cast<double>(t_frame) +
          spec.rolling_shutter.row_offset_ns(row, spec.intrinsics.height,
                                             period_ns)) *
         1e-9;
}

bool in_foreground(const SynthSpec& spec, int frame, double x, double y) {
  if (!spec.foreground) return false;
  const Vec2 pos = spec.fg_position + spec.fg_velocity * frame;
  return x >= pos.x() && x < pos.x() + spec.fg_size.x() && y >= pos.y() &&
         y < pos.y() + spec.fg_size.y();
}

}  // namespace

double procedural_texture(double x, double y, std::uint64_t seed) {
  // three octaves of value noise, normalized away from the [0,1] clamp
  double v = 0.55 * value_noise(x * 0.045, y * 0.045, seed) +
             0.30 * value_noise(x * 0.11, y * 0.11, seed ^ 0xa5a5a5a5ULL) +
             0.15 * value_noise(x * 0.27, y * 0.27, seed ^ 0x5a5a5a5aULL);
  return 0.1 + 0.8 * v;
}

SynthProject synth_sequence(const SynthSpec& spec) {
  spec.validate();
  const int w = spec.intrinsics.width, h = spec.intrinsics.height;
  const double period_ns = 1e9 / spec.frame_rate_hz;
  SynthProject out;

  // Gyro log: samples from t = 0 past the last frame's readout window.
  {
    const double t_end_s =
        (static_cast<double>(synth_frame_timestamp(spec, spec.frame_count - 1)) +
         2.0 * period_ns) *
        1e-9;
    const double dt = 1.0 / spec.gyro_rate_hz;
    std::mt19937_64 rng(hash_mix(spec.seed ^ 0x6779ULL));
    std::normal_distribution<double> noise(0.0, 1.0);
    const int count = static_cast<int>(std::ceil(t_end_s / dt)) + 1;
    for (int i = 0; i <= count; ++i) {
      GyroSample s;
      s.timestamp_ns = static_cast<std::int64_t>(std::llround(i * dt * 1e9));
      s.omega = omega_at(spec, i * dt);
      if (spec.gyro_noise_sigma > 0) {
        s.omega += spec.gyro_noise_sigma *
                   Vec3(noise(rng), noise(rng), noise(rng));
      }
      out.gyro.samples.push_back(s);
    }
  }

  // Frames.
  for (int f = 0; f < spec.frame_count; ++f) {
    const std::int64_t tf = synth_frame_timestamp(spec, f);
    Grid img(h, w);
    std::mt19937_64 rng(hash_mix(spec.seed ^ (0x1000ULL + f)));
    std::normal_distribution<double> noise(0.0, 1.0);
    const Vec2 fg_pos = spec.fg_position + spec.fg_velocity * f;
    for (int y = 0; y < h; ++y) {
      const double t_row = row_time_s(spec, tf, y);
      const Homography hb = background_homography(spec, t_row);
      const Homography hb_inv = hb.inverse();
      for (int x = 0; x < w; ++x) {
        double val;
        if (in_foreground(spec, f, x, y)) {
          const Vec2 local(x - fg_pos.x(), y - fg_pos.y());
          val = procedural_texture(local.x(), local.y(), spec.seed ^ 0xf9f9ULL);
        } else {
          const Vec2 tex = project(hb_inv, Vec2(x, y));
          val = procedural_texture(tex.x(), tex.y(), spec.seed);
        }
        if (spec.image_noise_sigma > 0) val += spec.image_noise_sigma * noise(rng);
        img(y, x) = std::min(std::max(val, 0.0), 1.0);
      }
    }
    out.images.push_back(std::move(img));
    FrameEntry e;
    e.id = f;
    e.timestamp_ns = tf;
    e.path = "frame_" + std::to_string(f) + ".pgm";
    out.frames.frames.push_back(e);
    if (spec.foreground) {
      const bool visible = fg_pos.x() + spec.fg_size.x() > 0 && fg_pos.x() < w &&
                           fg_pos.y() + spec.fg_size.y() > 0 && fg_pos.y() < h;
      if (!visible)
        out.warnings.push_back("foreground left the frame at frame " +
                               std::to_string(f));
    }
  }

  // Ground truth per consecutive pair.
  for (int f = 0; f + 1 < spec.frame_count; ++f) {
    const std::int64_t ta = synth_frame_timestamp(spec, f);
    const std::int64_t tb = synth_frame_timestamp(spec, f + 1);
    FlowField flow(w, h);
    for (int y = 0; y < h; ++y) {
      const Homography ha = background_homography(spec, row_time_s(spec, ta, y));
      const Homography ha_inv = ha.inverse();
      for (int x = 0; x < w; ++x) {
        if (in_foreground(spec, f, x, y)) {
          flow.u(y, x) = spec.fg_velocity.x();
          flow.v(y, x) = spec.fg_velocity.y();
          continue;
        }
        // target row's exposure time is implicit; a few fixed-point steps
        const Vec3 m = ha_inv * Vec3(x, y, 1.0);
        double ry = y;
        Vec2 q(x, y);
        for (int it = 0; it < 5; ++it) {
          const Homography hb =
              background_homography(spec, row_time_s(spec, tb, ry));
          const Vec3 r = hb * m;
          if (std::abs(r.z()) < 1e-9) throw_numerical("synth: degenerate GT");
          q = Vec2(r.x() / r.z(), r.y() / r.z());
          ry = std::min(std::max(q.y(), 0.0), static_cast<double>(h - 1));
        }
        flow.u(y, x) = q.x() - x;
        flow.v(y, x) = q.y() - y;
      }
    }

    // sparse GT pairs on a stride grid
    std::vector<Correspondence> pairs;
    const int stride = std::max(std::min(w, h) / 24, 1);
    for (int y = stride / 2; y < h; y += stride) {
      for (int x = stride / 2; x < w; x += stride) {
        Correspondence c;
        c.p = Vec2(x, y);
        c.q = Vec2(x + flow.u(y, x), y + flow.v(y, x));
        pairs.push_back(c);
      }
    }

    // GT homography array at patch-center exposure times (background model)
    HomographyArray arr;
    arr.width = w;
    arr.height = h;
    for (int n = 0; n < spec.rolling_shutter.patch_count; ++n) {
      const double center =
          (n + 0.5) * static_cast<double>(h) / spec.rolling_shutter.patch_count;
      const Homography h0 =
          background_homography(spec, row_time_s(spec, ta, center));
      const Homography h1 =
          background_homography(spec, row_time_s(spec, tb, center));
      arr.h.push_back(normalize_homography(h1 * h0.inverse()));
    }

    out.gt_flow.push_back(std::move(flow));
    out.gt_pairs.push_back(std::move(pairs));
    out.gt_homography.push_back(std::move(arr));
  }
  return out;
}

FlowField per_row_exact_field(const SynthSpec& spec, std::int64_t t_a,
                              std::int64_t t_b) {
  spec.validate();
  const int w = spec.intrinsics.width, h = spec.intrinsics.height;
  const Mat3 k = spec.intrinsics.matrix();
  const Mat3 kinv = spec.intrinsics.inverse_matrix();
  FlowField f(w, h);
  for (int y = 0; y < h; ++y) {
    const Mat3 ra = view_rotation(spec, row_time_s(spec, t_a, y));
    const Mat3 rb = view_rotation(spec, row_time_s(spec, t_b, y));
    const Homography hrow = normalize_homography(k * rb * ra.transpose() * kinv);
    for (int x = 0; x < w; ++x) {
      const Vec2 q = project(hrow, Vec2(x, y));
      f.u(y, x) = q.x() - x;
      f.v(y, x) = q.y() - y;
    }
  }
  return f;
}

// ---------------------------------------------------------------------------
// Spec file (JSON)

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, std::initializer_list<const char*> keys,
                    const char* path) {
  for (const auto& [key, _] : obj.items()) {
    bool known = false;
    for (const char* k : keys)
      if (key == k) known = true;
    if (!known)
      throw_validation(std::string("synth spec: unknown key '") + path + key +
                       "'");
  }
}

Vec3 vec3_from(const json& a, const char* what) {
  if (!a.is_array() || a.size() != 3 || !a[0].is_number() ||
      !a[1].is_number() || !a[2].is_number())
    throw_validation(std::string("synth spec: ") + what +
                     " must be an array of 3 numbers");
  return Vec3(a[0].get<double>(), a[1].get<double>(), a[2].get<double>());
}

Vec2 vec2_from(const json& a, const char* what) {
  if (!a.is_array() || a.size() != 2 || !a[0].is_number() || !a[1].is_number())
    throw_validation(std::string("synth spec: ") + what +
                     " must be an array of 2 numbers");
  return Vec2(a[0].get<double>(), a[1].get<double>());
}

}  // namespace

SynthSpec read_synth_spec(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw_validation("synth spec: malformed JSON");
  reject_unknown(j,
                 {"intrinsics", "rolling_shutter", "trajectory",
                  "frame_rate_hz", "frame_count", "gyro_rate_hz",
                  "gyro_noise_sigma", "image_noise_sigma", "translation_per_s",
                  "plane_depth", "foreground", "seed"},
                 "");
  SynthSpec spec;
  if (!j.contains("intrinsics"))
    throw_validation("synth spec: missing 'intrinsics'");
  {
    const json& k = j.at("intrinsics");
    reject_unknown(k, {"fx", "fy", "cx", "cy", "width", "height"},
                   "intrinsics.");
    for (const char* key : {"fx", "fy", "cx", "cy", "width", "height"})
      if (!k.contains(key) || !k.at(key).is_number())
        throw_validation(std::string("synth spec: bad 'intrinsics.") + key + "'");
    spec.intrinsics.fx = k.at("fx").get<double>();
    spec.intrinsics.fy = k.at("fy").get<double>();
    spec.intrinsics.cx = k.at("cx").get<double>();
    spec.intrinsics.cy = k.at("cy").get<double>();
    spec.intrinsics.width = k.at("width").get<int>();
    spec.intrinsics.height = k.at("height").get<int>();
  }
  if (j.contains("rolling_shutter")) {
    const json& r = j.at("rolling_shutter");
    reject_unknown(r, {"patch_count", "readout_fraction", "anchor"},
                   "rolling_shutter.");
    if (r.contains("patch_count"))
      spec.rolling_shutter.patch_count = r.at("patch_count").get<int>();
    if (r.contains("readout_fraction"))
      spec.rolling_shutter.readout_fraction =
          r.at("readout_fraction").get<double>();
    if (r.contains("anchor")) {
      const std::string a = r.at("anchor").get<std::string>();
      if (a == "center")
        spec.rolling_shutter.anchor = RollingShutterModel::Anchor::Center;
      else if (a == "start_of_exposure")
        spec.rolling_shutter.anchor =
            RollingShutterModel::Anchor::StartOfExposure;
      else
        throw_validation("synth spec: bad rolling_shutter.anchor");
    }
  }
  if (!j.contains("trajectory") || !j.at("trajectory").is_array() ||
      j.at("trajectory").empty())
    throw_validation("synth spec: 'trajectory' must be a non-empty array");
  for (const auto& seg : j.at("trajectory")) {
    reject_unknown(seg, {"duration_s", "omega"}, "trajectory[].");
    SynthSpec::Segment s;
    if (!seg.contains("duration_s") || !seg.at("duration_s").is_number())
      throw_validation("synth spec: segment needs duration_s");
    s.duration_s = seg.at("duration_s").get<double>();
    if (!seg.contains("omega"))
      throw_validation("synth spec: segment needs omega");
    s.omega = vec3_from(seg.at("omega"), "omega");
    spec.trajectory.push_back(s);
  }
  if (j.contains("frame_rate_hz"))
    spec.frame_rate_hz = j.at("frame_rate_hz").get<double>();
  if (j.contains("frame_count")) spec.frame_count = j.at("frame_count").get<int>();
  if (j.contains("gyro_rate_hz"))
    spec.gyro_rate_hz = j.at("gyro_rate_hz").get<double>();
  if (j.contains("gyro_noise_sigma"))
    spec.gyro_noise_sigma = j.at("gyro_noise_sigma").get<double>();
  if (j.contains("image_noise_sigma"))
    spec.image_noise_sigma = j.at("image_noise_sigma").get<double>();
  if (j.contains("translation_per_s"))
    spec.translation_per_s =
        vec3_from(j.at("translation_per_s"), "translation_per_s");
  if (j.contains("plane_depth"))
    spec.plane_depth = j.at("plane_depth").get<double>();
  if (j.contains("foreground")) {
    const json& fg = j.at("foreground");
    reject_unknown(fg, {"velocity", "position", "size"}, "foreground.");
    spec.foreground = true;
    if (fg.contains("velocity"))
      spec.fg_velocity = vec2_from(fg.at("velocity"), "foreground.velocity");
    if (fg.contains("position"))
      spec.fg_position = vec2_from(fg.at("position"), "foreground.position");
    if (fg.contains("size"))
      spec.fg_size = vec2_from(fg.at("size"), "foreground.size");
  }
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_unsigned() && !j.at("seed").is_number_integer())
      throw_validation("synth spec: seed must be an integer");
    spec.seed = j.at("seed").get<std::uint64_t>();
  }
  spec.validate();
  return spec;
}

std::string write_synth_spec(const SynthSpec& spec) {
  json j;
  j["intrinsics"] = {{"fx", spec.intrinsics.fx},
                     {"fy", spec.intrinsics.fy},
                     {"cx", spec.intrinsics.cx},
                     {"cy", spec.intrinsics.cy},
                     {"width", spec.intrinsics.width},
                     {"height", spec.intrinsics.height}};
  j["rolling_shutter"] = {
      {"patch_count", spec.rolling_shutter.patch_count},
      {"readout_fraction", spec.rolling_shutter.readout_fraction},
      {"anchor", spec.rolling_shutter.anchor ==
                         RollingShutterModel::Anchor::StartOfExposure
                     ? "start_of_exposure"
                     : "center"}};
  json traj = json::array();
  for (const auto& s : spec.trajectory)
    traj.push_back({{"duration_s", s.duration_s},
                    {"omega", {s.omega.x(), s.omega.y(), s.omega.z()}}});
  j["trajectory"] = traj;
  j["frame_rate_hz"] = spec.frame_rate_hz;
  j["frame_count"] = spec.frame_count;
  j["gyro_rate_hz"] = spec.gyro_rate_hz;
  j["gyro_noise_sigma"] = spec.gyro_noise_sigma;
  j["image_noise_sigma"] = spec.image_noise_sigma;
  j["translation_per_s"] = {spec.translation_per_s.x(),
                            spec.translation_per_s.y(),
                            spec.translation_per_s.z()};
  j["plane_depth"] = spec.plane_depth;
  if (spec.foreground) {
    j["foreground"] = {
        {"velocity", {spec.fg_velocity.x(), spec.fg_velocity.y()}},
        {"position", {spec.fg_position.x(), spec.fg_position.y()}},
        {"size", {spec.fg_size.x(), spec.fg_size.y()}}};
  }
  j["seed"] = spec.seed;
  return j.dump(2) + "\n";
}

}  // namespace rsfuse
