#include <doctest.h>

#include <cmath>
#include <vector>

#include "rsfuse/error.hpp"
#include "rsfuse/metrics.hpp"
#include "rsfuse/synth.hpp"

using namespace rsfuse;

namespace {

SynthSpec base_spec() {
  SynthSpec spec;
  spec.intrinsics = {220, 220, 80, 64, 160, 128};
  spec.rolling_shutter.patch_count = 4;
  spec.trajectory.push_back({1.0, Vec3::Zero()});
  spec.seed = 101;
  return spec;
}

}  // namespace

TEST_CASE("spec validation rejects inconsistent inputs") {
  SynthSpec spec = base_spec();
  CHECK_NOTHROW(spec.validate());

  spec.trajectory.clear();
  CHECK_THROWS_AS(spec.validate(), Error);

  spec = base_spec();
  spec.gyro_rate_hz = 50.0;  // below 2x the 30 Hz frame rate
  CHECK_THROWS_AS(spec.validate(), Error);

  spec = base_spec();
  spec.plane_depth = 0.0;
  CHECK_THROWS_AS(spec.validate(), Error);

  spec = base_spec();
  spec.foreground = true;
  spec.fg_size = Vec2(0, 10);
  CHECK_THROWS_AS(spec.validate(), Error);
}

TEST_CASE("zero trajectory yields identical frames and zero ground truth") {
  const SynthProject proj = synth_sequence(base_spec());
  REQUIRE(proj.images.size() == 2);
  CHECK((proj.images[0] - proj.images[1]).cwiseAbs().maxCoeff() == 0.0);
  CHECK(proj.gt_flow[0].u.cwiseAbs().maxCoeff() == 0.0);
  CHECK(proj.gt_flow[0].v.cwiseAbs().maxCoeff() == 0.0);
  for (const auto& s : proj.gyro.samples) CHECK(s.omega.norm() == 0.0);
}

TEST_CASE("constant z rotation with global shutter matches the closed form") {
  SynthSpec spec = base_spec();
  spec.trajectory[0].omega = Vec3(0, 0, 0.5);
  spec.rolling_shutter.readout_fraction = 1e-9;
  const SynthProject proj = synth_sequence(spec);

  const std::int64_t ta = synth_frame_timestamp(spec, 0);
  const std::int64_t tb = synth_frame_timestamp(spec, 1);
  const Mat3 r = rodrigues(Vec3(0, 0, 0.5 * (tb - ta) * 1e-9));
  const FlowField oracle = homography_to_field(
      rotation_homography(spec.intrinsics, r), spec.intrinsics.width,
      spec.intrinsics.height);
  CHECK((proj.gt_flow[0].u - oracle.u).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((proj.gt_flow[0].v - oracle.v).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("foreground rectangle carries its own velocity in the ground truth") {
  SynthSpec spec = base_spec();
  spec.foreground = true;
  spec.fg_velocity = Vec2(4, 0);
  spec.fg_position = Vec2(40, 30);
  spec.fg_size = Vec2(32, 24);
  const SynthProject proj = synth_sequence(spec);
  const FlowField& f = proj.gt_flow[0];
  for (int y = 0; y < spec.intrinsics.height; ++y)
    for (int x = 0; x < spec.intrinsics.width; ++x) {
      const bool in = x >= 40 && x < 72 && y >= 30 && y < 54;
      CHECK(f.u(y, x) == (in ? 4.0 : 0.0));
      CHECK(f.v(y, x) == 0.0);
    }
}

TEST_CASE("per_row_exact_field degenerates to one homography at global shutter") {
  SynthSpec spec = base_spec();
  spec.trajectory[0].omega = Vec3(0.1, -0.2, 0.3);
  spec.rolling_shutter.readout_fraction = 1e-12;
  const std::int64_t ta = synth_frame_timestamp(spec, 0);
  const std::int64_t tb = synth_frame_timestamp(spec, 1);
  const FlowField f = per_row_exact_field(spec, ta, tb);
  const Mat3 rel = view_rotation(spec, tb * 1e-9) *
                   view_rotation(spec, ta * 1e-9).transpose();
  const FlowField single = homography_to_field(
      rotation_homography(spec.intrinsics, rel), spec.intrinsics.width,
      spec.intrinsics.height);
  CHECK((f.u - single.u).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((f.v - single.v).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("per_row_exact_field of a static trajectory is zero") {
  SynthSpec spec = base_spec();
  const FlowField f = per_row_exact_field(spec, synth_frame_timestamp(spec, 0),
                                          synth_frame_timestamp(spec, 1));
  CHECK(f.u.cwiseAbs().maxCoeff() == 0.0);
  CHECK(f.v.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("identical specs render byte-identical projects") {
  SynthSpec spec = base_spec();
  spec.trajectory[0].omega = Vec3(0.05, 0.1, 0.3);
  spec.gyro_noise_sigma = 0.002;
  spec.image_noise_sigma = 0.01;
  const SynthProject a = synth_sequence(spec);
  const SynthProject b = synth_sequence(spec);
  for (std::size_t i = 0; i < a.images.size(); ++i)
    CHECK((a.images[i] - b.images[i]).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(a.gyro.samples.size() == b.gyro.samples.size());
  for (std::size_t i = 0; i < a.gyro.samples.size(); ++i)
    CHECK((a.gyro.samples[i].omega - b.gyro.samples[i].omega).norm() == 0.0);
  CHECK((a.gt_flow[0].u - b.gt_flow[0].u).cwiseAbs().maxCoeff() == 0.0);

  SynthSpec other = spec;
  other.seed = 102;
  const SynthProject c = synth_sequence(other);
  CHECK((a.images[0] - c.images[0]).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("noise-free gyro log integrates back to the trajectory rotation") {
  SynthSpec spec = base_spec();
  // fixed axis, varying magnitude: relative rotation has a closed form
  spec.trajectory.clear();
  spec.trajectory.push_back({0.04, Vec3(0, 0, 0.2)});
  spec.trajectory.push_back({0.05, Vec3(0, 0, -0.4)});
  spec.trajectory.push_back({1.0, Vec3(0, 0, 0.6)});
  spec.gyro_rate_hz = 1000.0;
  const SynthProject proj = synth_sequence(spec);
  const std::int64_t ta = synth_frame_timestamp(spec, 0);
  const std::int64_t tb = synth_frame_timestamp(spec, 1);
  const Mat3 integrated = integrate_gyro(proj.gyro.samples, ta, tb);
  const Mat3 expected = view_rotation(spec, tb * 1e-9) *
                        view_rotation(spec, ta * 1e-9).transpose();
  CHECK((integrated - expected).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("ground-truth flow and homography array agree without translation") {
  SynthSpec spec = base_spec();
  spec.trajectory[0].omega = Vec3(0, 0, 0.4);
  spec.rolling_shutter.readout_fraction = 1e-9;  // global shutter
  const SynthProject proj = synth_sequence(spec);
  const FlowField from_arr = homography_array_to_field(
      proj.gt_homography[0], spec.intrinsics, spec.intrinsics.width,
      spec.intrinsics.height);
  CHECK((from_arr.u - proj.gt_flow[0].u).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((from_arr.v - proj.gt_flow[0].v).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("sparse ground-truth pairs sit on the dense flow") {
  SynthSpec spec = base_spec();
  spec.trajectory[0].omega = Vec3(0.1, 0.2, 0.3);
  const SynthProject proj = synth_sequence(spec);
  REQUIRE(!proj.gt_pairs[0].empty());
  for (const auto& c : proj.gt_pairs[0]) {
    const int x = static_cast<int>(c.p.x()), y = static_cast<int>(c.p.y());
    CHECK(c.q.x() == doctest::Approx(x + proj.gt_flow[0].u(y, x)));
    CHECK(c.q.y() == doctest::Approx(y + proj.gt_flow[0].v(y, x)));
  }
}

TEST_CASE("a foreground that exits the frame is reported as a warning") {
  SynthSpec spec = base_spec();
  spec.frame_count = 3;
  spec.foreground = true;
  spec.fg_position = Vec2(150, 30);
  spec.fg_size = Vec2(8, 8);
  spec.fg_velocity = Vec2(60, 0);
  const SynthProject proj = synth_sequence(spec);
  CHECK(!proj.warnings.empty());
}

TEST_CASE("synth spec file round trip") {
  SynthSpec spec = base_spec();
  spec.trajectory[0].omega = Vec3(0.1, -0.2, 0.3);
  spec.foreground = true;
  spec.fg_velocity = Vec2(4, 1);
  spec.fg_position = Vec2(10, 20);
  spec.fg_size = Vec2(30, 25);
  spec.translation_per_s = Vec3(0.01, 0, 0);
  const std::string text = write_synth_spec(spec);
  CHECK(write_synth_spec(read_synth_spec(text)) == text);
  CHECK_THROWS_AS(read_synth_spec("{\"frames\": 1}"), Error);
}

TEST_CASE("procedural texture is seeded and band-limited") {
  double min_v = 1e9, max_v = -1e9;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      const double v = procedural_texture(x, y, 7);
      min_v = std::min(min_v, v);
      max_v = std::max(max_v, v);
      CHECK(v == procedural_texture(x, y, 7));
    }
  CHECK(min_v >= 0.0);
  CHECK(max_v <= 1.0);
  CHECK(max_v - min_v > 0.1);  // actually textured
  CHECK(procedural_texture(5.5, 9.25, 7) != procedural_texture(5.5, 9.25, 8));
}
