#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rsfuse/gyro_field.hpp"
#include "rsfuse/homography_fit.hpp"
#include "rsfuse/io.hpp"
#include "rsfuse/types.hpp"

namespace rsfuse {

/// Synthetic scene description. The seed fixes all randomness.
struct SynthSpec {
  CameraIntrinsics intrinsics;
  RollingShutterModel rolling_shutter;

  /// Piecewise-constant angular-velocity trajectory (body rates, camera axes).
  struct Segment {
    double duration_s = 1.0;
    Vec3 omega = Vec3::Zero();
  };
  std::vector<Segment> trajectory;

  double frame_rate_hz = 30.0;
  int frame_count = 2;
  double gyro_rate_hz = 200.0;
  double gyro_noise_sigma = 0.0;   // rad/s per axis
  double image_noise_sigma = 0.0;  // intensity units, images in [0,1]

  /// Camera translation of a textured background plane at known depth.
  Vec3 translation_per_s = Vec3::Zero();
  double plane_depth = 1.0;

  /// Optional moving foreground rectangle, pasted in screen space.
  bool foreground = false;
  Vec2 fg_velocity = Vec2::Zero();  // px/frame
  Vec2 fg_position = Vec2::Zero();  // top-left in frame 0, px
  Vec2 fg_size = Vec2::Zero();      // px

  std::uint64_t seed = 1;

  void validate() const;
};

struct SynthProject {
  std::vector<Grid> images;
  GyroLog gyro;
  FrameIndex frames;
  std::vector<FlowField> gt_flow;                       // per consecutive pair
  std::vector<std::vector<Correspondence>> gt_pairs;    // per consecutive pair
  std::vector<HomographyArray> gt_homography;           // per consecutive pair
  std::vector<std::string> warnings;
};

/// Rendering rotation at time t (R(0) = I), composed exactly from the
/// piecewise-constant trajectory in time order.
Mat3 view_rotation(const SynthSpec& spec, double t_s);

/// Background homography mapping frame-0 pixels into the view at time t,
/// including the plane-induced translation term.
Homography background_homography(const SynthSpec& spec, double t_s);

/// Renders the sequence and its exact ground truth.
SynthProject synth_sequence(const SynthSpec& spec);

/// Rotation-only field with the per-patch model evaluated at every scanline's
/// exact exposure time: no patch grouping, no slerp.
FlowField per_row_exact_field(const SynthSpec& spec, std::int64_t t_a,
                              std::int64_t t_b);

/// Seeded band-limited value noise in roughly [0.1, 0.9].
double procedural_texture(double x, double y, std::uint64_t seed);

/// Frame timestamps used by synth_sequence: frame f at (f + 1) * period.
std::int64_t synth_frame_timestamp(const SynthSpec& spec, int frame);

SynthSpec read_synth_spec(const std::string& text);
std::string write_synth_spec(const SynthSpec& spec);

}  // namespace rsfuse
