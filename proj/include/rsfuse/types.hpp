#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cstdint>

namespace rsfuse {

// Dense scalar grid. Row index = image y (top to bottom), column index = image x.
using Grid = Eigen::ArrayXXd;
using MaskGrid = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

/// One angular-velocity reading. Timestamps are integer nanoseconds on a
/// monotone clock; omega is rad/s in device axes.
struct GyroSample {
  std::int64_t timestamp_ns = 0;
  Vec3 omega = Vec3::Zero();
};

/// Pinhole intrinsics, zero skew. Pixel centers sit at integer coordinates,
/// origin top-left, x right, y down.
struct CameraIntrinsics {
  double fx = 0, fy = 0;
  double cx = 0, cy = 0;
  int width = 0, height = 0;

  Mat3 matrix() const {
    Mat3 k;
    k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
    return k;
  }
  Mat3 inverse_matrix() const {
    Mat3 k;
    k << 1.0 / fx, 0, -cx / fx, 0, 1.0 / fy, -cy / fy, 0, 0, 1;
    return k;
  }
  void validate() const;
};

/// Dense 2-channel displacement grid, in pixels, from frame a toward frame b
/// at each pixel of frame a (forward flow).
struct FlowField {
  Grid u, v;

  FlowField() = default;
  FlowField(int width, int height)
      : u(Grid::Zero(height, width)), v(Grid::Zero(height, width)) {}

  int width() const { return static_cast<int>(u.cols()); }
  int height() const { return static_cast<int>(u.rows()); }
};

struct RgbImage {
  Grid r, g, b;
  int width() const { return static_cast<int>(r.cols()); }
  int height() const { return static_cast<int>(r.rows()); }
};

}  // namespace rsfuse
