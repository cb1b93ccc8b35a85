#include "rsfuse/core_math.hpp"

#include <algorithm>
#include <cmath>

#include "rsfuse/error.hpp"

namespace rsfuse {

void CameraIntrinsics::validate() const {
  if (!(fx > 0) || !(fy > 0))
    throw_validation("intrinsics: fx and fy must be positive");
  if (width <= 0 || height <= 0)
    throw_validation("intrinsics: width and height must be positive");
  if (!(cx >= 0 && cx < width))
    throw_validation("intrinsics: cx must lie in [0, width)");
  if (!(cy >= 0 && cy < height))
    throw_validation("intrinsics: cy must lie in [0, height)");
}

bool is_signed_permutation(const Mat3& m, double tol) {
  for (int i = 0; i < 3; ++i) {
    int row_nz = 0, col_nz = 0;
    for (int j = 0; j < 3; ++j) {
      double r = m(i, j), c = m(j, i);
      if (std::abs(r) > tol) {
        if (std::abs(std::abs(r) - 1.0) > tol) return false;
        ++row_nz;
      }
      if (std::abs(c) > tol) ++col_nz;
    }
    if (row_nz != 1 || col_nz != 1) return false;
  }
  return true;
}

Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return s;
}

Mat3 rodrigues(const Vec3& axis_angle) {
  if (!axis_angle.allFinite())
    throw_validation("rodrigues: non-finite axis-angle");
  const double theta2 = axis_angle.squaredNorm();
  double a, b;  // R = I + a*[v]x + b*[v]x^2
  if (theta2 < 1e-16) {
    a = 1.0 - theta2 / 6.0;
    b = 0.5 - theta2 / 24.0;
  } else {
    const double theta = std::sqrt(theta2);
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta2;
  }
  const Mat3 k = skew(axis_angle);
  return Mat3::Identity() + a * k + b * (k * k);
}

bool is_rotation(const Mat3& r, double tol) {
  if (!r.allFinite()) return false;
  if ((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() > tol)
    return false;
  return std::abs(r.determinant() - 1.0) <= tol;
}

Quat rotation_to_quaternion(const Mat3& r, double tol) {
  if (!is_rotation(r, tol))
    throw_numerical("rotation_to_quaternion: matrix is not a rotation");
  Quat q(r);
  if (q.w() < 0) q.coeffs() = -q.coeffs();
  q.normalize();
  return q;
}

Mat3 quaternion_to_rotation(const Quat& q) {
  if (std::abs(q.norm() - 1.0) > 1e-6)
    throw_numerical("quaternion_to_rotation: quaternion is not unit norm");
  return q.normalized().toRotationMatrix();
}

Quat slerp(const Quat& q0, const Quat& q1, double t) {
  if (t < 0.0 || t > 1.0) throw_validation("slerp: t must lie in [0, 1]");
  double d = q0.dot(q1);
  Quat q1s = q1;
  if (d < 0) {  // shortest arc
    q1s.coeffs() = -q1s.coeffs();
    d = -d;
  }
  d = std::min(d, 1.0);
  const double omega = std::acos(d);
  double w0, w1;
  if (omega < 1e-8) {  // nlerp fallback
    w0 = 1.0 - t;
    w1 = t;
  } else {
    const double s = std::sin(omega);
    w0 = std::sin((1.0 - t) * omega) / s;
    w1 = std::sin(t * omega) / s;
  }
  Quat out;
  out.coeffs() = w0 * q0.coeffs() + w1 * q1s.coeffs();
  out.normalize();
  return out;
}

void validate_samples(std::span<const GyroSample> samples) {
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].timestamp_ns < 0)
      throw_validation("gyro samples: negative timestamp");
    if (!samples[i].omega.allFinite())
      throw_validation("gyro samples: non-finite angular velocity");
    if (i > 0 && samples[i].timestamp_ns <= samples[i - 1].timestamp_ns)
      throw_validation("gyro samples: timestamps must be strictly increasing");
  }
}

namespace {

Vec3 lerp_omega(const GyroSample& s0, const GyroSample& s1, double t_ns) {
  const double span = static_cast<double>(s1.timestamp_ns - s0.timestamp_ns);
  const double f = (t_ns - static_cast<double>(s0.timestamp_ns)) / span;
  return (1.0 - f) * s0.omega + f * s1.omega;
}

}  // namespace

Mat3 integrate_gyro(std::span<const GyroSample> samples, std::int64_t t_start,
                    std::int64_t t_end, const AxisRemap& remap) {
  if (t_end < t_start)
    throw_validation("integrate_gyro: t_end must be >= t_start");
  if (!is_signed_permutation(remap))
    throw_validation("integrate_gyro: axis remap is not a signed permutation");
  if (t_start == t_end) return Mat3::Identity();
  if (samples.size() < 2 || samples.front().timestamp_ns > t_start ||
      samples.back().timestamp_ns < t_end)
    throw_validation("integrate_gyro: samples do not bracket the interval");

  Mat3 r = Mat3::Identity();
  for (std::size_t k = 0; k + 1 < samples.size(); ++k) {
    const std::int64_t ta = samples[k].timestamp_ns;
    const std::int64_t tb = samples[k + 1].timestamp_ns;
    const std::int64_t a = std::max(ta, t_start);
    const std::int64_t b = std::min(tb, t_end);
    if (b <= a) continue;
    const bool partial = (a != ta) || (b != tb);
    const Vec3 omega =
        partial ? lerp_omega(samples[k], samples[k + 1], 0.5 * (a + b))
                : samples[k].omega;
    const double dt = static_cast<double>(b - a) * 1e-9;
    r = r * rodrigues(remap * omega * dt);
  }
  return r;
}

}  // namespace rsfuse
