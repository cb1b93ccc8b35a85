#pragma once

#include <span>
#include <vector>

#include "rsfuse/types.hpp"

namespace rsfuse {

/// Signed permutation mapping device gyro axes into camera axes
/// (x right, y down, z forward). Identity by default.
using AxisRemap = Mat3;

bool is_signed_permutation(const Mat3& m, double tol = 1e-12);

/// Skew-symmetric matrix of v.
Mat3 skew(const Vec3& v);

/// Exponential map so(3) -> SO(3). Small angles use the Taylor series of the
/// sin/(1-cos) coefficients, so the zero vector maps to identity exactly.
Mat3 rodrigues(const Vec3& axis_angle);

/// Checks R^T R = I and det = +1 within tol.
bool is_rotation(const Mat3& r, double tol = 1e-9);

/// Rotation matrix -> unit quaternion, canonicalized so w >= 0.
/// Throws on inputs that fail the orthonormality check.
Quat rotation_to_quaternion(const Mat3& r, double tol = 1e-6);

/// Unit quaternion -> rotation matrix. Throws if |norm - 1| > 1e-6.
Mat3 quaternion_to_rotation(const Quat& q);

/// Shortest-arc spherical linear interpolation at constant angular velocity.
/// Near-identical inputs fall back to normalized linear interpolation.
Quat slerp(const Quat& q0, const Quat& q1, double t);

/// Relative rotation R(t_end) * R^T(t_start) accumulated from gyro samples by
/// per-interval axis-angle composition (body-frame rates right-multiply in
/// time order). Interior sample intervals use the left sample value; the two
/// boundary partial intervals use omega linearly interpolated at the interval
/// midpoint. Samples must bracket [t_start, t_end].
Mat3 integrate_gyro(std::span<const GyroSample> samples, std::int64_t t_start,
                    std::int64_t t_end,
                    const AxisRemap& remap = AxisRemap::Identity());

/// Throws unless samples have strictly increasing timestamps >= 0 and finite
/// angular velocities.
void validate_samples(std::span<const GyroSample> samples);

}  // namespace rsfuse
