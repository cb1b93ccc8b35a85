#include "rsfuse/gyro_field.hpp"

#include <cmath>
#include <string>

#include <Eigen/SVD>

#include "rsfuse/error.hpp"

namespace rsfuse {

Homography normalize_homography(const Mat3& h) {
  if (!h.allFinite()) throw_numerical("homography has non-finite entries");
  if (std::abs(h.determinant()) <= 1e-12)
    throw_numerical("homography is not invertible");
  if (std::abs(h(2, 2)) > 1e-12) return h / h(2, 2);
  return h;
}

void RollingShutterModel::validate() const {
  if (patch_count < 1)
    throw_validation("rolling shutter: patch_count must be >= 1");
  if (!(readout_fraction > 0.0) || readout_fraction > 1.0)
    throw_validation("rolling shutter: readout_fraction must lie in (0, 1]");
}

double RollingShutterModel::row_offset_ns(double row, int height,
                                          double frame_period_ns) const {
  double frac = row / static_cast<double>(height);
  if (anchor == Anchor::Center) frac -= 0.5;
  return readout_fraction * frame_period_ns * frac;
}

Homography rotation_homography(const CameraIntrinsics& k, const Mat3& r) {
  k.validate();
  if (!is_rotation(r, 1e-6))
    throw_numerical("rotation_homography: R is not a rotation");
  return normalize_homography(k.matrix() * r * k.inverse_matrix());
}

HomographyArray row_patch_homographies(const CameraIntrinsics& k,
                                       std::span<const GyroSample> samples,
                                       std::int64_t t_a, std::int64_t t_b,
                                       double frame_period_ns,
                                       const RollingShutterModel& rs,
                                       const AxisRemap& remap) {
  k.validate();
  rs.validate();
  HomographyArray arr;
  arr.width = k.width;
  arr.height = k.height;
  arr.h.reserve(rs.patch_count);
  for (int n = 0; n < rs.patch_count; ++n) {
    const double center = (n + 0.5) * static_cast<double>(k.height) /
                          static_cast<double>(rs.patch_count);
    const double off = rs.row_offset_ns(center, k.height, frame_period_ns);
    const std::int64_t pa = t_a + static_cast<std::int64_t>(std::llround(off));
    const std::int64_t pb = t_b + static_cast<std::int64_t>(std::llround(off));
    const Mat3 r = integrate_gyro(samples, std::min(pa, pb), std::max(pa, pb),
                                  remap);
    const Mat3 rel = (pb >= pa) ? r : Mat3(r.transpose());
    arr.h.push_back(rotation_homography(k, rel));
  }
  return arr;
}

namespace {

// K^-1 H K projected onto the nearest rotation; throws if the decomposition
// misses orthonormality by more than 1e-3.
Mat3 decompose_rotation(const Homography& h, const CameraIntrinsics& k) {
  Mat3 r = k.inverse_matrix() * h * k.matrix();
  const double s = std::cbrt(r.determinant());
  if (!(s > 0) || !std::isfinite(s))
    throw_numerical("smooth_homography_array: non-rotation homography");
  r /= s;
  if ((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-3)
    throw_numerical("smooth_homography_array: non-rotation homography");
  Eigen::JacobiSVD<Mat3> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 rot = svd.matrixU() * svd.matrixV().transpose();
  if (rot.determinant() < 0) {
    Mat3 d = Mat3::Identity();
    d(2, 2) = -1;
    rot = svd.matrixU() * d * svd.matrixV().transpose();
  }
  return rot;
}

}  // namespace

Homography smooth_homography_array(const HomographyArray& arr,
                                   const CameraIntrinsics& k, double row) {
  const int n = arr.patch_count();
  if (n == 0) throw_validation("smooth_homography_array: empty array");
  if (n == 1) return arr.h[0];
  if (row <= arr.patch_center(0)) return arr.h[0];
  if (row >= arr.patch_center(n - 1)) return arr.h[n - 1];
  const double patch_h = static_cast<double>(arr.height) / n;
  int lo = static_cast<int>((row - 0.5 * patch_h) / patch_h);
  lo = std::min(std::max(lo, 0), n - 2);
  const double c0 = arr.patch_center(lo);
  const double c1 = arr.patch_center(lo + 1);
  const double t = (row - c0) / (c1 - c0);
  const Quat q0 = rotation_to_quaternion(decompose_rotation(arr.h[lo], k));
  const Quat q1 = rotation_to_quaternion(decompose_rotation(arr.h[lo + 1], k));
  return rotation_homography(k, quaternion_to_rotation(slerp(q0, q1, t)));
}

namespace {

void apply_homography_row(const Homography& h, int y, FlowField& f) {
  const int w = f.width();
  for (int x = 0; x < w; ++x) {
    const double wc = h(2, 0) * x + h(2, 1) * y + h(2, 2);
    if (std::abs(wc) < 1e-9)
      throw_numerical("degenerate projection at pixel (" + std::to_string(x) +
                      ", " + std::to_string(y) + ")");
    f.u(y, x) = (h(0, 0) * x + h(0, 1) * y + h(0, 2)) / wc - x;
    f.v(y, x) = (h(1, 0) * x + h(1, 1) * y + h(1, 2)) / wc - y;
  }
}

}  // namespace

namespace {

bool decomposes_as_rotations(const HomographyArray& arr,
                             const CameraIntrinsics& k, double tol) {
  for (const auto& h : arr.h) {
    Mat3 r = k.inverse_matrix() * h * k.matrix();
    const double s = std::cbrt(r.determinant());
    if (!(s > 0) || !std::isfinite(s)) return false;
    r /= s;
    if ((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() > tol)
      return false;
  }
  return true;
}

// Per-row blend of the homography parameters between the two bracketing
// patch centers. Used for arrays that are not rotation-only (e.g. fitted
// arrays carrying translation), where the quaternion path does not apply.
Homography blend_linear(const HomographyArray& arr, double row) {
  const int n = arr.patch_count();
  if (row <= arr.patch_center(0)) return arr.h[0];
  if (row >= arr.patch_center(n - 1)) return arr.h[n - 1];
  const double patch_h = static_cast<double>(arr.height) / n;
  int lo = static_cast<int>((row - 0.5 * patch_h) / patch_h);
  lo = std::min(std::max(lo, 0), n - 2);
  const double c0 = arr.patch_center(lo);
  const double t = (row - c0) / (arr.patch_center(lo + 1) - c0);
  const Mat3 h0 = normalize_homography(arr.h[lo]);
  const Mat3 h1 = normalize_homography(arr.h[lo + 1]);
  return (1.0 - t) * h0 + t * h1;
}

}  // namespace

FlowField homography_array_to_field(const HomographyArray& arr,
                                    const CameraIntrinsics& k, int width,
                                    int height) {
  const int n = arr.patch_count();
  if (n == 0) throw_validation("homography_array_to_field: empty array");
  FlowField f(width, height);
  if (n == 1) {
    for (int y = 0; y < height; ++y) apply_homography_row(arr.h[0], y, f);
    return f;
  }
  if (decomposes_as_rotations(arr, k, 1e-6)) {
    // Rotation-only array: per-row slerp of the patch orientations.
    std::vector<Quat> quats(n);
    for (int i = 0; i < n; ++i)
      quats[i] = rotation_to_quaternion(decompose_rotation(arr.h[i], k));
    const Mat3 km = k.matrix();
    const Mat3 kinv = k.inverse_matrix();
    for (int y = 0; y < height; ++y) {
      const double row = static_cast<double>(y);
      Homography h;
      if (row <= arr.patch_center(0)) {
        h = arr.h[0];
      } else if (row >= arr.patch_center(n - 1)) {
        h = arr.h[n - 1];
      } else {
        const double patch_h = static_cast<double>(arr.height) / n;
        int lo = static_cast<int>((row - 0.5 * patch_h) / patch_h);
        lo = std::min(std::max(lo, 0), n - 2);
        const double c0 = arr.patch_center(lo);
        const double t = (row - c0) / (arr.patch_center(lo + 1) - c0);
        const Quat q = slerp(quats[lo], quats[lo + 1], t);
        h = normalize_homography(km * quaternion_to_rotation(q) * kinv);
      }
      apply_homography_row(h, y, f);
    }
    return f;
  }
  for (int y = 0; y < height; ++y)
    apply_homography_row(blend_linear(arr, static_cast<double>(y)), y, f);
  return f;
}

FlowField homography_to_field(const Homography& h, int width, int height) {
  FlowField f(width, height);
  for (int y = 0; y < height; ++y) apply_homography_row(h, y, f);
  return f;
}

FlowField downscale_field(const FlowField& f, int factor) {
  if (factor < 1 || (factor & (factor - 1)) != 0)
    throw_validation("downscale_field: factor must be a power of two");
  if (f.width() % factor != 0 || f.height() % factor != 0)
    throw_validation("downscale_field: factor must divide the dimensions");
  if (factor == 1) return f;
  const int w = f.width() / factor, h = f.height() / factor;
  FlowField out(w, h);
  const double inv = 1.0 / (static_cast<double>(factor) * factor);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double su = f.u.block(y * factor, x * factor, factor, factor).sum();
      const double sv = f.v.block(y * factor, x * factor, factor, factor).sum();
      out.u(y, x) = su * inv / factor;
      out.v(y, x) = sv * inv / factor;
    }
  }
  return out;
}

FlowField upsample_field_2x(const FlowField& f) {
  const int w = f.width(), h = f.height();
  FlowField out(w * 2, h * 2);
  for (int y = 0; y < 2 * h; ++y) {
    // source coordinate of the upsampled pixel center
    const double sy = (y + 0.5) / 2.0 - 0.5;
    const int y0 = std::min(std::max(static_cast<int>(std::floor(sy)), 0), h - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    const double fy = std::min(std::max(sy - y0, 0.0), 1.0);
    for (int x = 0; x < 2 * w; ++x) {
      const double sx = (x + 0.5) / 2.0 - 0.5;
      const int x0 =
          std::min(std::max(static_cast<int>(std::floor(sx)), 0), w - 1);
      const int x1 = std::min(x0 + 1, w - 1);
      const double fx = std::min(std::max(sx - x0, 0.0), 1.0);
      const double w00 = (1 - fy) * (1 - fx), w01 = (1 - fy) * fx;
      const double w10 = fy * (1 - fx), w11 = fy * fx;
      out.u(y, x) = 2.0 * (w00 * f.u(y0, x0) + w01 * f.u(y0, x1) +
                           w10 * f.u(y1, x0) + w11 * f.u(y1, x1));
      out.v(y, x) = 2.0 * (w00 * f.v(y0, x0) + w01 * f.v(y0, x1) +
                           w10 * f.v(y1, x0) + w11 * f.v(y1, x1));
    }
  }
  return out;
}

WarpResult warp_image(const Grid& img, const FlowField& f) {
  const int w = static_cast<int>(img.cols()), h = static_cast<int>(img.rows());
  if (w != f.width() || h != f.height())
    throw_validation("warp_image: image and field dimensions differ");
  WarpResult out{Grid::Zero(h, w), MaskGrid::Constant(h, w, false)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double sx = x + f.u(y, x);
      const double sy = y + f.v(y, x);
      if (sx < 0 || sy < 0 || sx > w - 1 || sy > h - 1) continue;
      const int x0 = std::min(static_cast<int>(sx), w - 2 >= 0 ? w - 2 : 0);
      const int y0 = std::min(static_cast<int>(sy), h - 2 >= 0 ? h - 2 : 0);
      const int x1 = std::min(x0 + 1, w - 1);
      const int y1 = std::min(y0 + 1, h - 1);
      const double fx = sx - x0, fy = sy - y0;
      out.image(y, x) = (1 - fy) * ((1 - fx) * img(y0, x0) + fx * img(y0, x1)) +
                        fy * ((1 - fx) * img(y1, x0) + fx * img(y1, x1));
      out.valid(y, x) = true;
    }
  }
  return out;
}

}  // namespace rsfuse
