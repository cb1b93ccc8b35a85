#pragma once

#include <span>
#include <vector>

#include "rsfuse/core_math.hpp"
#include "rsfuse/types.hpp"

namespace rsfuse {

/// 3x3 projective map, scale-normalized so the bottom-right entry is 1 when
/// nonzero.
using Homography = Mat3;

Homography normalize_homography(const Mat3& h);

/// Row-patch exposure model for a rolling-shutter sensor scanning rows top to
/// bottom. readout_fraction is the fraction of the frame period spent reading
/// rows; the degenerate limit readout_fraction -> 0 is a global shutter.
struct RollingShutterModel {
  enum class Anchor { StartOfExposure, Center };

  int patch_count = 14;
  double readout_fraction = 1.0;
  Anchor anchor = Anchor::StartOfExposure;

  void validate() const;

  /// Exposure time offset of image row `row` relative to the frame timestamp.
  double row_offset_ns(double row, int height, double frame_period_ns) const;
};

/// Ordered per-row-patch homographies for one frame pair, top patch first.
struct HomographyArray {
  std::vector<Homography> h;
  int width = 0, height = 0;

  int patch_count() const { return static_cast<int>(h.size()); }
  /// Center row of patch n.
  double patch_center(int n) const {
    return (n + 0.5) * static_cast<double>(height) / patch_count();
  }
};

/// Rotation-only homography H = K R K^-1, scale-normalized.
Homography rotation_homography(const CameraIntrinsics& k, const Mat3& r);

/// Per-patch relative rotations between the patch exposure times of frames a
/// and b, composed into homographies.
HomographyArray row_patch_homographies(
    const CameraIntrinsics& k, std::span<const GyroSample> samples,
    std::int64_t t_a, std::int64_t t_b, double frame_period_ns,
    const RollingShutterModel& rs,
    const AxisRemap& remap = AxisRemap::Identity());

/// Recovers the rotations of the two patches bracketing `row`, slerps at the
/// row's fractional position between patch centers, and recomposes K R K^-1.
/// Rows outside the patch-center span clamp to the end patches.
Homography smooth_homography_array(const HomographyArray& arr,
                                   const CameraIntrinsics& k, double row);

/// Dense gyro field: for every pixel, applies the slerp-smoothed per-row
/// homography and stores p' - p.
FlowField homography_array_to_field(const HomographyArray& arr,
                                    const CameraIntrinsics& k, int width,
                                    int height);

/// Field from a single homography at every pixel.
FlowField homography_to_field(const Homography& h, int width, int height);

/// Block average by a power-of-two factor; displacement values are divided by
/// the factor so pixel units rescale with resolution.
FlowField downscale_field(const FlowField& f, int factor);

/// Bilinear upsample by 2; displacement values are doubled.
FlowField upsample_field_2x(const FlowField& f);

struct WarpResult {
  Grid image;
  MaskGrid valid;
};

/// Backward warp with bilinear sampling: out(p) = img(p + f(p)). Samples
/// falling outside the image are marked invalid (value 0).
WarpResult warp_image(const Grid& img, const FlowField& f);

}  // namespace rsfuse
