#pragma once

#include <span>
#include <vector>

#include "rsfuse/fusion.hpp"
#include "rsfuse/gyro_field.hpp"
#include "rsfuse/types.hpp"

namespace rsfuse {

/// Point pair between frames a and b with a non-negative fitting weight.
struct Correspondence {
  Vec2 p = Vec2::Zero();
  Vec2 q = Vec2::Zero();
  double weight = 1.0;
};

struct HomographyEstimate {
  Homography h = Homography::Identity();
  double inlier_rms = 0.0;  // weighted reprojection RMS, pixels
  double support = 0.0;     // effective weight sum
};

/// Samples the flow on a stride grid; q = p + flow(p), weight = 1 - M so
/// gyro-aligned background dominates the fit.
std::vector<Correspondence> flow_to_correspondences(const FlowField& f,
                                                    const FusionMap& m,
                                                    int stride);

/// Weighted, Hartley-normalized DLT followed by 3 reweighted refinement
/// passes. Weights below 1e-3 are dropped. Throws on fewer than 4 effective
/// points or a rank-deficient design.
HomographyEstimate fit_weighted_homography(std::span<const Correspondence> c);

/// Projects p through h with the projective divide.
Vec2 apply_homography(const Homography& h, const Vec2& p);

struct RsFitReport {
  int inherited_patches = 0;  // patches with < 4 effective points
};

/// Per patch, fits a residual homography on that patch's rows (initialized at
/// the gyro patch homography, weights 1 - M), then smooths the residual
/// parameters along the patch axis with a quadratic adjacent-difference
/// penalty of strength lambda. Patches with too few effective points inherit
/// their gyro homography through the smoothing prior.
HomographyArray fit_rs_homography_array(const FlowField& f, const FusionMap& m,
                                        const HomographyArray& gyro,
                                        double lambda,
                                        RsFitReport* report = nullptr,
                                        int stride = 4);

/// Reruns the fusion pyramid with the fitted array in place of the raw gyro
/// array and returns the second-pass result.
PyramidResult replace_gyro_with_homography(const Grid& img_a, const Grid& img_b,
                                           const HomographyArray& fitted,
                                           const CameraIntrinsics& k,
                                           const BetaLadder& ladder,
                                           int levels = 5,
                                           const ResidualFlowParams& params = {});

}  // namespace rsfuse
