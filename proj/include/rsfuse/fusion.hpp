#pragma once

#include <array>
#include <vector>

#include "rsfuse/gyro_field.hpp"
#include "rsfuse/types.hpp"

namespace rsfuse {

/// Per-level upper bounds on the residual-flow weight. Level 1 is the finest
/// pyramid level and gets the loosest bound; coarse levels are pinned closer
/// to the gyro field.
struct BetaLadder {
  std::array<double, 5> beta{1.0, 0.9, 0.7, 0.5, 0.3};

  void validate() const;
  double upper(int level) const { return beta[level - 1]; }
  double lower(int level) const { return beta[level]; }
};

/// Dense weight grid in [lower, upper] selecting residual flow (high) versus
/// gyro motion (low) per pixel.
struct FusionMap {
  Grid m;
  int level = 1;
  double lower = 0.0, upper = 1.0;
};

/// M = beta_i + (beta_{i+1} - beta_i) * sigmoid(h), elementwise.
/// Valid for levels 1..4 (levels with a beta pair).
FusionMap constrain_map(const Grid& h, int level, const BetaLadder& ladder);

/// Raw alignment score fed to constrain_map: high where the gyro field
/// photometrically aligns the pair (residual ~ 0), strongly negative where
/// it does not.
Grid alignment_score(const Grid& img_a, const Grid& img_b, const FlowField& g);

/// Warps img_b by the gyro field, scores the photometric residual, and
/// range-maps it through constrain_map. Well-aligned background lands near the
/// gyro-favoring bound (the minimum of the level's range).
FusionMap estimate_fusion_map(const Grid& img_a, const Grid& img_b,
                              const FlowField& g, int level,
                              const BetaLadder& ladder);

/// Adds a residual map in [gamma_neg, gamma_pos] computed from masked-image
/// photometric residuals, then clamps to [0, 1]. Identical masked images
/// contribute zero residual.
FusionMap refine_fusion_map(const FusionMap& m, const Grid& img_a_masked,
                            const Grid& img_b_masked, double gamma_neg,
                            double gamma_pos);

struct ResidualFlowParams {
  int window = 21;           // least-squares window side
  int iterations = 3;        // warp iterations per level
  int levels = 3;            // internal coarse-to-fine levels
  double cond_cutoff = 1e4;  // structure-tensor condition limit
};

/// Coarse-to-fine dense local-flow refinement initialized at `init`. Pixels
/// whose local structure is ill-conditioned keep the init value.
FlowField estimate_residual_flow(const Grid& img_a, const Grid& img_b,
                                 const FlowField& init,
                                 const ResidualFlowParams& params = {});

/// Elementwise convex combination M*O + (1-M)*G.
FlowField fuse(const FlowField& o, const FlowField& g, const FusionMap& m);

struct PyramidResult {
  FlowField flow;                 // full-resolution fused flow
  std::vector<FusionMap> maps;    // per level, index 0 = finest
};

/// Coarse-to-fine pipeline: per level, downscale the rasterized gyro field,
/// estimate the fusion map, refine a residual flow initialized from the
/// upsampled previous fused flow (gyro field at the coarsest level), and fuse.
/// Image dimensions must be divisible by 2^(levels-1).
PyramidResult run_fusion_pyramid(const Grid& img_a, const Grid& img_b,
                                 const HomographyArray& gyro,
                                 const CameraIntrinsics& k,
                                 const BetaLadder& ladder, int levels = 5,
                                 const ResidualFlowParams& params = {});

/// Box-average 2x image downsample.
Grid downsample_image_2x(const Grid& img);

}  // namespace rsfuse
